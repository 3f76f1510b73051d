use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, Dataset, DistRelation, PartitionState, TransferLedger};
use crate::cost::{
    brjoin_broadcast, cost_merged_selection, cost_selection, pjoin_shuffled, CostEstimate, CostParams, JoinInput,
};
use crate::error::{Error, Result};
use crate::exec::{brjoin, cross_product, cross_product_target, merged_selection_sized, pjoin, triple_selection};
use crate::ingest::Query;
use crate::model::{format_vars, Relation, VarSet};
use crate::planner::hybrid;
use crate::planner::logical::build_logical;
use crate::planner::physical::{
    plan_mono_brjoin, plan_multi_brjoin, plan_pjoin_strategy, PhysicalPlan, PlanNode, ScanMode, Strategy,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeScan {
    On,
    Off,
    /// Merge whenever there are at least two patterns.
    #[default]
    Auto,
}

impl std::str::FromStr for MergeScan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(MergeScan::On),
            "off" => Ok(MergeScan::Off),
            "auto" => Ok(MergeScan::Auto),
            other => Err(Error::Config(format!("unknown merge-scan mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub theta_acc: f64,
    pub theta_comm: f64,
    pub merge_scan: MergeScan,
    pub allow_cross_product: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { theta_acc: 1.0, theta_comm: 1.0, merge_scan: MergeScan::Auto, allow_cross_product: false }
    }
}

impl EngineConfig {
    pub fn params(&self, m: usize) -> Result<CostParams> {
        CostParams::new(self.theta_acc, self.theta_comm, m)
    }

    /// Only the hybrid strategy merges scans; a single pattern never does.
    pub fn scan_mode(&self, strategy: Strategy, n: usize) -> ScanMode {
        match (strategy, self.merge_scan) {
            (Strategy::Hybrid, MergeScan::On | MergeScan::Auto) if n >= 2 => ScanMode::Merged,
            _ => ScanMode::Individual,
        }
    }
}

/// What the scan stage read.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScanInfo {
    pub mode: ScanMode,
    pub patterns: usize,
    pub dataset_size: u64,
    /// Triples matching any pattern; only measured for merged scans.
    pub subset_size: Option<u64>,
    pub leaf_sizes: Vec<u64>,
    pub leaf_partitions: Vec<PartitionState>,
    pub operators: Vec<usize>,
}

impl ScanInfo {
    pub fn cost(&self, p: &CostParams) -> CostEstimate {
        match self.mode {
            ScanMode::Individual => cost_selection(self.patterns, self.dataset_size, p),
            ScanMode::Merged => {
                cost_merged_selection(self.patterns, self.dataset_size, self.subset_size.unwrap_or(0), p)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExecKind {
    Scan(usize),
    Pjoin(VarSet),
    Brjoin { vars: VarSet, target: usize },
    Cross { target: usize },
}

/// Executed plan node with the measured size and placement of its output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecNode {
    pub kind: ExecKind,
    pub gamma: u64,
    pub partition: PartitionState,
    /// Ledger entries charged by this node (several for fused joins).
    pub operators: Vec<usize>,
    pub children: Vec<ExecNode>,
}

impl ExecNode {
    fn inputs(&self, p: &CostParams) -> Vec<JoinInput> {
        self.children
            .iter()
            .map(|c| {
                JoinInput::new(c.gamma, c.partition.clone(), CostEstimate { access: 0.0, transfer: c.transfer(p) })
            })
            .collect()
    }

    /// Transfer cost of this subtree computed from the measured sizes.
    pub fn transfer(&self, p: &CostParams) -> f64 {
        let inputs = self.inputs(p);
        let below: f64 = inputs.iter().map(|i| i.subtree.transfer).sum();
        below + p.theta_comm * self.own_transfer_tuples(p.m) as f64
    }

    /// Tuples this node moves itself, per the cost model.
    pub fn own_transfer_tuples(&self, m: usize) -> u64 {
        let inputs: Vec<JoinInput> =
            self.children.iter().map(|c| JoinInput::leaf(c.gamma, c.partition.clone())).collect();
        match &self.kind {
            ExecKind::Scan(_) => 0,
            ExecKind::Pjoin(v) => pjoin_shuffled(&inputs, v),
            ExecKind::Brjoin { target, .. } | ExecKind::Cross { target } => brjoin_broadcast(&inputs, *target, m),
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ExecKind::Scan(i) => format!("t{}", i + 1),
            ExecKind::Pjoin(v) => format!("Pjoin_{{{}}}", format_vars(v)),
            ExecKind::Brjoin { vars, .. } => format!("Brjoin_{{{}}}", format_vars(vars)),
            ExecKind::Cross { .. } => "Cross".into(),
        }
    }

    pub fn to_plan(&self) -> PlanNode {
        let children = || self.children.iter().map(ExecNode::to_plan).collect();
        match &self.kind {
            ExecKind::Scan(i) => PlanNode::Scan(*i),
            ExecKind::Pjoin(v) => PlanNode::Pjoin { vars: v.clone(), children: children() },
            ExecKind::Brjoin { vars, target } => {
                PlanNode::Brjoin { vars: vars.clone(), children: children(), target: *target }
            }
            ExecKind::Cross { .. } => PlanNode::Cross { children: children() },
        }
    }

    fn render(&self, out: &mut String, depth: usize, m: usize) {
        use std::fmt::Write as _;
        let target = match self.kind {
            ExecKind::Brjoin { target, .. } | ExecKind::Cross { target } => Some(target),
            _ => None,
        };
        let _ = write!(out, "{}{}  Γ={} {}", "  ".repeat(depth), self.label(), self.gamma, self.partition);
        if !self.children.is_empty() {
            let _ = write!(out, " moved={}", self.own_transfer_tuples(m));
        }
        out.push('\n');
        for (i, c) in self.children.iter().enumerate() {
            if Some(i) == target {
                let _ = writeln!(out, "{}(target)", "  ".repeat(depth + 1));
            }
            c.render(out, depth + 1, m);
        }
    }

    /// Indented tree with measured sizes and per-node transfer.
    pub fn render_tree(&self, m: usize) -> String {
        let mut out = String::new();
        self.render(&mut out, 0, m);
        out
    }
}

/// Outcome of evaluating a query with one strategy.
#[derive(Clone, Debug)]
pub struct Execution {
    pub strategy: Strategy,
    pub params: CostParams,
    /// Solutions projected on the query's selected variables.
    pub result: Relation,
    pub plan: PhysicalPlan,
    pub trace: ExecNode,
    pub scan: ScanInfo,
    pub ledger: TransferLedger,
    /// Candidate joins costed by the hybrid planner (0 for static strategies).
    pub candidates_evaluated: usize,
}

impl Execution {
    /// Cost model applied to the measured sizes of the executed plan.
    pub fn analytic_cost(&self) -> CostEstimate {
        CostEstimate { access: self.scan.cost(&self.params).access, transfer: self.trace.transfer(&self.params) }
    }
}

impl fmt::Display for Execution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.strategy, self.plan)
    }
}

/// Runs the scan stage and returns one relation per pattern.
pub fn scan_stage(
    cluster: &Cluster,
    dataset: &Dataset,
    query: &Query,
    mode: ScanMode,
    ledger: &mut TransferLedger,
) -> Result<(Vec<DistRelation>, ScanInfo)> {
    let patterns = &query.patterns;
    let (leaves, subset_size, operators) = match mode {
        ScanMode::Individual => {
            let mut leaves = Vec::with_capacity(patterns.len());
            let mut ops = Vec::with_capacity(patterns.len());
            for (i, p) in patterns.iter().enumerate() {
                ops.push(ledger.operators().len());
                leaves.push(
                    ledger.with_operator(format!("scan t{}", i + 1), |l| triple_selection(cluster, dataset, p, l))?,
                );
            }
            (leaves, None, ops)
        }
        ScanMode::Merged => {
            let op = ledger.operators().len();
            let (leaves, subset) = ledger.with_operator(format!("merged scan t1..t{}", patterns.len()), |l| {
                merged_selection_sized(cluster, dataset, patterns, l)
            })?;
            (leaves, Some(subset), vec![op])
        }
    };
    let info = ScanInfo {
        mode,
        patterns: patterns.len(),
        dataset_size: dataset.len(),
        subset_size,
        leaf_sizes: leaves.iter().map(DistRelation::gamma).collect(),
        leaf_partitions: leaves.iter().map(|r| r.partition().clone()).collect(),
        operators,
    };
    Ok((leaves, info))
}

fn leaf_node(i: usize, rel: &DistRelation, op: Option<usize>) -> ExecNode {
    ExecNode {
        kind: ExecKind::Scan(i),
        gamma: rel.gamma(),
        partition: rel.partition().clone(),
        operators: op.into_iter().collect(),
        children: Vec::new(),
    }
}

pub(crate) struct Runtime<'a> {
    pub cluster: &'a Cluster,
    pub leaves: &'a [DistRelation],
    pub leaf_ops: Vec<Option<usize>>,
    pub ledger: &'a mut TransferLedger,
}

impl Runtime<'_> {
    pub fn leaf(&self, i: usize) -> (DistRelation, ExecNode) {
        let rel = self.leaves[i].clone();
        let node = leaf_node(i, &rel, self.leaf_ops[i]);
        (rel, node)
    }

    /// Runs one join operator in its own ledger entry.
    pub fn join(&mut self, kind: ExecKind, inputs: Vec<(DistRelation, ExecNode)>) -> Result<(DistRelation, ExecNode)> {
        let (rels, children): (Vec<DistRelation>, Vec<ExecNode>) = inputs.into_iter().unzip();
        let op = self.ledger.operators().len();
        let cluster = self.cluster;
        let label = ExecNode {
            kind: kind.clone(),
            gamma: 0,
            partition: PartitionState::Random,
            operators: vec![],
            children: vec![],
        }
        .label();
        let (rel, kind) = self.ledger.with_operator(label, |l| -> Result<_> {
            Ok(match kind {
                ExecKind::Scan(_) => unreachable!("scans come from the scan stage"),
                ExecKind::Pjoin(v) => (pjoin(cluster, rels, &v, l)?, ExecKind::Pjoin(v)),
                ExecKind::Brjoin { vars, target } => {
                    (brjoin(cluster, rels, &vars, target, l)?, ExecKind::Brjoin { vars, target })
                }
                ExecKind::Cross { .. } => {
                    let gammas: Vec<u64> = rels.iter().map(DistRelation::gamma).collect();
                    let target = cross_product_target(&gammas);
                    (cross_product(cluster, rels, l)?, ExecKind::Cross { target })
                }
            })
        })?;
        let node =
            ExecNode { kind, gamma: rel.gamma(), partition: rel.partition().clone(), operators: vec![op], children };
        Ok((rel, node))
    }

    fn run_plan(&mut self, plan: &PlanNode) -> Result<(DistRelation, ExecNode)> {
        match plan {
            PlanNode::Scan(i) => Ok(self.leaf(*i)),
            PlanNode::Pjoin { vars, children } => {
                let inputs = children.iter().map(|c| self.run_plan(c)).collect::<Result<Vec<_>>>()?;
                self.join(ExecKind::Pjoin(vars.clone()), inputs)
            }
            PlanNode::Brjoin { vars, children, target } => {
                let inputs = children.iter().map(|c| self.run_plan(c)).collect::<Result<Vec<_>>>()?;
                self.join(ExecKind::Brjoin { vars: vars.clone(), target: *target }, inputs)
            }
            PlanNode::Cross { children } => {
                let inputs = children.iter().map(|c| self.run_plan(c)).collect::<Result<Vec<_>>>()?;
                self.join(ExecKind::Cross { target: 0 }, inputs)
            }
        }
    }
}

/// Evaluates `query` over `dataset` with `strategy`.
///
/// Every strategy first runs the scan stage and measures the selection
/// sizes. The static strategies then plan from the logical plan and those
/// sizes; the hybrid strategy plans and executes one join at a time.
pub fn execute_query(
    cluster: &Cluster,
    dataset: &Dataset,
    query: &Query,
    strategy: Strategy,
    config: &EngineConfig,
) -> Result<Execution> {
    let params = config.params(cluster.nodes())?;
    let logical = build_logical(query, config.allow_cross_product)?;
    let mode = config.scan_mode(strategy, query.patterns.len());
    let mut ledger = TransferLedger::new();
    let (leaves, scan) = scan_stage(cluster, dataset, query, mode, &mut ledger)?;
    let leaf_ops = match mode {
        ScanMode::Individual => scan.operators.iter().copied().map(Some).collect(),
        ScanMode::Merged => vec![scan.operators.first().copied(); leaves.len()],
    };
    let mut rt = Runtime { cluster, leaves: &leaves, leaf_ops, ledger: &mut ledger };
    let mut candidates = 0;
    let (rel, trace) = match strategy {
        Strategy::Pjoin => rt.run_plan(&plan_pjoin_strategy(&logical))?,
        Strategy::MonoBr => rt.run_plan(&plan_mono_brjoin(&logical, &scan.leaf_sizes))?,
        Strategy::MultiBr => rt.run_plan(&plan_multi_brjoin(&logical, &scan.leaf_sizes))?,
        Strategy::Hybrid => {
            let out = hybrid::run(&mut rt, query, &logical, &params)?;
            candidates = out.candidates;
            (out.relation, out.trace)
        }
    };
    let plan = PhysicalPlan { scan: mode, root: trace.to_plan() };
    debug_assert_eq!(plan.root.validate(query.patterns.len()), Ok(()));
    let result = rel.collect().project(&query.select)?;
    Ok(Execution { strategy, params, result, plan, trace, scan, ledger, candidates_evaluated: candidates })
}
