//! Plan rendering with cost estimates before execution and measured sizes
//! after it.

use std::fmt::Write as _;

use crate::cluster::{Cluster, Dataset, PartitionState, TransferLedger};
use crate::cost::{CostParams, JoinInput};
use crate::error::Result;
use crate::ingest::Query;
use crate::model::format_vars;
use crate::planner::execute::{scan_stage, EngineConfig, Execution, ScanInfo};
use crate::planner::hybrid::{choose_first, JoinOption, Operand};
use crate::planner::logical::{build_logical, LogicalPlan};
use crate::planner::physical::{
    plan_mono_brjoin, plan_multi_brjoin, plan_pjoin_strategy, PlanNode, ScanMode, Strategy,
};

/// Transfer volume of a subtree as known before execution: a number for the
/// part depending only on selection sizes, plus the sizes of intermediate
/// results it depends on, by name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SymbolicTransfer {
    pub known: u64,
    pub unknown: Vec<(u64, String)>,
}

impl SymbolicTransfer {
    fn add(&mut self, other: SymbolicTransfer) {
        self.known += other.known;
        self.unknown.extend(other.unknown);
    }

    fn add_term(&mut self, factor: u64, gamma: Option<u64>, name: String) {
        match gamma {
            Some(g) => self.known += factor * g,
            None if factor > 0 => self.unknown.push((factor, name)),
            None => {}
        }
    }

    pub fn is_exact(&self) -> bool {
        self.unknown.is_empty()
    }
}

impl std::fmt::Display for SymbolicTransfer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if self.known > 0 || self.unknown.is_empty() {
            parts.push(self.known.to_string());
        }
        for (factor, name) in &self.unknown {
            if *factor == 1 {
                parts.push(format!("Γ({name})"));
            } else {
                parts.push(format!("{factor}·Γ({name})"));
            }
        }
        f.write_str(&parts.join(" + "))
    }
}

struct Estimator<'a> {
    scan: &'a ScanInfo,
    m: usize,
    out: String,
}

/// Static view of a subtree's output.
struct Estimated {
    gamma: Option<u64>,
    partition: PartitionState,
    name: String,
    transfer: SymbolicTransfer,
}

impl Estimator<'_> {
    fn node(&mut self, plan: &PlanNode, depth: usize) -> Estimated {
        let indent = "  ".repeat(depth);
        match plan {
            PlanNode::Scan(i) => {
                let gamma = self.scan.leaf_sizes[*i];
                let partition = self.scan.leaf_partitions[*i].clone();
                let _ = writeln!(self.out, "{indent}t{}  Γ={gamma} {partition}", i + 1);
                Estimated {
                    gamma: Some(gamma),
                    partition,
                    name: format!("t{}", i + 1),
                    transfer: SymbolicTransfer::default(),
                }
            }
            PlanNode::Pjoin { vars, children } | PlanNode::Brjoin { vars, children, .. } => {
                let target = match plan {
                    PlanNode::Brjoin { target, .. } => Some(*target),
                    _ => None,
                };
                let header = self.out.len();
                let kids: Vec<Estimated> = children.iter().map(|c| self.node(c, depth + 1)).collect();
                let mut own = SymbolicTransfer::default();
                let partition = match target {
                    None => {
                        for k in &kids {
                            if !(k.partition.is_keyed_on(vars) || k.partition.is_replicated()) {
                                own.add_term(1, k.gamma, k.name.clone());
                            }
                        }
                        PartitionState::Keyed(vars.clone())
                    }
                    Some(t) => {
                        for (i, k) in kids.iter().enumerate() {
                            if i != t && !k.partition.is_replicated() {
                                own.add_term(self.m as u64 - 1, k.gamma, k.name.clone());
                            }
                        }
                        kids[t].partition.clone()
                    }
                };
                let name = plan.to_string().replace('*', "");
                let line = format!("{indent}{}  {partition}  moves {own}\n", plan_label(plan));
                self.out.insert_str(header, &line);
                let mut transfer = own;
                for k in kids {
                    transfer.add(k.transfer);
                }
                Estimated { gamma: None, partition, name, transfer }
            }
            PlanNode::Cross { children } => {
                let header = self.out.len();
                let kids: Vec<Estimated> = children.iter().map(|c| self.node(c, depth + 1)).collect();
                let mut transfer = SymbolicTransfer::default();
                let names: Vec<String> = kids.iter().map(|k| k.name.clone()).collect();
                transfer.unknown.push((self.m as u64 - 1, format!("all but the largest of {}", names.join(", "))));
                self.out.insert_str(header, &format!("{indent}Cross  broadcast all but the largest input\n"));
                for k in kids {
                    transfer.add(k.transfer);
                }
                Estimated { gamma: None, partition: PartitionState::Random, name: plan.to_string(), transfer }
            }
        }
    }
}

fn plan_label(plan: &PlanNode) -> String {
    match plan {
        PlanNode::Scan(i) => format!("t{}", i + 1),
        PlanNode::Pjoin { vars, .. } => format!("Pjoin_{{{}}}", format_vars(vars)),
        PlanNode::Brjoin { vars, target, .. } => format!("Brjoin_{{{}}} target=#{}", format_vars(vars), target + 1),
        PlanNode::Cross { .. } => "Cross".into(),
    }
}

/// Estimated transfer of a static plan, from measured selection sizes.
pub fn estimate_transfer(plan: &PlanNode, scan: &ScanInfo, m: usize) -> SymbolicTransfer {
    let mut est = Estimator { scan, m, out: String::new() };
    est.node(plan, 0).transfer
}

fn static_plan(strategy: Strategy, logical: &LogicalPlan, sizes: &[u64]) -> PlanNode {
    match strategy {
        Strategy::Pjoin => plan_pjoin_strategy(logical),
        Strategy::MonoBr => plan_mono_brjoin(logical, sizes),
        Strategy::MultiBr => plan_multi_brjoin(logical, sizes),
        Strategy::Hybrid => unreachable!("hybrid plans are built during execution"),
    }
}

fn access_line(scan: &ScanInfo, p: &CostParams) -> String {
    let cost = scan.cost(p);
    match scan.mode {
        ScanMode::Individual => format!(
            "access: {}·Γ(D) = {}·{} tuples, cost {}",
            scan.patterns, scan.patterns, scan.dataset_size, cost.access
        ),
        ScanMode::Merged => format!(
            "access (merged): Γ(D) + {}·Γ(S) = {} + {}·{} tuples, cost {}",
            scan.patterns,
            scan.dataset_size,
            scan.patterns,
            scan.subset_size.unwrap_or(0),
            cost.access
        ),
    }
}

/// Explains `strategy` on `query`. Selections are evaluated to measure their
/// sizes; joins are not executed. For the hybrid strategy only the first
/// join can be decided this way.
pub fn explain(
    cluster: &Cluster,
    dataset: &Dataset,
    query: &Query,
    strategy: Strategy,
    config: &EngineConfig,
) -> Result<String> {
    let params = config.params(cluster.nodes())?;
    let logical = build_logical(query, config.allow_cross_product)?;
    let mode = config.scan_mode(strategy, query.patterns.len());
    let (_, scan) = scan_stage(cluster, dataset, query, mode, &mut TransferLedger::new())?;
    let mut out = String::new();
    let _ = writeln!(out, "strategy: {strategy}");
    let _ = writeln!(out, "  {}", access_line(&scan, &params));
    for (i, p) in query.patterns.iter().enumerate() {
        let _ = writeln!(out, "  t{} = {p}  Γ={} {}", i + 1, scan.leaf_sizes[i], scan.leaf_partitions[i]);
    }
    if strategy == Strategy::Hybrid {
        explain_hybrid_first_step(&mut out, query, &scan, &params);
        return Ok(out);
    }
    let plan = static_plan(strategy, &logical, &scan.leaf_sizes);
    let mut est = Estimator { scan: &scan, m: cluster.nodes(), out: String::new() };
    let transfer = est.node(&plan, 2).transfer;
    let _ = writeln!(out, "  plan: {plan}");
    out.push_str(&est.out);
    let scale = if params.theta_comm == 1.0 { String::new() } else { format!("{} × ", params.theta_comm) };
    let _ = writeln!(out, "  transfer: {scale}({transfer})");
    if transfer.is_exact() {
        let _ = writeln!(
            out,
            "  estimated cost: access {} + transfer {}",
            scan.cost(&params).access,
            params.theta_comm * transfer.known as f64
        );
    } else {
        let _ = writeln!(
            out,
            "  estimated cost: access {} + transfer ≥ {} (intermediate sizes known after execution)",
            scan.cost(&params).access,
            params.theta_comm * transfer.known as f64
        );
    }
    Ok(out)
}

fn explain_hybrid_first_step(out: &mut String, query: &Query, scan: &ScanInfo, p: &CostParams) {
    if query.patterns.len() < 2 {
        let _ = writeln!(out, "  plan: t1 (single selection)");
        return;
    }
    let operands: Vec<Operand> = (0..query.patterns.len())
        .map(|i| Operand {
            index: i,
            input: JoinInput::leaf(scan.leaf_sizes[i], scan.leaf_partitions[i].clone()),
            vars: query.patterns[i].vars(),
        })
        .collect();
    let mut n = 0;
    match choose_first(&operands, p, &mut n) {
        Some(c) => {
            let left = format!("t{}", c.left.map_or(0, |l| l + 1));
            let right = format!("t{}", c.right + 1);
            let step = match c.option {
                JoinOption::Pjoin => format!("Pjoin_{{{}}}({left}, {right})", format_vars(&c.vars)),
                JoinOption::BroadcastLeft => format!("Brjoin_{{{}}}({left}, {right}*)", format_vars(&c.vars)),
                JoinOption::BroadcastRight => format!("Brjoin_{{{}}}({left}*, {right})", format_vars(&c.vars)),
            };
            let _ = writeln!(out, "  first join: {step}  estimated transfer cost {}", c.cost);
            let _ = writeln!(out, "  ({n} candidates costed; later joins depend on measured intermediate sizes)");
        }
        None => {
            let _ = writeln!(out, "  no connected pair: patterns are combined by cross product");
        }
    }
}

/// Executed plan with measured sizes, followed by the ledger entries.
pub fn render_execution(ex: &Execution) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "strategy: {}", ex.strategy);
    let _ = writeln!(out, "  plan: {}", ex.plan);
    for line in ex.trace.render_tree(ex.params.m).lines() {
        let _ = writeln!(out, "  {line}");
    }
    let _ = writeln!(out, "  ledger:");
    for op in ex.ledger.operators() {
        let c = op.counters;
        let _ = writeln!(
            out,
            "    #{} {}: scanned={} shuffled={} (actual {}) broadcast={}",
            op.id, op.label, c.scanned, c.shuffled_modeled, c.shuffled_actual, c.broadcast
        );
    }
    let cost = ex.analytic_cost();
    let _ = writeln!(out, "  cost: {cost}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::BaseKey;
    use crate::ingest::parse_query;
    use crate::planner::execute::execute_query;
    use crate::workload::{generate, ShapeRequest, WorkloadSpec};

    fn q8_setup() -> (Cluster, Dataset, Query) {
        let w = generate(&WorkloadSpec::new(ShapeRequest::Snowflake, 5, 10)).unwrap();
        let cluster = Cluster::new(4).unwrap();
        let ds = cluster.load_partitioned(w.triples, BaseKey::Subject);
        (cluster, ds, w.query)
    }

    #[test]
    fn pjoin_explain_names_the_shuffled_terms() {
        let (cluster, ds, q) = q8_setup();
        let text = explain(&cluster, &ds, &q, Strategy::Pjoin, &EngineConfig::default()).unwrap();
        assert!(text.contains("transfer: (120 + Γ(Pjoin_{?y}(t2, t3, t4)))"), "{text}");
    }

    #[test]
    fn mono_explain_is_exact() {
        let (cluster, ds, q) = q8_setup();
        let text = explain(&cluster, &ds, &q, Strategy::MonoBr, &EngineConfig::default()).unwrap();
        // 3 × (120 + 12 + 120 + 4)
        assert!(text.contains("transfer: (768)"), "{text}");
    }

    #[test]
    fn hybrid_explain_shows_first_step() {
        let (cluster, ds, q) = q8_setup();
        let text = explain(&cluster, &ds, &q, Strategy::Hybrid, &EngineConfig::default()).unwrap();
        assert!(text.contains("first join: Pjoin_{?y}(t2, t4)"), "{text}");
    }

    #[test]
    fn star_explain_has_zero_transfer() {
        let cluster = Cluster::new(4).unwrap();
        let w = generate(&WorkloadSpec::new(ShapeRequest::Star, 4, 20)).unwrap();
        let ds = cluster.load_partitioned(w.triples, BaseKey::Subject);
        let text = explain(&cluster, &ds, &w.query, Strategy::Pjoin, &EngineConfig::default()).unwrap();
        assert!(text.contains("transfer: (0)"), "{text}");
    }

    #[test]
    fn execution_rendering_lists_operators() {
        let (cluster, ds, q) = q8_setup();
        let ex = execute_query(&cluster, &ds, &q, Strategy::Hybrid, &EngineConfig::default()).unwrap();
        let text = render_execution(&ex);
        assert!(text.contains("ledger:"));
        assert!(text.contains("Brjoin_{?y}"), "{text}");
        let single = parse_query("SELECT ?x WHERE { ?x <p> ?y }").unwrap();
        assert!(explain(&cluster, &ds, &single, Strategy::Hybrid, &EngineConfig::default())
            .unwrap()
            .contains("single selection"));
    }
}
