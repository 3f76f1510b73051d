use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{format_vars, VarSet};
use crate::planner::logical::LogicalPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Pjoin,
    MonoBr,
    MultiBr,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Pjoin, Strategy::MonoBr, Strategy::MultiBr, Strategy::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Pjoin => "pjoin",
            Strategy::MonoBr => "mono-br",
            Strategy::MultiBr => "multi-br",
            Strategy::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

/// How the base data is read before joining.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    /// One full scan per pattern.
    Individual,
    /// One full scan for the union of the patterns, then one pass per pattern
    /// over the matching subset.
    Merged,
}

/// Physical join tree. Leaves are pattern indices whose relations come from
/// the scan stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlanNode {
    Scan(usize),
    Pjoin {
        vars: VarSet,
        children: Vec<PlanNode>,
    },
    Brjoin {
        vars: VarSet,
        children: Vec<PlanNode>,
        target: usize,
    },
    /// Join without shared variables: everything but the largest input is
    /// broadcast. The target is picked at run time.
    Cross {
        children: Vec<PlanNode>,
    },
}

impl PlanNode {
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            PlanNode::Scan(i) => out.push(*i),
            PlanNode::Pjoin { children, .. } | PlanNode::Brjoin { children, .. } | PlanNode::Cross { children } => {
                children.iter().for_each(|c| c.collect_leaves(out))
            }
        }
    }

    pub fn children(&self) -> &[PlanNode] {
        match self {
            PlanNode::Scan(_) => &[],
            PlanNode::Pjoin { children, .. } | PlanNode::Brjoin { children, .. } | PlanNode::Cross { children } => {
                children
            }
        }
    }

    /// Leaves are exactly `0..n` once each, join keys are non-empty and
    /// broadcast targets are in range.
    pub fn validate(&self, n: usize) -> std::result::Result<(), String> {
        let mut leaves = self.leaves();
        leaves.sort_unstable();
        if leaves != (0..n).collect::<Vec<_>>() {
            return Err(format!("plan leaves {leaves:?} do not cover {n} patterns once"));
        }
        self.validate_nodes()
    }

    fn validate_nodes(&self) -> std::result::Result<(), String> {
        match self {
            PlanNode::Scan(_) => Ok(()),
            PlanNode::Pjoin { vars, children } | PlanNode::Brjoin { vars, children, .. } if vars.is_empty() => {
                Err(format!("join with empty key over {} inputs", children.len()))
            }
            PlanNode::Brjoin { children, target, .. } if *target >= children.len() => {
                Err(format!("target {target} out of range for {} inputs", children.len()))
            }
            _ if self.children().is_empty() => Err("join without inputs".into()),
            _ => self.children().iter().try_for_each(PlanNode::validate_nodes),
        }
    }
}

fn write_children(f: &mut fmt::Formatter<'_>, children: &[PlanNode], target: Option<usize>) -> fmt::Result {
    f.write_str("(")?;
    for (i, c) in children.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{c}")?;
        if Some(i) == target {
            f.write_str("*")?;
        }
    }
    f.write_str(")")
}

/// Compact form, e.g. `Pjoin_{?x}(Brjoin_{?y}(t2, t4, t3*), t1, t5)`; `*`
/// marks the broadcast target.
impl fmt::Display for PlanNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanNode::Scan(i) => write!(f, "t{}", i + 1),
            PlanNode::Pjoin { vars, children } => {
                write!(f, "Pjoin_{{{}}}", format_vars(vars))?;
                write_children(f, children, None)
            }
            PlanNode::Brjoin { vars, children, target } => {
                write!(f, "Brjoin_{{{}}}", format_vars(vars))?;
                write_children(f, children, Some(*target))
            }
            PlanNode::Cross { children } => {
                f.write_str("Cross")?;
                write_children(f, children, None)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhysicalPlan {
    pub scan: ScanMode,
    pub root: PlanNode,
}

impl fmt::Display for PhysicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scan {
            ScanMode::Individual => write!(f, "{}", self.root),
            ScanMode::Merged => write!(f, "{} [merged scan]", self.root),
        }
    }
}

/// Every logical join becomes a partitioned join; a join nested directly in
/// one on the same variables is folded into its parent.
pub fn plan_pjoin_strategy(lp: &LogicalPlan) -> PlanNode {
    match lp {
        LogicalPlan::Leaf(i) => PlanNode::Scan(*i),
        LogicalPlan::Join { vars, children } if vars.is_empty() => {
            PlanNode::Cross { children: children.iter().map(plan_pjoin_strategy).collect() }
        }
        LogicalPlan::Join { vars, children } => {
            let mut flat = Vec::new();
            for child in children.iter().map(plan_pjoin_strategy) {
                match child {
                    PlanNode::Pjoin { vars: inner, children: grand } if inner == *vars => flat.extend(grand),
                    other => flat.push(other),
                }
            }
            PlanNode::Pjoin { vars: vars.clone(), children: flat }
        }
    }
}

fn join_vars_union(lp: &LogicalPlan, out: &mut VarSet) {
    if let LogicalPlan::Join { vars, children } = lp {
        out.extend(vars.iter().cloned());
        children.iter().for_each(|c| join_vars_union(c, out));
    }
}

/// Largest measured size, ties to the smallest pattern index.
fn largest(leaves: &[usize], sizes: &[u64]) -> usize {
    let mut best = 0;
    for (pos, &leaf) in leaves.iter().enumerate() {
        let current = leaves[best];
        if sizes[leaf] > sizes[current] || (sizes[leaf] == sizes[current] && leaf < current) {
            best = pos;
        }
    }
    best
}

/// One broadcast join over all patterns of each connected component, keyed
/// on every join variable, keeping the largest pattern in place.
pub fn plan_mono_brjoin(lp: &LogicalPlan, sizes: &[u64]) -> PlanNode {
    match lp {
        LogicalPlan::Leaf(i) => PlanNode::Scan(*i),
        LogicalPlan::Join { vars, children } if vars.is_empty() => {
            PlanNode::Cross { children: children.iter().map(|c| plan_mono_brjoin(c, sizes)).collect() }
        }
        LogicalPlan::Join { .. } => {
            let leaves = lp.leaves();
            let mut vars = VarSet::new();
            join_vars_union(lp, &mut vars);
            let target = largest(&leaves, sizes);
            PlanNode::Brjoin { vars, children: leaves.into_iter().map(PlanNode::Scan).collect(), target }
        }
    }
}

/// Left-deep binary broadcast joins following the logical grouping. Within a
/// group, nested joins come first, then patterns by increasing size (ties by
/// index). Each step broadcasts the smaller operand, the left one on ties; an
/// intermediate result is estimated as its smallest input.
pub fn plan_multi_brjoin(lp: &LogicalPlan, sizes: &[u64]) -> PlanNode {
    multi(lp, sizes).0
}

fn multi(lp: &LogicalPlan, sizes: &[u64]) -> (PlanNode, u64) {
    match lp {
        LogicalPlan::Leaf(i) => (PlanNode::Scan(*i), sizes[*i]),
        LogicalPlan::Join { vars, children } if vars.is_empty() => {
            let planned: Vec<(PlanNode, u64)> = children.iter().map(|c| multi(c, sizes)).collect();
            let est = planned.iter().map(|(_, e)| *e).max().unwrap_or(0);
            (PlanNode::Cross { children: planned.into_iter().map(|(p, _)| p).collect() }, est)
        }
        LogicalPlan::Join { vars, children } => {
            let mut nested: Vec<(PlanNode, u64)> = Vec::new();
            let mut leaves: Vec<usize> = Vec::new();
            for c in children {
                match c {
                    LogicalPlan::Leaf(i) => leaves.push(*i),
                    join => nested.push(multi(join, sizes)),
                }
            }
            leaves.sort_by_key(|&i| (sizes[i], i));
            let mut operands = nested.into_iter().chain(leaves.into_iter().map(|i| (PlanNode::Scan(i), sizes[i])));
            let (mut acc, mut acc_est) = operands.next().expect("joins have inputs");
            for (next, est) in operands {
                let target = if acc_est <= est { 1 } else { 0 };
                acc = PlanNode::Brjoin { vars: vars.clone(), children: vec![acc, next], target };
                acc_est = acc_est.min(est);
            }
            (acc, acc_est)
        }
    }
}
