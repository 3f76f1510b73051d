//! Greedy plan construction interleaved with execution: pick the cheapest
//! first join between two patterns, run it, then repeatedly add the connected
//! pattern whose join with the accumulated result is cheapest, using the
//! measured size of that result.

use std::cmp::Ordering;

use crate::cluster::DistRelation;
use crate::cost::{cost_brjoin, cost_pjoin, CostParams, JoinInput};
use crate::error::Result;
use crate::ingest::Query;
use crate::model::VarSet;
use crate::planner::execute::{ExecKind, ExecNode, Runtime};
use crate::planner::logical::LogicalPlan;

/// How two operands are joined. `left` is the accumulated result (or the
/// earlier pattern of the first pair), `right` the pattern being added.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum JoinOption {
    Pjoin,
    /// Broadcast `left`, keep `right` in place.
    BroadcastLeft,
    /// Broadcast `right`, keep `left` in place.
    BroadcastRight,
}

impl JoinOption {
    const ALL: [JoinOption; 3] = [JoinOption::Pjoin, JoinOption::BroadcastLeft, JoinOption::BroadcastRight];

    fn kind(self, vars: &VarSet) -> ExecKind {
        match self {
            JoinOption::Pjoin => ExecKind::Pjoin(vars.clone()),
            JoinOption::BroadcastLeft => ExecKind::Brjoin { vars: vars.clone(), target: 1 },
            JoinOption::BroadcastRight => ExecKind::Brjoin { vars: vars.clone(), target: 0 },
        }
    }
}

/// A costed candidate join.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    /// Pattern index of the left operand for a first pair, `None` when the
    /// left operand is the accumulated result.
    pub left: Option<usize>,
    pub right: usize,
    pub vars: VarSet,
    pub option: JoinOption,
    pub cost: f64,
}

/// One pattern as the greedy planner sees it.
#[derive(Clone, Debug)]
pub struct Operand {
    pub index: usize,
    pub input: JoinInput,
    pub vars: VarSet,
}

fn option_cost(left: &JoinInput, right: &JoinInput, vars: &VarSet, option: JoinOption, p: &CostParams) -> f64 {
    let inputs = [left.clone(), right.clone()];
    match option {
        JoinOption::Pjoin => cost_pjoin(&inputs, vars, p).total(),
        JoinOption::BroadcastLeft => cost_brjoin(&inputs, 1, p).expect("two inputs").total(),
        JoinOption::BroadcastRight => cost_brjoin(&inputs, 0, p).expect("two inputs").total(),
    }
}

fn cmp_cost(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Cheapest join between two connected patterns. Ties go to the pair with
/// the smaller combined size, then to the earlier pair, then to Pjoin.
pub fn choose_first(operands: &[Operand], p: &CostParams, evaluated: &mut usize) -> Option<Candidate> {
    let mut best: Option<(Candidate, u64)> = None;
    for (a, left) in operands.iter().enumerate() {
        for right in &operands[a + 1..] {
            let vars: VarSet = left.vars.intersection(&right.vars).cloned().collect();
            if vars.is_empty() {
                continue;
            }
            let pair_size = left.input.gamma + right.input.gamma;
            for option in JoinOption::ALL {
                *evaluated += 1;
                let cost = option_cost(&left.input, &right.input, &vars, option, p);
                let better = match &best {
                    None => true,
                    Some((b, size)) => cmp_cost(cost, b.cost).then(pair_size.cmp(size)) == Ordering::Less,
                };
                if better {
                    let cand =
                        Candidate { left: Some(left.index), right: right.index, vars: vars.clone(), option, cost };
                    best = Some((cand, pair_size));
                }
            }
        }
    }
    best.map(|(c, _)| c)
}

/// Cheapest way to add one connected pattern to the accumulated result. Ties
/// go to the smaller pattern, then the earlier one, then to Pjoin.
pub fn choose_next(
    acc: &JoinInput,
    acc_vars: &VarSet,
    remaining: &[Operand],
    p: &CostParams,
    evaluated: &mut usize,
) -> Option<Candidate> {
    let mut best: Option<(Candidate, u64)> = None;
    for right in remaining {
        let vars: VarSet = acc_vars.intersection(&right.vars).cloned().collect();
        if vars.is_empty() {
            continue;
        }
        for option in JoinOption::ALL {
            *evaluated += 1;
            let cost = option_cost(acc, &right.input, &vars, option, p);
            let better = match &best {
                None => true,
                Some((b, size)) => cmp_cost(cost, b.cost).then(right.input.gamma.cmp(size)) == Ordering::Less,
            };
            if better {
                let cand = Candidate { left: None, right: right.index, vars: vars.clone(), option, cost };
                best = Some((cand, right.input.gamma));
            }
        }
    }
    best.map(|(c, _)| c)
}

pub(crate) struct Outcome {
    pub relation: DistRelation,
    pub trace: ExecNode,
    pub candidates: usize,
}

pub(crate) fn operands(rt: &Runtime<'_>, query: &Query, indices: &[usize]) -> Vec<Operand> {
    indices
        .iter()
        .map(|&i| Operand {
            index: i,
            input: JoinInput::leaf(rt.leaves[i].gamma(), rt.leaves[i].partition().clone()),
            vars: query.patterns[i].vars(),
        })
        .collect()
}

pub(crate) fn run(rt: &mut Runtime<'_>, query: &Query, logical: &LogicalPlan, p: &CostParams) -> Result<Outcome> {
    match logical {
        LogicalPlan::Join { vars, children } if vars.is_empty() => {
            let mut candidates = 0;
            let mut parts = Vec::with_capacity(children.len());
            for child in children {
                let out = greedy(rt, query, &child.leaves(), p)?;
                candidates += out.candidates;
                parts.push((out.relation, out.trace));
            }
            let (relation, trace) = rt.join(ExecKind::Cross { target: 0 }, parts)?;
            Ok(Outcome { relation, trace, candidates })
        }
        _ => greedy(rt, query, &logical.leaves(), p),
    }
}

fn greedy(rt: &mut Runtime<'_>, query: &Query, indices: &[usize], p: &CostParams) -> Result<Outcome> {
    let mut indices = indices.to_vec();
    indices.sort_unstable();
    if let [only] = indices[..] {
        let (relation, trace) = rt.leaf(only);
        return Ok(Outcome { relation, trace, candidates: 0 });
    }
    let mut evaluated = 0;
    let mut remaining = operands(rt, query, &indices);
    let first = choose_first(&remaining, p, &mut evaluated).expect("connected patterns have a joinable pair");
    let left = first.left.expect("first pairs name both patterns");
    remaining.retain(|o| o.index != left && o.index != first.right);
    let (mut rel, mut node) = rt.join(first.option.kind(&first.vars), vec![rt.leaf(left), rt.leaf(first.right)])?;
    let mut acc_vars: VarSet =
        query.patterns[left].vars().union(&query.patterns[first.right].vars()).cloned().collect();
    while !remaining.is_empty() {
        let acc = JoinInput::leaf(rel.gamma(), rel.partition().clone());
        let next = choose_next(&acc, &acc_vars, &remaining, p, &mut evaluated)
            .expect("connected patterns always have a joinable next pattern");
        remaining.retain(|o| o.index != next.right);
        acc_vars.extend(query.patterns[next.right].vars());
        let fuse = next.option == JoinOption::Pjoin && node.kind == ExecKind::Pjoin(next.vars.clone());
        let (joined, joined_node) = rt.join(next.option.kind(&next.vars), vec![(rel, node), rt.leaf(next.right)])?;
        rel = joined;
        node = if fuse { fuse_pjoin(joined_node) } else { joined_node };
    }
    Ok(Outcome { relation: rel, trace: node, candidates: evaluated })
}

/// `Pjoin_V(Pjoin_V(a, b), c)` → `Pjoin_V(a, b, c)`, keeping both ledger entries.
fn fuse_pjoin(outer: ExecNode) -> ExecNode {
    let ExecNode { kind, gamma, partition, operators, children } = outer;
    let mut children = children.into_iter();
    let inner = children.next().expect("binary join");
    let mut ops = inner.operators;
    ops.extend(operators);
    let mut merged = inner.children;
    merged.extend(children);
    ExecNode { kind, gamma, partition, operators: ops, children: merged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{varset, PartitionState};

    fn op(index: usize, gamma: u64, key: Option<&str>, vars: &[&str]) -> Operand {
        let partition = match key {
            Some(k) => PartitionState::Keyed(varset([k])),
            None => PartitionState::Random,
        };
        Operand { index, input: JoinInput::leaf(gamma, partition), vars: varset(vars.iter().copied()) }
    }

    fn q8_operands() -> Vec<Operand> {
        vec![
            op(0, 120, Some("x"), &["x"]),
            op(1, 12, Some("y"), &["y"]),
            op(2, 120, Some("x"), &["x", "y"]),
            op(3, 4, Some("y"), &["y"]),
            op(4, 160, Some("x"), &["x", "z"]),
        ]
    }

    #[test]
    fn q8_first_pair_is_the_small_colocated_one() {
        let mut n = 0;
        let c = choose_first(&q8_operands(), &CostParams::unit(4), &mut n).unwrap();
        assert_eq!((c.left, c.right, c.option, c.cost), (Some(1), 3, JoinOption::Pjoin, 0.0));
        assert_eq!(n, 3 * 6);
    }

    #[test]
    fn extension_prefers_broadcasting_a_small_result() {
        let mut n = 0;
        let rest: Vec<Operand> = q8_operands().into_iter().filter(|o| ![1, 3].contains(&o.index)).collect();
        let acc = JoinInput::leaf(4, PartitionState::Keyed(varset(["y"])));
        let c = choose_next(&acc, &varset(["y"]), &rest, &CostParams::unit(4), &mut n).unwrap();
        assert_eq!((c.right, c.option, c.cost), (2, JoinOption::BroadcastLeft, 12.0));
        assert_eq!(n, 3);
    }

    #[test]
    fn two_random_inputs_follow_the_crossover() {
        let ops = [op(0, 10, None, &["x"]), op(1, 100, None, &["x"])];
        let mut n = 0;
        let pick = |m| choose_first(&ops, &CostParams::unit(m), &mut 0).unwrap().option;
        assert_eq!(pick(20), JoinOption::Pjoin);
        assert_eq!(pick(10), JoinOption::BroadcastLeft);
        assert_eq!(pick(12), JoinOption::Pjoin);
        choose_first(&ops, &CostParams::unit(3), &mut n);
        assert_eq!(n, 3);
    }
}
