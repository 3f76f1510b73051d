//! Analytic cost formulas: data access and data transfer, in tuples scaled by
//! per-tuple rates.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::cluster::{DistRelation, PartitionState};
use crate::error::{Error, Result};
use crate::model::VarSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub theta_acc: f64,
    pub theta_comm: f64,
    pub m: usize,
}

impl CostParams {
    pub fn new(theta_acc: f64, theta_comm: f64, m: usize) -> Result<Self> {
        if !(theta_acc.is_finite() && theta_acc > 0.0) {
            return Err(Error::Config(format!("theta_acc must be positive, got {theta_acc}")));
        }
        if !(theta_comm.is_finite() && theta_comm > 0.0) {
            return Err(Error::Config(format!("theta_comm must be positive, got {theta_comm}")));
        }
        if m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        Ok(Self { theta_acc, theta_comm, m })
    }

    /// Unit rates: costs read directly as tuple counts.
    pub fn unit(m: usize) -> Self {
        Self { theta_acc: 1.0, theta_comm: 1.0, m: m.max(1) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub access: f64,
    pub transfer: f64,
}

impl CostEstimate {
    pub const ZERO: CostEstimate = CostEstimate { access: 0.0, transfer: 0.0 };

    pub fn total(&self) -> f64 {
        self.access + self.transfer
    }
}

impl Add for CostEstimate {
    type Output = CostEstimate;

    fn add(self, rhs: CostEstimate) -> CostEstimate {
        CostEstimate { access: self.access + rhs.access, transfer: self.transfer + rhs.transfer }
    }
}

impl AddAssign for CostEstimate {
    fn add_assign(&mut self, rhs: CostEstimate) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for CostEstimate {
    fn sum<I: Iterator<Item = CostEstimate>>(iter: I) -> Self {
        iter.fold(CostEstimate::ZERO, Add::add)
    }
}

impl fmt::Display for CostEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "access={} transfer={} total={}", self.access, self.transfer, self.total())
    }
}

/// Γ of a distributed relation (one copy for replicated ones).
pub fn size(r: &DistRelation) -> u64 {
    r.gamma()
}

pub fn cost_selection(n: usize, gamma_d: u64, p: &CostParams) -> CostEstimate {
    CostEstimate { access: n as f64 * p.theta_acc * gamma_d as f64, transfer: 0.0 }
}

pub fn cost_merged_selection(n: usize, gamma_d: u64, gamma_s: u64, p: &CostParams) -> CostEstimate {
    CostEstimate { access: p.theta_acc * (gamma_d as f64 + n as f64 * gamma_s as f64), transfer: 0.0 }
}

/// Whether one scan plus `n` scans of the matching subset reads less than
/// `n` full scans: `Γ(D) + n·Γ(S) < n·Γ(D)`.
pub fn merged_beneficial(n: usize, gamma_d: u64, gamma_s: u64) -> bool {
    if n < 2 {
        return false;
    }
    let n = n as u128;
    (gamma_d as u128) + n * (gamma_s as u128) < n * (gamma_d as u128)
}

/// One input of a join as the cost model sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct JoinInput {
    pub gamma: u64,
    pub partition: PartitionState,
    pub subtree: CostEstimate,
}

impl JoinInput {
    pub fn new(gamma: u64, partition: PartitionState, subtree: CostEstimate) -> Self {
        Self { gamma, partition, subtree }
    }

    pub fn leaf(gamma: u64, partition: PartitionState) -> Self {
        Self::new(gamma, partition, CostEstimate::ZERO)
    }
}

/// Subtree costs plus one shuffle of every input not already keyed on `v`.
/// Replicated inputs are joined in place.
pub fn cost_pjoin(inputs: &[JoinInput], v: &VarSet, p: &CostParams) -> CostEstimate {
    let mut total: CostEstimate = inputs.iter().map(|i| i.subtree).sum();
    total.transfer += p.theta_comm * pjoin_shuffled(inputs, v) as f64;
    total
}

/// Tuples a partitioned join on `v` moves.
pub fn pjoin_shuffled(inputs: &[JoinInput], v: &VarSet) -> u64 {
    inputs.iter().filter(|i| !i.partition.is_keyed_on(v) && !i.partition.is_replicated()).map(|i| i.gamma).sum()
}

/// Subtree costs plus `m − 1` copies of every non-target input. Inputs that
/// are already replicated cost nothing more.
pub fn cost_brjoin(inputs: &[JoinInput], target: usize, p: &CostParams) -> Result<CostEstimate> {
    if target >= inputs.len() {
        return Err(Error::TargetOutOfRange { index: target, len: inputs.len() });
    }
    let mut total: CostEstimate = inputs.iter().map(|i| i.subtree).sum();
    total.transfer += p.theta_comm * brjoin_broadcast(inputs, target, p.m) as f64;
    Ok(total)
}

/// Tuples a broadcast join keeping `target` in place sends.
pub fn brjoin_broadcast(inputs: &[JoinInput], target: usize, m: usize) -> u64 {
    let sent: u64 = inputs
        .iter()
        .enumerate()
        .filter(|(i, inp)| *i != target && !inp.partition.is_replicated())
        .map(|(_, inp)| inp.gamma)
        .sum();
    (m as u64).saturating_sub(1) * sent
}

/// For two inputs not partitioned on their join key: true when shuffling
/// both costs no more than broadcasting the smaller one, i.e.
/// `Γ(large)/Γ(small) + 2 ≤ m`. An empty small side is broadcast for free.
pub fn crossover_prefers_pjoin(gamma_small: u64, gamma_large: u64, m: usize) -> bool {
    if gamma_small == 0 {
        return false;
    }
    let (small, large, m) = (gamma_small as u128, gamma_large as u128, m as u128);
    large + 2 * small <= m * small
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::varset;

    fn unit(m: usize) -> CostParams {
        CostParams::unit(m)
    }

    #[test]
    fn params_are_validated() {
        assert!(CostParams::new(1.0, 1.0, 4).is_ok());
        assert!(CostParams::new(0.0, 1.0, 4).is_err());
        assert!(CostParams::new(1.0, -2.0, 4).is_err());
        assert!(CostParams::new(1.0, 1.0, 0).is_err());
        assert!(CostParams::new(f64::NAN, 1.0, 1).is_err());
    }

    #[test]
    fn selection_costs() {
        assert_eq!(cost_selection(1, 100, &unit(4)).access, 100.0);
        assert_eq!(cost_selection(3, 100, &unit(4)).access, 300.0);
        assert_eq!(cost_selection(5, 0, &unit(4)).total(), 0.0);
        assert_eq!(cost_merged_selection(3, 100, 20, &unit(4)).access, 160.0);
        assert_eq!(cost_merged_selection(3, 100, 100, &unit(4)).access, 400.0);
        assert_eq!(cost_merged_selection(3, 100, 0, &unit(4)).access, 100.0);
        let p = CostParams::new(0.5, 2.0, 4).unwrap();
        assert_eq!(cost_selection(2, 10, &p).access, 10.0);
    }

    #[test]
    fn merge_predicate() {
        assert!(merged_beneficial(3, 100, 20));
        assert!(!merged_beneficial(3, 100, 70));
        for n in 1..10 {
            assert!(!merged_beneficial(n, 100, 100));
        }
        assert!(!merged_beneficial(1, 100, 0));
        assert!(merged_beneficial(2, 100, 0));
    }

    #[test]
    fn pjoin_charges_misplaced_inputs() {
        let y = varset(["y"]);
        let keyed_y = PartitionState::Keyed(y.clone());
        let keyed_x = PartitionState::Keyed(varset(["x"]));
        let inputs = [
            JoinInput::leaf(4, keyed_y.clone()),
            JoinInput::leaf(12, keyed_y.clone()),
            JoinInput::leaf(120, keyed_x.clone()),
        ];
        assert_eq!(cost_pjoin(&inputs, &y, &unit(4)).transfer, 120.0);
        let mut rev = inputs.to_vec();
        rev.reverse();
        assert_eq!(cost_pjoin(&rev, &y, &unit(4)), cost_pjoin(&inputs, &y, &unit(4)));
        let placed = [JoinInput::leaf(4, keyed_y.clone()), JoinInput::leaf(9, keyed_y)];
        assert_eq!(cost_pjoin(&placed, &y, &unit(4)).transfer, 0.0);
        let rep = [JoinInput::leaf(9, PartitionState::Replicated { origin: None }), JoinInput::leaf(1, keyed_x)];
        assert_eq!(cost_pjoin(&rep, &y, &unit(4)).transfer, 1.0);
    }

    #[test]
    fn brjoin_charges_m_minus_one_copies() {
        let r = PartitionState::Random;
        let inputs = [JoinInput::leaf(4, r.clone()), JoinInput::leaf(12, r.clone()), JoinInput::leaf(120, r)];
        assert_eq!(cost_brjoin(&inputs, 2, &unit(4)).unwrap().transfer, 48.0);
        assert_eq!(cost_brjoin(&inputs, 2, &unit(1)).unwrap().transfer, 0.0);
        assert!(cost_brjoin(&inputs, 3, &unit(4)).is_err());
        let nested = [
            JoinInput::new(5, PartitionState::Random, CostEstimate { access: 7.0, transfer: 3.0 }),
            JoinInput::leaf(50, PartitionState::Random),
        ];
        assert_eq!(cost_brjoin(&nested, 1, &unit(3)).unwrap(), CostEstimate { access: 7.0, transfer: 13.0 });
    }

    #[test]
    fn crossover_examples() {
        assert!(crossover_prefers_pjoin(10, 100, 20));
        assert!(!crossover_prefers_pjoin(10, 100, 10));
        assert!(crossover_prefers_pjoin(7, 7, 3));
        assert!(!crossover_prefers_pjoin(7, 7, 2));
        assert!(!crossover_prefers_pjoin(0, 5, 100));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(2000))]

            #[test]
            fn crossover_matches_cost_comparison(a in 1u64..=1_000_000, b in 1u64..=1_000_000, m in 1usize..=100) {
                let (small, large) = (a.min(b), a.max(b));
                let p = unit(m);
                let x = varset(["x"]);
                let inputs = [JoinInput::leaf(small, PartitionState::Random), JoinInput::leaf(large, PartitionState::Random)];
                let pj = cost_pjoin(&inputs, &x, &p).total();
                let br = cost_brjoin(&inputs, 1, &p).unwrap().total();
                prop_assert_eq!(crossover_prefers_pjoin(small, large, m), pj <= br);
            }

            #[test]
            fn merge_predicate_matches_cost_comparison(n in 1usize..20, d in 0u64..1_000_000, frac in 0.0f64..=1.0) {
                let s = (d as f64 * frac) as u64;
                let p = unit(1);
                let merged = cost_merged_selection(n, d, s, &p).access;
                let direct = cost_selection(n, d, &p).access;
                prop_assert_eq!(merged_beneficial(n, d, s), n >= 2 && merged < direct);
            }
        }
    }
}
