//! The exact cost-augmented MDP: states are `(state, cumulative cost)` pairs
//! reachable by only ever taking actions that are almost surely safe.

use crate::cost::CostVector;
use crate::error::Result;
use crate::layered::{forward_induction, BuildLimits, LayeredMdp, Protocol};
use crate::spec::CmdpSpec;

/// Actions at `(h, s, c_bar)` whose whole cost support keeps the next prefix
/// sum within the constraint.
pub fn admissible_actions(spec: &CmdpSpec, h: usize, s: usize, c_bar: &CostVector) -> Vec<usize> {
    spec.admissible_actions(h, s, c_bar)
}

/// Builds all `H + 1` layers by forward induction from `{(s0, 0)}`.
pub fn build_augmented(spec: &CmdpSpec, limits: &BuildLimits) -> Result<LayeredMdp> {
    forward_induction(spec, Protocol::Exact, limits)
}

/// Largest number of distinct cumulative costs in any layer.
pub fn diversity(aug: &LayeredMdp) -> usize {
    aug.diversity()
}

/// Upper bound `H^d * 2^((k+1) d)` on the diversity of an instance whose costs
/// have denominator `2^k` and magnitude at most `2^k - 1` numerators.
pub fn precision_diversity_bound(horizon: usize, dim: usize, k: u32) -> u128 {
    let per_dim = (horizon as u128).saturating_mul(1u128 << (k + 1));
    (0..dim).fold(1u128, |acc, _| acc.saturating_mul(per_dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostDistribution;
    use crate::instances;
    use crate::rational::{self, ratio};

    #[test]
    fn zero_costs_admit_every_action() {
        let mut spec = CmdpSpec::new(2, 3, 2, 0, CostVector::scalar(0, 1).unwrap());
        for h in 1..=2 {
            for s in 0..2 {
                for a in 0..3 {
                    spec.set_transition(h, s, a, vec![(0, ratio(1, 2)), (1, ratio(1, 2))]);
                }
            }
        }
        assert_eq!(admissible_actions(&spec, 1, 0, &CostVector::scalar(0, 1).unwrap()), vec![0, 1, 2]);
        let aug = build_augmented(&spec, &BuildLimits::default()).unwrap();
        for h in 2..=3 {
            assert_eq!(aug.entries(h), vec![(0, vec![rational::zero()]), (1, vec![rational::zero()])]);
        }
        assert_eq!(diversity(&aug), 1);
    }

    #[test]
    fn markovian_gap_layers() {
        let b = rational::int(1);
        let spec = instances::gen_markovian_gap(2, 1, &rational::int(10), &b).unwrap();
        let aug = build_augmented(&spec, &BuildLimits::default()).unwrap();
        assert_eq!(aug.entries(2), vec![(0, vec![rational::zero()]), (0, vec![b.clone()])]);
        assert_eq!(diversity(&aug), 2);
        let full = CostVector::from_rationals(&[b], spec.denominator()).unwrap();
        assert_eq!(admissible_actions(&spec, 2, 0, &full), vec![0]);
    }

    #[test]
    fn two_point_support_is_excluded() {
        let mut spec = CmdpSpec::new(1, 2, 1, 0, CostVector::scalar(2, 1).unwrap());
        spec.set_all_self_loops();
        let two = |n| CostVector::scalar(n, 1).unwrap();
        spec.set_costs(1, 0, 1, CostDistribution::new(vec![(two(0), ratio(1, 2)), (two(2), ratio(1, 2))]));
        assert_eq!(admissible_actions(&spec, 1, 0, &two(1)), vec![0]);
    }

    #[test]
    fn layer_budget_and_mass_invariants() {
        for seed in 0..20 {
            let opts = instances::RandomOptions { num_states: 3, num_actions: 2, horizon: 4, support: 2, dim: 1, denominator: 4, ..Default::default() };
            let spec = instances::gen_random(&opts, seed).unwrap();
            let aug = build_augmented(&spec, &BuildLimits::default()).unwrap();
            for h in 1..=spec.horizon() {
                let bound = spec.num_states() * spec.num_actions() * spec.max_support() * aug.layer(h).len();
                assert!(aug.layer(h + 1).len() <= bound);
                for node in aug.layer(h + 1).nodes() {
                    assert!(spec.within_bounds(h, &node.key));
                }
                for node in aug.layer(h).nodes() {
                    for edge in &node.edges {
                        let total: crate::Rational = edge.successors.iter().map(|(_, p)| p.clone()).sum();
                        assert_eq!(total, rational::one());
                    }
                }
            }
        }
    }

    #[test]
    fn layer_ceiling_is_a_resource_error() {
        let spec = instances::gen_hard_family(8, &rational::int(8), 3, 1024).unwrap();
        let err = build_augmented(&spec, &BuildLimits { max_layer_entries: 4 }).unwrap_err();
        assert!(matches!(err, crate::Error::Resource(_)));
    }
}
