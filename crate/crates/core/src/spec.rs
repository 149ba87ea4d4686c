//! The tabular constrained MDP and its validation.
//!
//! Time steps are 1-based (`h` in `1..=H`), states and actions 0-based.

use num_traits::{Signed, Zero};

use crate::cost::{CostDistribution, CostVector};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// Largest constraint count accepted by default.
pub const DEFAULT_MAX_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Every prefix sum must stay `<= budget`.
    AnytimeUpper,
    /// The prefix sum through step `k` must lie in `[lower[k-1], upper[k-1]]`.
    Interval { lower: Vec<CostVector>, upper: Vec<CostVector> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CmdpSpec {
    pub name: Option<String>,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    dim: usize,
    denominator: i64,
    budget: CostVector,
    constraint: ConstraintKind,
    transitions: Vec<Vec<(usize, Rational)>>,
    rewards: Vec<Rational>,
    costs: Vec<CostDistribution>,
    declared_cost_max: Option<CostVector>,
}

impl CmdpSpec {
    /// Creates an instance with zero rewards, deterministic zero costs and no
    /// transitions; rows must be filled in with [`CmdpSpec::set_transition`].
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        budget: CostVector,
    ) -> Self {
        let dim = budget.dim();
        let denominator = budget.denominator();
        let cells = horizon * num_states * num_actions;
        Self {
            name: None,
            num_states,
            num_actions,
            horizon,
            initial_state,
            dim,
            denominator,
            budget,
            constraint: ConstraintKind::AnytimeUpper,
            transitions: vec![Vec::new(); cells],
            rewards: vec![rational::zero(); cells],
            costs: vec![CostDistribution::deterministic(CostVector::zero(dim, denominator)); cells],
            declared_cost_max: None,
        }
    }

    fn cell(&self, h: usize, s: usize, a: usize) -> usize {
        assert!(h >= 1 && h <= self.horizon, "time step {h} outside 1..={}", self.horizon);
        assert!(s < self.num_states && a < self.num_actions, "(s={s}, a={a}) out of range");
        ((h - 1) * self.num_states + s) * self.num_actions + a
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn denominator(&self) -> i64 {
        self.denominator
    }

    pub fn budget(&self) -> &CostVector {
        &self.budget
    }

    pub fn constraint(&self) -> &ConstraintKind {
        &self.constraint
    }

    pub fn declared_cost_max(&self) -> Option<&CostVector> {
        self.declared_cost_max.as_ref()
    }

    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[(usize, Rational)] {
        &self.transitions[self.cell(h, s, a)]
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> &Rational {
        &self.rewards[self.cell(h, s, a)]
    }

    pub fn cost(&self, h: usize, s: usize, a: usize) -> &CostDistribution {
        &self.costs[self.cell(h, s, a)]
    }

    /// Sets `P_h(. | s, a)`; zero-probability entries are dropped.
    pub fn set_transition(&mut self, h: usize, s: usize, a: usize, row: Vec<(usize, Rational)>) {
        let cell = self.cell(h, s, a);
        let mut row: Vec<_> = row.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        row.sort_by_key(|(t, _)| *t);
        self.transitions[cell] = row;
    }

    pub fn set_reward(&mut self, h: usize, s: usize, a: usize, reward: Rational) {
        let cell = self.cell(h, s, a);
        self.rewards[cell] = reward;
    }

    pub fn set_costs(&mut self, h: usize, s: usize, a: usize, costs: CostDistribution) {
        let cell = self.cell(h, s, a);
        self.costs[cell] = costs;
    }

    pub fn set_constraint(&mut self, constraint: ConstraintKind) {
        self.constraint = constraint;
    }

    pub fn set_declared_cost_max(&mut self, cost_max: Option<CostVector>) {
        self.declared_cost_max = cost_max;
    }

    /// Self-loop transitions for every cell; handy for single-state families.
    pub fn set_all_self_loops(&mut self) {
        for h in 1..=self.horizon {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    self.set_transition(h, s, a, vec![(s, rational::one())]);
                }
            }
        }
    }

    /// Whether a prefix sum through step `step` (numerators over the instance
    /// denominator) satisfies the constraint.
    pub fn within_bounds(&self, step: usize, cumulative: &[i64]) -> bool {
        match &self.constraint {
            ConstraintKind::AnytimeUpper => {
                cumulative.iter().zip(self.budget.components()).all(|(c, b)| c <= b)
            }
            ConstraintKind::Interval { lower, upper } => {
                let (lo, hi) = (&lower[step - 1], &upper[step - 1]);
                cumulative
                    .iter()
                    .zip(lo.components().iter().zip(hi.components()))
                    .all(|(c, (l, u))| l <= c && c <= u)
            }
        }
    }

    /// Admissible actions at `(h, s, cumulative)`: those whose entire cost
    /// support keeps the next prefix sum within bounds.
    pub fn admissible_actions(&self, h: usize, s: usize, cumulative: &CostVector) -> Vec<usize> {
        (0..self.num_actions)
            .filter(|&a| {
                self.cost(h, s, a).costs().all(|c| match cumulative.checked_add(c) {
                    Ok(next) => self.within_bounds(h, next.components()),
                    Err(_) => false,
                })
            })
            .collect()
    }

    /// Largest supported cost per dimension over all cells.
    pub fn support_cost_max(&self) -> Vec<Rational> {
        let mut best: Vec<Option<i64>> = vec![None; self.dim];
        for dist in &self.costs {
            for c in dist.costs() {
                for (i, v) in c.components().iter().enumerate() {
                    best[i] = Some(best[i].map_or(*v, |b| b.max(*v)));
                }
            }
        }
        best.into_iter()
            .map(|b| rational::ratio(b.unwrap_or(0), self.denominator))
            .collect()
    }

    /// True when every supported cost is componentwise non-negative.
    pub fn costs_nonnegative(&self) -> bool {
        self.costs.iter().all(|d| d.costs().all(|c| c.components().iter().all(|v| *v >= 0)))
    }

    /// Maximum support size `n`.
    pub fn max_support(&self) -> usize {
        self.costs.iter().map(|d| d.len()).max().unwrap_or(0)
    }

    pub fn reward_range(&self) -> (Rational, Rational) {
        let mut lo = rational::zero();
        let mut hi = rational::zero();
        for (i, r) in self.rewards.iter().enumerate() {
            if i == 0 || *r < lo {
                lo = r.clone();
            }
            if i == 0 || *r > hi {
                hi = r.clone();
            }
        }
        (lo, hi)
    }

    /// Returns a copy whose costs and bounds are expressed over `denominator`
    /// (a multiple of the current one).
    pub fn rescaled(&self, denominator: i64) -> Result<CmdpSpec> {
        let mut out = self.clone();
        out.denominator = denominator;
        out.budget = self.budget.rescale(denominator)?;
        for dist in out.costs.iter_mut() {
            let support = dist
                .support()
                .iter()
                .map(|(c, p)| Ok((c.rescale(denominator)?, p.clone())))
                .collect::<Result<Vec<_>>>()?;
            *dist = CostDistribution::new(support);
        }
        if let ConstraintKind::Interval { lower, upper } = &self.constraint {
            out.constraint = ConstraintKind::Interval {
                lower: lower.iter().map(|c| c.rescale(denominator)).collect::<Result<_>>()?,
                upper: upper.iter().map(|c| c.rescale(denominator)).collect::<Result<_>>()?,
            };
        }
        if let Some(cm) = &self.declared_cost_max {
            out.declared_cost_max = Some(cm.rescale(denominator)?);
        }
        Ok(out)
    }

    /// Copy of the instance under a different (rational) budget, moving to a
    /// common denominator as needed.
    pub fn with_budget(&self, budget: &[Rational]) -> Result<CmdpSpec> {
        if budget.len() != self.dim {
            return Err(Error::config("budget dimension mismatch"));
        }
        let mut den = self.denominator;
        for b in budget {
            let bd: i64 = b
                .denom()
                .try_into()
                .map_err(|_| Error::config("budget denominator overflows i64"))?;
            den = rational::lcm_i64(den, bd).ok_or_else(|| Error::config("denominator overflow"))?;
        }
        let mut out = self.rescaled(den)?;
        out.budget = CostVector::from_rationals(budget, den)?;
        Ok(out)
    }
}

/// Every invariant violation of `spec`; empty iff well-formed.
pub fn validate_cmdp(spec: &CmdpSpec) -> Vec<String> {
    validate_cmdp_with(spec, DEFAULT_MAX_DIM)
}

pub fn validate_cmdp_with(spec: &CmdpSpec, max_dim: usize) -> Vec<String> {
    let mut out = Vec::new();
    if spec.num_states == 0 {
        out.push("state count must be at least 1".to_string());
    }
    if spec.num_actions == 0 {
        out.push("action count must be at least 1".to_string());
    }
    if spec.horizon == 0 {
        out.push("horizon must be at least 1".to_string());
    }
    if spec.dim == 0 || spec.dim > max_dim {
        out.push(format!("constraint count {} outside 1..={max_dim}", spec.dim));
    }
    if spec.denominator <= 0 {
        out.push(format!("denominator {} must be positive", spec.denominator));
    }
    if spec.initial_state >= spec.num_states {
        out.push(format!("initial state {} out of range", spec.initial_state));
    }
    if spec.budget.denominator() != spec.denominator {
        out.push("budget denominator differs from the instance denominator".to_string());
    }
    if !out.is_empty() {
        return out;
    }
    let one = rational::one();
    for h in 1..=spec.horizon {
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                let row = spec.transition(h, s, a);
                let mut total = rational::zero();
                for (t, p) in row {
                    if *t >= spec.num_states {
                        out.push(format!("transition (h={h},s={s},a={a}) targets state {t} out of range"));
                    }
                    if p.is_negative() {
                        out.push(format!("transition (h={h},s={s},a={a}) has negative probability {p}"));
                    }
                    total += p;
                }
                if total != one {
                    out.push(format!("transition (h={h},s={s},a={a}) sums to {total}"));
                }
                let dist = spec.cost(h, s, a);
                if dist.is_empty() {
                    out.push(format!("cost support empty at ({h},{s},{a})"));
                }
                for v in dist.violations(spec.dim, spec.denominator) {
                    out.push(format!("cost distribution at ({h},{s},{a}) {v}"));
                }
            }
        }
    }
    if let ConstraintKind::Interval { lower, upper } = &spec.constraint {
        if lower.len() != spec.horizon || upper.len() != spec.horizon {
            out.push(format!("interval bounds must have {} entries per side", spec.horizon));
        }
        for (k, (l, u)) in lower.iter().zip(upper).enumerate() {
            if l.denominator() != spec.denominator || u.denominator() != spec.denominator {
                out.push(format!("interval bounds at step {} use a foreign denominator", k + 1));
            } else if !l.le(u) {
                out.push(format!("interval bounds at step {}: lower {l} exceeds upper {u}", k + 1));
            }
        }
    }
    if let Some(cm) = &spec.declared_cost_max {
        if cm.dim() != spec.dim || cm.denominator() != spec.denominator {
            out.push("declared c_max does not match the instance dimension/denominator".to_string());
        }
    }
    out
}

/// Validates and converts violations into an error.
pub fn ensure_valid(spec: &CmdpSpec) -> Result<()> {
    let violations = validate_cmdp(spec);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(violations))
    }
}

/// Whether every prefix of a realised cost sequence satisfies the constraint.
///
/// Costs must use the instance denominator; a mismatch counts as infeasible.
pub fn anytime_feasible_trace(costs: &[CostVector], spec: &CmdpSpec) -> bool {
    if costs.len() > spec.horizon() {
        return false;
    }
    let mut cumulative = CostVector::zero(spec.dim(), spec.denominator());
    for (k, c) in costs.iter().enumerate() {
        cumulative = match cumulative.checked_add(c) {
            Ok(next) => next,
            Err(_) => return false,
        };
        if !spec.within_bounds(k + 1, cumulative.components()) {
            return false;
        }
    }
    true
}

/// Final-sum check used to contrast with the anytime version.
pub fn final_sum_feasible(costs: &[CostVector], spec: &CmdpSpec) -> bool {
    let mut cumulative = CostVector::zero(spec.dim(), spec.denominator());
    for c in costs {
        cumulative = match cumulative.checked_add(c) {
            Ok(next) => next,
            Err(_) => return false,
        };
    }
    cumulative.le(spec.budget())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    fn scalar(n: i64) -> CostVector {
        CostVector::scalar(n, 1).unwrap()
    }

    fn one_state(h: usize, budget: i64) -> CmdpSpec {
        let mut spec = CmdpSpec::new(1, 2, h, 0, scalar(budget));
        spec.set_all_self_loops();
        spec
    }

    #[test]
    fn well_formed_spec_is_valid() {
        assert!(validate_cmdp(&one_state(1, 0)).is_empty());
    }

    #[test]
    fn row_sum_violation_is_reported() {
        let mut spec = one_state(1, 0);
        spec.set_transition(1, 0, 0, vec![(0, ratio(9, 10))]);
        assert_eq!(validate_cmdp(&spec), vec!["transition (h=1,s=0,a=0) sums to 9/10".to_string()]);
    }

    #[test]
    fn empty_cost_support_is_reported() {
        let mut spec = one_state(1, 0);
        spec.set_costs(1, 0, 1, CostDistribution::new(vec![]));
        assert_eq!(validate_cmdp(&spec), vec!["cost support empty at (1,0,1)".to_string()]);
    }

    #[test]
    fn dimension_cap_and_interval_order() {
        let spec = CmdpSpec::new(1, 1, 1, 0, CostVector::new(&[0; 4], 1).unwrap());
        assert!(validate_cmdp(&spec)[0].contains("constraint count 4"));
        let mut spec = one_state(1, 2);
        spec.set_constraint(ConstraintKind::Interval { lower: vec![scalar(3)], upper: vec![scalar(2)] });
        assert!(validate_cmdp(&spec)[0].contains("lower (3) exceeds upper (2)"));
    }

    #[test]
    fn trace_examples() {
        let spec = one_state(3, 2);
        assert!(anytime_feasible_trace(&[scalar(1), scalar(1)], &spec));
        // prefix 3 > 2 although the total is 1
        let trace = [scalar(1), scalar(2), scalar(-2)];
        assert!(!anytime_feasible_trace(&trace, &spec));
        assert!(final_sum_feasible(&trace, &spec));

        let mut spec = one_state(2, 2);
        spec.set_constraint(ConstraintKind::Interval {
            lower: vec![scalar(0), scalar(0)],
            upper: vec![scalar(2), scalar(2)],
        });
        assert!(anytime_feasible_trace(&[scalar(1)], &spec));
        assert!(!anytime_feasible_trace(&[scalar(1), scalar(-2)], &spec));
    }

    #[test]
    fn admissibility_is_almost_sure() {
        let mut spec = one_state(1, 2);
        spec.set_costs(
            1,
            0,
            1,
            CostDistribution::new(vec![(scalar(0), ratio(1, 2)), (scalar(2), ratio(1, 2))]),
        );
        // c = 1: action 1 reaches 3 > 2 with probability 1/2
        assert_eq!(spec.admissible_actions(1, 0, &scalar(1)), vec![0]);
        assert_eq!(spec.admissible_actions(1, 0, &scalar(0)), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn feasibility_is_monotone_under_truncation(costs in prop::collection::vec(-3i64..4, 0..6), b in -2i64..6) {
            let spec = one_state(6, b);
            let trace: Vec<_> = costs.iter().map(|c| scalar(*c)).collect();
            if anytime_feasible_trace(&trace, &spec) {
                for k in 0..trace.len() {
                    prop_assert!(anytime_feasible_trace(&trace[..k], &spec));
                }
            }
        }

        #[test]
        fn nonnegative_costs_make_anytime_equal_final(costs in prop::collection::vec(0i64..4, 0..6), b in 0i64..10) {
            let spec = one_state(6, b);
            let trace: Vec<_> = costs.iter().map(|c| scalar(*c)).collect();
            prop_assert_eq!(anytime_feasible_trace(&trace, &spec), final_sum_feasible(&trace, &spec));
        }
    }
}
