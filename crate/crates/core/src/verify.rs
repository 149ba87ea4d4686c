//! Oracle cross-checks packaged as runnable suites.

use crate::approx::{build_approx, make_config, sandwich_holds, Mode};
use crate::augment::{build_augmented, precision_diversity_bound};
use crate::error::Result;
use crate::instances::{self, RandomOptions};
use crate::layered::BuildLimits;
use crate::oracle::{self, DEFAULT_ORACLE_CEILING};
use crate::rational::{self, Rational};
use crate::simulate::{enumerate_trajectories, DEFAULT_TRAJECTORY_CEILING};
use crate::solve::{backward_induction, bellman_residuals, evaluate_augmented};
use crate::spec::CmdpSpec;

/// Deliberate corruption used to exercise the failure path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mutation {
    #[default]
    None,
    /// Adds `1/7` to every exact solver value before comparison.
    PerturbValue,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckOutcome {
    pub check: &'static str,
    pub seed: u64,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.failure.is_none())
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.outcomes.iter().filter(|o| o.failure.is_some())
    }

    fn record(&mut self, check: &'static str, seed: u64, result: Result<std::result::Result<(), String>>) {
        let failure = match result {
            Ok(Ok(())) => None,
            Ok(Err(msg)) => Some(msg),
            Err(e) => Some(format!("error: {e}")),
        };
        self.outcomes.push(CheckOutcome { check, seed, failure });
    }
}

fn show(v: &Option<Rational>) -> String {
    v.as_ref().map_or("Infeasible".to_string(), |r| r.to_string())
}

/// Exact solver against brute force, Bellman residuals, policy admissibility
/// and policy evaluation.
pub fn check_oracle_equivalence(spec: &CmdpSpec, mutation: Mutation) -> Result<std::result::Result<(), String>> {
    let aug = build_augmented(spec, &BuildLimits::default())?;
    let sol = backward_induction(&aug);
    let mut value = sol.optimal_value().cloned();
    if mutation == Mutation::PerturbValue {
        value = value.map(|v| v + rational::ratio(1, 7));
    }
    let truth = oracle::brute_force_optimum(spec, DEFAULT_ORACLE_CEILING)?;
    if value != truth {
        return Ok(Err(format!("solver value {} differs from brute force {}", show(&value), show(&truth))));
    }
    let residuals = bellman_residuals(&aug, &sol);
    if !residuals.is_empty() {
        return Ok(Err(residuals.join("; ")));
    }
    let inadmissible = sol.policy().check_admissible(&aug);
    if !inadmissible.is_empty() {
        return Ok(Err(inadmissible.join("; ")));
    }
    if sol.is_feasible() {
        let evaluated = evaluate_augmented(&aug, sol.policy())?;
        if evaluated.as_ref() != sol.optimal_value() {
            return Ok(Err("policy evaluation disagrees with the optimal value".to_string()));
        }
    }
    Ok(Ok(()))
}

/// `F_h` is contained in the safe-exploration layer `h`, with equality when
/// `require_equality` is set.
pub fn check_feasible_sets(spec: &CmdpSpec, require_equality: bool) -> Result<std::result::Result<(), String>> {
    let aug = build_augmented(spec, &BuildLimits::default())?;
    let feasible = oracle::exact_feasible_sets(spec, DEFAULT_ORACLE_CEILING)?;
    let safe = oracle::safe_exploration_sets(spec, DEFAULT_ORACLE_CEILING)?;
    for h in 1..=spec.horizon() + 1 {
        let layer: std::collections::BTreeSet<_> =
            aug.layer(h).nodes().iter().map(|n| (n.state, n.key.clone())).collect();
        if layer != safe[h - 1] {
            return Ok(Err(format!("layer {h} differs from the enumerated safe-exploration set")));
        }
        if !feasible[h - 1].is_subset(&layer) {
            return Ok(Err(format!("layer {h} misses a feasible-reachable entry")));
        }
        if require_equality && feasible[h - 1] != layer {
            return Ok(Err(format!("layer {h} is not equal to F_{h}")));
        }
    }
    Ok(Ok(()))
}

/// Measured diversity within `H^d 2^((k+1) d)` for denominator `2^k`.
pub fn check_precision_bound(spec: &CmdpSpec, k: u32) -> Result<std::result::Result<(), String>> {
    let aug = build_augmented(spec, &BuildLimits::default())?;
    let bound = precision_diversity_bound(spec.horizon(), spec.dim(), k);
    let d = aug.diversity() as u128;
    Ok(if d <= bound { Ok(()) } else { Err(format!("diversity {d} exceeds {bound}")) })
}

/// Approximate-mode guarantees: prefix bound on every trajectory, optimism
/// against the exact value (when available), the sandwich relation and the
/// per-layer grid-count bound. Feasible schemes are also checked against the
/// original budget and the exact values under both budgets.
pub fn check_approximation(spec: &CmdpSpec, mode: Mode, epsilon: &Rational) -> Result<std::result::Result<(), String>> {
    let cfg = make_config(spec, mode, epsilon)?;
    let approx = build_approx(spec, &cfg, &BuildLimits::default())?;
    let bound = cfg.grid_count_bound();
    if let Some(h) = approx.stats().distinct_keys.iter().position(|c| *c as u128 > bound) {
        return Ok(Err(format!("layer {} holds more grid points than {bound}", h + 1)));
    }
    let sol = backward_induction(&approx);
    let exact = backward_induction(&build_augmented(spec, &BuildLimits::default())?);
    let exact_value = exact.optimal_value().cloned();
    let approx_value = sol.optimal_value().cloned();
    if !mode.is_feasible_scheme() {
        let optimistic = match (&approx_value, &exact_value) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(e)) => a >= e,
        };
        if !optimistic {
            return Ok(Err(format!("approximate value {} below exact {}", show(&approx_value), show(&exact_value))));
        }
    } else {
        let shrunk = backward_induction(&build_augmented(&spec.with_budget(cfg.budget_used())?, &BuildLimits::default())?);
        let lower = shrunk.optimal_value().cloned();
        let ordered = |lo: &Option<Rational>, hi: &Option<Rational>| match (lo, hi) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => a <= b,
        };
        if !ordered(&lower, &approx_value) || !ordered(&approx_value, &exact_value) {
            return Ok(Err(format!(
                "value {} not between {} and {}",
                show(&approx_value),
                show(&lower),
                show(&exact_value)
            )));
        }
    }
    if !sol.is_feasible() {
        return Ok(Ok(()));
    }
    let limit = cfg.violation_bound();
    let den = spec.denominator();
    for (traj, _) in enumerate_trajectories(spec, sol.policy(), Some(&cfg), DEFAULT_TRAJECTORY_CEILING)? {
        if !traj.within(&limit, den) {
            return Ok(Err("a trajectory exceeds budget + H ell".to_string()));
        }
        if mode.is_feasible_scheme() && !traj.feasible(spec) {
            return Ok(Err("a feasible-scheme trajectory violates the original budget".to_string()));
        }
        let mut points: Vec<(usize, &[i64], &[i64])> =
            traj.steps.iter().map(|s| (s.h, s.c_bar.as_slice(), s.c_hat.as_deref().unwrap_or(&[]))).collect();
        points.push((spec.horizon() + 1, &traj.final_c_bar, traj.final_c_hat.as_deref().unwrap_or(&[])));
        for (h, c_bar, c_hat) in points {
            let c_bar: Vec<Rational> = c_bar.iter().map(|c| rational::ratio(*c, den)).collect();
            if !sandwich_holds(&cfg, h, &c_bar, &cfg.grid_value(c_hat)) {
                return Ok(Err(format!("sandwich relation fails at h={h}")));
            }
        }
    }
    Ok(Ok(()))
}

/// Oracle equivalence on `count` random tiny instances starting at `seed`.
pub fn run_tiny_suite(seed: u64, count: u64, mutation: Mutation) -> VerifyReport {
    let mut report = VerifyReport::default();
    for s in seed..seed + count {
        let result = instances::gen_tiny(s).and_then(|spec| check_oracle_equivalence(&spec, mutation));
        report.record("oracle-equivalence", s, result);
    }
    report
}

/// Feasible-set containment and equality, the precision bound, and the
/// approximation guarantees on `count` instances per check.
pub fn run_lemmas_suite(seed: u64, count: u64) -> VerifyReport {
    let mut report = VerifyReport::default();
    let eps = rational::ratio(1, 2);
    for s in seed..seed + count {
        report.record("feasible-set-containment", s, instances::gen_tiny(s).and_then(|spec| check_feasible_sets(&spec, false)));
        let zero_action = RandomOptions { zero_cost_action: true, budget: Some(vec![(s % 4) as i64]), ..instances::tiny_options(s) };
        report.record(
            "feasible-set-equality",
            s,
            instances::gen_random(&zero_action, s).and_then(|spec| check_feasible_sets(&spec, true)),
        );
        let k = (s % 3) as u32 + 1;
        let precision = RandomOptions {
            denominator: 1 << k,
            cost_bound: (1 << k) - 1,
            dim: 1 + (s % 2) as usize,
            horizon: 3,
            ..instances::tiny_options(s)
        };
        report.record(
            "precision-bound",
            s,
            instances::gen_random(&precision, s).and_then(|spec| check_precision_bound(&spec, k)),
        );
        report.record(
            "additive-approximation",
            s,
            instances::gen_tiny(s).and_then(|spec| check_approximation(&spec, Mode::Additive, &eps)),
        );
        report.record(
            "feasible-additive-scheme",
            s,
            instances::gen_tiny(s).and_then(|spec| check_approximation(&spec, Mode::FeasibleAdditive, &eps)),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_and_mutation_fails() {
        assert!(run_tiny_suite(0, 10, Mutation::None).passed());
        assert!(!run_tiny_suite(0, 10, Mutation::PerturbValue).passed());
        let report = run_lemmas_suite(0, 5);
        assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
    }
}
