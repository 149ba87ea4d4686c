//! Grid projection of cumulative costs and the approximate layered MDP.
//!
//! Approximate cumulative costs are multiples of a per-dimension grid width
//! `ell`. They are stored as integer grid indices `g` (the cost is `g * ell`).
//! The hot path works on `i128` integers scaled by a per-dimension factor so
//! that widths, budgets, cost bounds and instance costs are all integral.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::cost::{CostVector, Key};
use crate::error::{Error, Result};
use crate::layered::{forward_induction, BuildLimits, LayeredMdp, Protocol};
use crate::rational::{self, Rational};
use crate::spec::{CmdpSpec, ConstraintKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Exact,
    Additive,
    Relative,
    FeasibleAdditive,
    FeasibleRelative,
}

impl Mode {
    pub const ALL: [Mode; 5] =
        [Mode::Exact, Mode::Additive, Mode::Relative, Mode::FeasibleAdditive, Mode::FeasibleRelative];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Additive => "additive",
            Mode::Relative => "relative",
            Mode::FeasibleAdditive => "feasible-additive",
            Mode::FeasibleRelative => "feasible-relative",
        }
    }

    pub fn is_relative(self) -> bool {
        matches!(self, Mode::Relative | Mode::FeasibleRelative)
    }

    /// Modes whose policies respect the original budget exactly.
    pub fn is_feasible_scheme(self) -> bool {
        matches!(self, Mode::FeasibleAdditive | Mode::FeasibleRelative)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown mode {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectionConfig {
    mode: Mode,
    epsilon: Rational,
    horizon: usize,
    denominator: i64,
    ell: Vec<Rational>,
    cost_max: Vec<Rational>,
    budget_used: Vec<Rational>,
    positive_costs: bool,
    inactive: Vec<bool>,
    scaled: Vec<ScaledDim>,
}

/// One dimension expressed in units of `1/scale`.
#[derive(Clone, Debug, PartialEq, Eq)]
struct ScaledDim {
    ell: i128,
    budget: i128,
    cost_max: i128,
    /// Multiplier taking an instance cost numerator to scaled units.
    cost_factor: i128,
}

fn big_to_i128(x: &BigInt, what: &str) -> Result<i128> {
    x.to_i128().ok_or_else(|| Error::config(format!("{what} overflows 128-bit arithmetic")))
}

fn scale_dim(denominator: i64, ell: &Rational, budget: &Rational, cost_max: &Rational) -> Result<ScaledDim> {
    let mut k = BigInt::from(denominator);
    for r in [ell, budget, cost_max] {
        k = k.lcm(r.denom());
    }
    let to_units = |r: &Rational, what: &str| big_to_i128(&(r.numer() * (&k / r.denom())), what);
    Ok(ScaledDim {
        ell: to_units(ell, "grid width")?,
        budget: to_units(budget, "budget")?,
        cost_max: to_units(cost_max, "c_max")?,
        cost_factor: big_to_i128(&(&k / BigInt::from(denominator)), "scale factor")?,
    })
}

impl ProjectionConfig {
    /// A configuration with explicitly chosen widths, cost bounds and budget.
    ///
    /// Non-positive `cost_max` entries are raised to `ell`.
    pub fn custom(
        ell: Vec<Rational>,
        cost_max: Vec<Rational>,
        budget_used: Vec<Rational>,
        horizon: usize,
        denominator: i64,
    ) -> Result<Self> {
        let epsilon = ell.first().cloned().unwrap_or_else(rational::zero) * rational::int(horizon as i64);
        Self::assemble(Mode::Additive, epsilon, horizon, denominator, ell, cost_max, budget_used, false)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        mode: Mode,
        epsilon: Rational,
        horizon: usize,
        denominator: i64,
        ell: Vec<Rational>,
        cost_max: Vec<Rational>,
        budget_used: Vec<Rational>,
        positive_costs: bool,
    ) -> Result<Self> {
        let dim = ell.len();
        if cost_max.len() != dim || budget_used.len() != dim || dim == 0 {
            return Err(Error::config("projection vectors must share one positive dimension"));
        }
        if horizon == 0 || denominator <= 0 {
            return Err(Error::config("projection needs a positive horizon and denominator"));
        }
        if let Some(bad) = ell.iter().find(|l| !l.is_positive()) {
            return Err(Error::config(format!("grid width must be positive, got {bad}")));
        }
        let cost_max: Vec<Rational> = cost_max
            .into_iter()
            .zip(&ell)
            .map(|(c, l)| if c.is_positive() { c } else { l.clone() })
            .collect();
        let h = rational::int(horizon as i64);
        let inactive = cost_max.iter().zip(&budget_used).map(|(c, b)| &h * c <= *b).collect();
        let scaled = (0..dim)
            .map(|i| scale_dim(denominator, &ell[i], &budget_used[i], &cost_max[i]))
            .collect::<Result<_>>()?;
        Ok(Self {
            mode,
            epsilon,
            horizon,
            denominator,
            ell,
            cost_max,
            budget_used,
            positive_costs,
            inactive,
            scaled,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn epsilon(&self) -> &Rational {
        &self.epsilon
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn denominator(&self) -> i64 {
        self.denominator
    }

    pub fn dim(&self) -> usize {
        self.ell.len()
    }

    pub fn ell(&self) -> &[Rational] {
        &self.ell
    }

    pub fn cost_max(&self) -> &[Rational] {
        &self.cost_max
    }

    pub fn budget_used(&self) -> &[Rational] {
        &self.budget_used
    }

    pub fn positive_costs(&self) -> bool {
        self.positive_costs
    }

    /// Whether dimension `i` can never bind (`H * c_max <= budget`); such
    /// dimensions are pinned to grid index 0.
    pub fn is_inactive(&self, i: usize) -> bool {
        self.inactive[i]
    }

    /// True when no dimension can bind, so every layer holds one cost key.
    pub fn unconstrained(&self) -> bool {
        self.inactive.iter().all(|b| *b)
    }

    /// Prefix-cost bound guaranteed for policies solved under this
    /// configuration: `budget_used + H * ell` per dimension.
    pub fn violation_bound(&self) -> Vec<Rational> {
        let h = rational::int(self.horizon as i64);
        self.budget_used.iter().zip(&self.ell).map(|(b, l)| b + &h * l).collect()
    }

    /// Smallest and largest grid index an admissible approximate cost can take
    /// in dimension `i`.
    pub fn grid_index_range(&self, i: usize) -> (i64, i64) {
        if self.inactive[i] {
            return (0, 0);
        }
        let d = &self.scaled[i];
        let hi = d.budget.div_euclid(d.ell);
        let lo = if self.positive_costs {
            0
        } else {
            (d.budget - self.horizon as i128 * d.cost_max).div_euclid(d.ell).min(0)
        };
        (lo as i64, hi as i64)
    }

    /// Per-layer count bound `prod_i (H * c_max_i / ell_i + 2)`, floored.
    pub fn grid_count_bound(&self) -> u128 {
        let h = rational::int(self.horizon as i64);
        (0..self.dim())
            .map(|i| {
                if self.inactive[i] {
                    1
                } else {
                    let v = &h * &self.cost_max[i] / &self.ell[i] + rational::int(2);
                    v.floor().to_integer().to_u128().unwrap_or(u128::MAX)
                }
            })
            .fold(1u128, |acc, v| acc.saturating_mul(v))
    }

    /// Cost represented by a grid key.
    pub fn grid_value(&self, key: &[i64]) -> Vec<Rational> {
        key.iter().zip(&self.ell).map(|(g, l)| rational::int(*g) * l).collect()
    }

    pub(crate) fn initial_key(&self) -> Key {
        smallvec::smallvec![0; self.dim()]
    }

    /// Applies the projection at step `h` to grid key `g` and instance cost `c`.
    pub(crate) fn step_key(&self, h: usize, g: &[i64], c: &CostVector) -> Key {
        let remaining = (self.horizon - h) as i128;
        let mut out = Key::with_capacity(g.len());
        for (i, &gi) in g.iter().enumerate() {
            if self.inactive[i] {
                out.push(0);
                continue;
            }
            let d = &self.scaled[i];
            let cost = c.components()[i] as i128 * d.cost_factor;
            let threshold = d.budget - remaining * d.cost_max;
            let next = if gi as i128 * d.ell + cost >= threshold {
                gi as i128 + cost.div_euclid(d.ell)
            } else {
                threshold.div_euclid(d.ell)
            };
            out.push(next as i64);
        }
        out
    }

    /// `g * ell <= budget_used` on every active dimension.
    pub(crate) fn key_admissible(&self, g: &[i64]) -> bool {
        g.iter()
            .zip(&self.scaled)
            .zip(&self.inactive)
            .all(|((g, d), off)| *off || *g as i128 * d.ell <= d.budget)
    }
}

/// Builds a projection configuration realising one of the approximation
/// modes, with `c_max` taken from the cost supports.
pub fn make_config(spec: &CmdpSpec, mode: Mode, epsilon: &Rational) -> Result<ProjectionConfig> {
    make_config_with_cost_max(spec, mode, epsilon, &spec.support_cost_max())
}

/// As [`make_config`] with a declared per-dimension cost bound.
pub fn make_config_with_cost_max(
    spec: &CmdpSpec,
    mode: Mode,
    epsilon: &Rational,
    cost_max: &[Rational],
) -> Result<ProjectionConfig> {
    if mode == Mode::Exact {
        return Err(Error::config("exact mode has no projection"));
    }
    if !epsilon.is_positive() {
        return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !matches!(spec.constraint(), ConstraintKind::AnytimeUpper) {
        return Err(Error::config("approximation modes support anytime upper-bound constraints only"));
    }
    if cost_max.len() != spec.dim() {
        return Err(Error::config("c_max dimension mismatch"));
    }
    let h = rational::int(spec.horizon() as i64);
    let budget = spec.budget().to_rationals();
    let one = rational::one();
    let mut ell = Vec::with_capacity(budget.len());
    let mut used = Vec::with_capacity(budget.len());
    for b in &budget {
        let (l, u) = match mode {
            Mode::Additive => (epsilon / &h, b.clone()),
            Mode::FeasibleAdditive => (epsilon / &h, b - epsilon),
            Mode::Relative => {
                if b.is_zero() {
                    return Err(Error::config("relative mode requires a nonzero budget in every dimension"));
                }
                (epsilon * b.abs() / &h, b.clone())
            }
            Mode::FeasibleRelative => {
                if b.is_zero() {
                    return Err(Error::config("relative mode requires a nonzero budget in every dimension"));
                }
                let factor = if b.is_positive() { &one + epsilon } else { &one - epsilon };
                if !factor.is_positive() {
                    return Err(Error::config("feasible-relative mode with a negative budget requires epsilon < 1"));
                }
                let shrunk = b / factor;
                (epsilon * shrunk.abs() / &h, shrunk)
            }
            Mode::Exact => unreachable!(),
        };
        ell.push(l);
        used.push(u);
    }
    ProjectionConfig::assemble(
        mode,
        epsilon.clone(),
        spec.horizon(),
        spec.denominator(),
        ell,
        cost_max.to_vec(),
        used,
        spec.costs_nonnegative(),
    )
}

/// The projection `f_h(c_hat, c)` evaluated directly in rationals.
///
/// `c_hat` is an approximate cumulative cost on the grid. Dimensions that can
/// never bind are pinned to 0, matching the layered construction.
pub fn project(cfg: &ProjectionConfig, h: usize, c_hat: &[Rational], c: &CostVector) -> Result<Vec<Rational>> {
    if c_hat.len() != cfg.dim() || c.dim() != cfg.dim() {
        return Err(Error::config("projection dimension mismatch"));
    }
    if h == 0 || h > cfg.horizon {
        return Err(Error::config(format!("time step {h} outside 1..={}", cfg.horizon)));
    }
    let remaining = rational::int((cfg.horizon - h) as i64);
    let snap = |x: Rational, l: &Rational| (x / l).floor() * l;
    Ok((0..cfg.dim())
        .map(|i| {
            if cfg.inactive[i] {
                return rational::zero();
            }
            let l = &cfg.ell[i];
            let ci = c.component(i);
            let threshold = &cfg.budget_used[i] - &remaining * &cfg.cost_max[i];
            if &c_hat[i] + &ci >= threshold {
                &c_hat[i] + snap(ci, l)
            } else {
                snap(threshold, l)
            }
        })
        .collect())
}

/// Forward induction through the projection (safe exploration on the grid).
pub fn build_approx(spec: &CmdpSpec, cfg: &ProjectionConfig, limits: &BuildLimits) -> Result<LayeredMdp> {
    if cfg.horizon() != spec.horizon() || cfg.dim() != spec.dim() || cfg.denominator() != spec.denominator() {
        return Err(Error::config("projection configuration does not match the instance"));
    }
    forward_induction(spec, Protocol::Approximate(cfg), limits)
}

/// The sandwich relation between an exact cumulative cost `c_bar` at time `h`
/// and the approximate one `c_hat`: per dimension either
/// `c_hat <= c_bar <= c_hat + (h-1) ell`, or both lie below
/// `budget - (H-h+1) c_max`.
pub fn sandwich_holds(cfg: &ProjectionConfig, h: usize, c_bar: &[Rational], c_hat: &[Rational]) -> bool {
    let steps_done = rational::int(h as i64 - 1);
    let remaining = rational::int((cfg.horizon + 1 - h) as i64);
    (0..cfg.dim()).all(|i| {
        let within = c_hat[i] <= c_bar[i] && c_bar[i] <= &c_hat[i] + &steps_done * &cfg.ell[i];
        let floor = &cfg.budget_used[i] - &remaining * &cfg.cost_max[i];
        within || (c_bar[i] <= floor && c_hat[i] <= floor)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    fn scalar_cfg(ell: Rational, cost_max: Rational, budget: Rational, horizon: usize, den: i64) -> ProjectionConfig {
        ProjectionConfig::custom(vec![ell], vec![cost_max], vec![budget], horizon, den).unwrap()
    }

    #[test]
    fn projection_examples() {
        let cfg = scalar_cfg(ratio(1, 2), rational::int(1), rational::int(1), 2, 10);
        let c = |n| CostVector::scalar(n, 10).unwrap();
        assert_eq!(project(&cfg, 1, &[rational::zero()], &c(0)).unwrap(), vec![rational::zero()]);
        // at h = 2 the threshold is B = 1, so a zero total is lifted to the grid point below it
        assert_eq!(project(&cfg, 2, &[rational::zero()], &c(0)).unwrap(), vec![rational::int(1)]);
        assert_eq!(project(&cfg, 1, &[rational::zero()], &c(7)).unwrap(), vec![ratio(1, 2)]);
        assert_eq!(project(&cfg, 1, &[rational::zero()], &c(-15)).unwrap(), vec![rational::zero()]);
    }

    #[test]
    fn mode_parameters() {
        let spec = crate::instances::gen_hard_family(10, &rational::int(10), 7, 1024).unwrap();
        let cfg = make_config(&spec, Mode::Additive, &ratio(1, 10)).unwrap();
        assert_eq!(cfg.ell(), &[ratio(1, 100)]);
        let cfg = make_config(&spec, Mode::FeasibleRelative, &ratio(1, 10)).unwrap();
        assert_eq!(cfg.budget_used(), &[ratio(100, 11)]);
        assert_eq!(cfg.violation_bound(), vec![rational::int(10)]);
        let cfg = make_config(&spec, Mode::FeasibleAdditive, &ratio(1, 10)).unwrap();
        assert_eq!(cfg.budget_used(), &[ratio(99, 10)]);
        let zero = crate::instances::gen_hard_family(3, &rational::zero(), 7, 1024).unwrap();
        assert!(matches!(make_config(&zero, Mode::Relative, &ratio(1, 10)), Err(Error::Config(_))));
        assert!(make_config(&spec, Mode::Exact, &ratio(1, 10)).is_err());
        assert!(make_config(&spec, Mode::Additive, &rational::zero()).is_err());
    }

    #[test]
    fn never_binding_budget_collapses() {
        let spec = crate::instances::gen_hard_family(5, &rational::int(5), 1, 1024).unwrap();
        let cfg = make_config(&spec, Mode::Relative, &ratio(1, 10)).unwrap();
        assert!(cfg.unconstrained());
        assert_eq!(cfg.grid_count_bound(), 1);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("fuzzy".parse::<Mode>().is_err());
    }

    proptest! {
        #[test]
        fn integer_projection_matches_rational_formula(
            ell_n in 1i64..7, ell_d in 1i64..7,
            cmax_n in 1i64..9, b_n in -8i64..12, horizon in 1usize..6,
            h_off in 0usize..6, g in -20i64..20, c in -9i64..9,
        ) {
            let den = 4;
            let cfg = scalar_cfg(ratio(ell_n, ell_d), ratio(cmax_n, 2), ratio(b_n, 2), horizon, den);
            let h = 1 + h_off % horizon;
            let key = cfg.step_key(h, &[g], &CostVector::scalar(c, den).unwrap());
            let c_hat = cfg.grid_value(&[g]);
            let direct = project(&cfg, h, &c_hat, &CostVector::scalar(c, den).unwrap()).unwrap();
            prop_assert_eq!(cfg.grid_value(&key), direct);
        }

        #[test]
        fn projection_lands_on_grid_and_does_not_overshoot(
            ell_d in 1i64..9, b_n in 1i64..16, g in 0i64..10, c in -6i64..6, h in 1usize..5,
        ) {
            let cfg = scalar_cfg(ratio(1, ell_d), rational::int(2), ratio(b_n, 2), 4, 2);
            let c_hat = cfg.grid_value(&[g]);
            let cost = CostVector::scalar(c, 2).unwrap();
            let out = project(&cfg, h, &c_hat, &cost).unwrap();
            prop_assert!((&out[0] / &cfg.ell()[0]).is_integer());
            let exact = &c_hat[0] + cost.component(0);
            if out[0] > exact {
                // only the truncation branch may move upward, and never past its threshold
                let threshold = &cfg.budget_used()[0] - rational::int((4 - h) as i64) * &cfg.cost_max()[0];
                prop_assert!(exact < threshold && out[0] <= threshold);
            }
        }
    }
}
