//! Instance generators and the JSON instance file format.

use std::path::Path;

use num_traits::Signed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostDistribution, CostVector};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::spec::{ensure_valid, CmdpSpec, ConstraintKind};

/// Default quantization of uniform draws in the hard family.
pub const DEFAULT_QUANTUM: i64 = 1 << 10;

fn rational_den(r: &Rational) -> Result<i64> {
    r.denom().try_into().map_err(|_| Error::config(format!("denominator of {r} overflows i64")))
}

fn scalar_budget(budget: &Rational) -> Result<(i64, CostVector)> {
    let den = rational_den(budget)?;
    Ok((den, CostVector::from_rationals(std::slice::from_ref(budget), den)?))
}

/// Single-state, two-action family: action 0 is free and pays nothing, action
/// 1 at step `h` pays reward `x_h` and costs `y_h`, both uniform on `[0, 1]`
/// quantized to multiples of `1/quantum`.
pub fn gen_hard_family(horizon: usize, budget: &Rational, seed: u64, quantum: i64) -> Result<CmdpSpec> {
    if horizon == 0 || quantum <= 0 {
        return Err(Error::config("hard family needs H >= 1 and a positive quantum"));
    }
    let (bden, _) = scalar_budget(budget)?;
    let den = rational::lcm_i64(quantum, bden).ok_or_else(|| Error::config("denominator overflow"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = CmdpSpec::new(1, 2, horizon, 0, CostVector::from_rationals(std::slice::from_ref(budget), den)?);
    spec.set_all_self_loops();
    let factor = den / quantum;
    for h in 1..=horizon {
        let x = rng.gen_range(0..=quantum);
        let y = rng.gen_range(0..=quantum);
        spec.set_reward(h, 0, 1, rational::ratio(x, quantum));
        spec.set_costs(h, 0, 1, CostDistribution::deterministic(CostVector::scalar(y * factor, den)?));
    }
    spec.name = Some(format!("hard-H{horizon}-b{budget}-seed{seed}"));
    Ok(spec)
}

/// 0/1 knapsack as a cMDP: step `i` offers item `i` (action 1) with reward
/// `values[i]` and cost `weights[i]`. An empty item list yields one dummy
/// zero item.
pub fn gen_knapsack(values: &[i64], weights: &[i64], budget: i64) -> Result<CmdpSpec> {
    if values.len() != weights.len() {
        return Err(Error::config("values and weights must have equal length"));
    }
    let (values, weights) = if values.is_empty() { (&[0][..], &[0][..]) } else { (values, weights) };
    let mut spec = CmdpSpec::new(1, 2, values.len(), 0, CostVector::scalar(budget, 1)?);
    spec.set_all_self_loops();
    for (i, (v, w)) in values.iter().zip(weights).enumerate() {
        spec.set_reward(i + 1, 0, 1, rational::int(*v));
        spec.set_costs(i + 1, 0, 1, CostDistribution::deterministic(CostVector::scalar(*w, 1)?));
    }
    spec.name = Some("knapsack".to_string());
    Ok(spec)
}

/// Partition as a two-constraint cMDP: step `h` puts `x_h` into dimension
/// `a`, both budgets are `Sum(X)/2`, and the last step pays reward 1.
pub fn gen_partition(items: &[i64]) -> Result<CmdpSpec> {
    if items.iter().any(|x| *x < 0) {
        return Err(Error::config("partition items must be nonnegative"));
    }
    let items = if items.is_empty() { &[0][..] } else { items };
    let sum: i64 = items.iter().sum();
    let (den, half) = if sum % 2 == 0 { (1, sum / 2) } else { (2, sum) };
    let mut spec = CmdpSpec::new(1, 2, items.len(), 0, CostVector::new(&[half, half], den)?);
    spec.set_all_self_loops();
    for (i, x) in items.iter().enumerate() {
        let h = i + 1;
        spec.set_costs(h, 0, 0, CostDistribution::deterministic(CostVector::new(&[x * den, 0], den)?));
        spec.set_costs(h, 0, 1, CostDistribution::deterministic(CostVector::new(&[0, x * den], den)?));
    }
    let last = items.len();
    spec.set_reward(last, 0, 0, rational::one());
    spec.set_reward(last, 0, 1, rational::one());
    spec.name = Some("partition".to_string());
    Ok(spec)
}

/// The instance separating history-dependent from cost-oblivious policies:
/// at step `h` every action costs `B` or `0` with probability 1/2 each; at
/// step `h + 1` action 1 pays `x` and costs `B`.
pub fn gen_markovian_gap(horizon: usize, h: usize, x: &Rational, budget: &Rational) -> Result<CmdpSpec> {
    if h == 0 || h >= horizon {
        return Err(Error::config("markovian gap needs 1 <= h <= H - 1"));
    }
    if !x.is_positive() || !budget.is_positive() {
        return Err(Error::config("markovian gap needs x > 0 and B > 0"));
    }
    let (den, b) = scalar_budget(budget)?;
    let mut spec = CmdpSpec::new(1, 2, horizon, 0, b.clone());
    spec.set_all_self_loops();
    let zero = CostVector::zero(1, den);
    let half = rational::ratio(1, 2);
    for a in 0..2 {
        spec.set_costs(h, 0, a, CostDistribution::new(vec![(b.clone(), half.clone()), (zero.clone(), half.clone())]));
    }
    spec.set_costs(h + 1, 0, 1, CostDistribution::deterministic(b));
    spec.set_reward(h + 1, 0, 1, x.clone());
    spec.name = Some(format!("markovian-gap-H{horizon}-h{h}"));
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RandomOptions {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Largest cost support size.
    pub support: usize,
    pub dim: usize,
    pub denominator: i64,
    /// Cost numerators are drawn from `[-cost_bound, cost_bound]`
    /// (`[0, cost_bound]` without negative costs).
    pub cost_bound: i64,
    pub negative_costs: bool,
    /// Makes action 0 cost exactly zero everywhere.
    pub zero_cost_action: bool,
    /// Rewards are multiples of `1/reward_den` in `[0, 1]`.
    pub reward_den: i64,
    /// Fixed budget numerators; drawn at random when absent.
    pub budget: Option<Vec<i64>>,
}

impl Default for RandomOptions {
    fn default() -> Self {
        Self {
            num_states: 2,
            num_actions: 2,
            horizon: 3,
            support: 2,
            dim: 1,
            denominator: 2,
            cost_bound: 2,
            negative_costs: true,
            zero_cost_action: false,
            reward_den: 4,
            budget: None,
        }
    }
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<i64> {
    loop {
        let w: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=3)).collect();
        if w.iter().any(|x| *x > 0) {
            return w;
        }
    }
}

/// Random tabular instance; always passes validation.
pub fn gen_random(opts: &RandomOptions, seed: u64) -> Result<CmdpSpec> {
    let RandomOptions { num_states: s_count, num_actions: a_count, horizon, support, dim, denominator: den, .. } =
        *opts;
    if s_count == 0 || a_count == 0 || horizon == 0 || support == 0 || dim == 0 || den <= 0 || opts.reward_den <= 0 {
        return Err(Error::config("random instance dimensions must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = opts.cost_bound.max(0);
    let low = if opts.negative_costs { -bound } else { 0 };
    let budget: Vec<i64> = match &opts.budget {
        Some(b) if b.len() == dim => b.clone(),
        Some(_) => return Err(Error::config("budget dimension mismatch")),
        None => {
            let top = (horizon as i64 * bound / 2).max(1);
            (0..dim).map(|_| rng.gen_range(-(bound / 2)..=top)).collect()
        }
    };
    let mut spec = CmdpSpec::new(s_count, a_count, horizon, 0, CostVector::new(&budget, den)?);
    for h in 1..=horizon {
        for s in 0..s_count {
            for a in 0..a_count {
                let w = random_weights(&mut rng, s_count);
                let total: i64 = w.iter().sum();
                let row = w.iter().enumerate().map(|(t, x)| (t, rational::ratio(*x, total))).collect();
                spec.set_transition(h, s, a, row);
                spec.set_reward(h, s, a, rational::ratio(rng.gen_range(0..=opts.reward_den), opts.reward_den));
                if opts.zero_cost_action && a == 0 {
                    continue;
                }
                let n = rng.gen_range(1..=support);
                let mut costs: Vec<CostVector> = Vec::with_capacity(n);
                let max_distinct = (bound - low + 1).pow(dim as u32) as usize;
                while costs.len() < n.min(max_distinct) {
                    let c: Vec<i64> = (0..dim).map(|_| rng.gen_range(low..=bound)).collect();
                    let c = CostVector::new(&c, den)?;
                    if !costs.contains(&c) {
                        costs.push(c);
                    }
                }
                let w: Vec<i64> = costs.iter().map(|_| rng.gen_range(1..=3)).collect();
                let total: i64 = w.iter().sum();
                let dist = costs.into_iter().zip(&w).map(|(c, x)| (c, rational::ratio(*x, total))).collect();
                spec.set_costs(h, s, a, CostDistribution::new(dist));
            }
        }
    }
    spec.name = Some(format!("random-seed{seed}"));
    Ok(spec)
}

/// Options for a random tiny instance: `S <= 3`, `A <= 2`, `H <= 4`,
/// support `<= 2`, `d = 1`, denominator `<= 4`.
pub fn tiny_options(seed: u64) -> RandomOptions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7171);
    let denominator = rng.gen_range(1..=4);
    RandomOptions {
        num_states: rng.gen_range(1..=3),
        num_actions: rng.gen_range(1..=2),
        horizon: rng.gen_range(1..=4),
        support: rng.gen_range(1..=2),
        dim: 1,
        denominator,
        cost_bound: denominator * rng.gen_range(1..=2),
        negative_costs: rng.gen_bool(0.5),
        zero_cost_action: false,
        reward_den: 4,
        budget: None,
    }
}

pub fn gen_tiny(seed: u64) -> Result<CmdpSpec> {
    gen_random(&tiny_options(seed), seed)
}

/// Random items and capacity for knapsack checks: up to `max_items` items,
/// weights in `1..=max_weight`, values in `0..=30`.
pub fn random_knapsack(seed: u64, max_items: usize, max_weight: i64) -> (Vec<i64>, Vec<i64>, i64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..=max_items);
    let values = (0..n).map(|_| rng.gen_range(0..=30)).collect();
    let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=max_weight)).collect();
    let total: i64 = weights.iter().sum();
    let budget = rng.gen_range(0..=total.max(1));
    (values, weights, budget)
}

/// Random multiset for partition checks; roughly half the draws are forced
/// to be solvable by construction.
pub fn random_partition(seed: u64, max_items: usize, max_value: i64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_items);
    let mut items: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=max_value)).collect();
    if rng.gen_bool(0.5) && n >= 2 {
        // append a mirrored half so an equal split exists
        let half = n / 2;
        let mirror: Vec<i64> = items[..half].to_vec();
        items.truncate(n - half);
        items.extend(mirror);
        items.shuffle(&mut rng);
    }
    items
}

// ---------------------------------------------------------------------------
// File format

const FORMAT_VERSION: u32 = 1;

type CostEntry = (Vec<i64>, i64, i64);

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    #[serde(rename = "H")]
    horizon: usize,
    d: usize,
    s0: usize,
    denominator: i64,
    budget: Vec<i64>,
    constraint_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<Vec<Vec<i64>>>,
    transitions: Vec<(usize, usize, usize, usize, i64, i64)>,
    #[serde(default)]
    rewards: Vec<(usize, usize, usize, i64, i64)>,
    #[serde(default)]
    costs: Vec<(usize, usize, usize, Vec<CostEntry>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_max: Option<Vec<i64>>,
}

fn pair(r: &Rational, what: &str) -> Result<(i64, i64)> {
    rational::to_i64_pair(r).ok_or_else(|| Error::config(format!("{what} {r} does not fit in i64")))
}

/// Serializes an instance to the JSON file format.
pub fn to_json(spec: &CmdpSpec) -> Result<String> {
    let mut transitions = Vec::new();
    let mut rewards = Vec::new();
    let mut costs = Vec::new();
    let zero = CostDistribution::deterministic(CostVector::zero(spec.dim(), spec.denominator()));
    for h in 1..=spec.horizon() {
        for s in 0..spec.num_states() {
            for a in 0..spec.num_actions() {
                for (t, p) in spec.transition(h, s, a) {
                    let (n, d) = pair(p, "probability")?;
                    transitions.push((h, s, a, *t, n, d));
                }
                let r = spec.reward(h, s, a);
                if !num_traits::Zero::is_zero(r) {
                    let (n, d) = pair(r, "reward")?;
                    rewards.push((h, s, a, n, d));
                }
                let dist = spec.cost(h, s, a);
                if *dist != zero {
                    let entries = dist
                        .support()
                        .iter()
                        .map(|(c, p)| {
                            let (n, d) = pair(p, "probability")?;
                            Ok((c.components().to_vec(), n, d))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    costs.push((h, s, a, entries));
                }
            }
        }
    }
    let (kind, lower, upper) = match spec.constraint() {
        ConstraintKind::AnytimeUpper => ("anytime-upper", None, None),
        ConstraintKind::Interval { lower, upper } => (
            "interval",
            Some(lower.iter().map(|c| c.components().to_vec()).collect()),
            Some(upper.iter().map(|c| c.components().to_vec()).collect()),
        ),
    };
    let file = InstanceFile {
        version: FORMAT_VERSION,
        name: spec.name.clone(),
        num_states: spec.num_states(),
        num_actions: spec.num_actions(),
        horizon: spec.horizon(),
        d: spec.dim(),
        s0: spec.initial_state(),
        denominator: spec.denominator(),
        budget: spec.budget().components().to_vec(),
        constraint_kind: kind.to_string(),
        lower,
        upper,
        transitions,
        rewards,
        costs,
        c_max: spec.declared_cost_max().map(|c| c.components().to_vec()),
    };
    serde_json::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
}

fn parse_ratio(n: i64, d: i64, field: &str) -> Result<Rational> {
    if d == 0 {
        return Err(Error::Parse(format!("{field}: zero denominator")));
    }
    Ok(rational::ratio(n, d))
}

fn check_cell(file: &InstanceFile, h: usize, s: usize, a: usize, field: &str) -> Result<()> {
    if h == 0 || h > file.horizon || s >= file.num_states || a >= file.num_actions {
        return Err(Error::Parse(format!("{field}: index (h={h},s={s},a={a}) out of range")));
    }
    Ok(())
}

fn cost_vec(nums: &[i64], file: &InstanceFile, field: &str) -> Result<CostVector> {
    if nums.len() != file.d {
        return Err(Error::Parse(format!("{field}: expected {} components, got {}", file.d, nums.len())));
    }
    CostVector::new(nums, file.denominator).map_err(|e| Error::Parse(format!("{field}: {e}")))
}

/// Parses and validates an instance document.
pub fn from_json(text: &str) -> Result<CmdpSpec> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.version != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported version {}", file.version)));
    }
    if file.denominator <= 0 {
        return Err(Error::Parse(format!("denominator: must be positive, got {}", file.denominator)));
    }
    let budget = cost_vec(&file.budget, &file, "budget")?;
    let mut spec = CmdpSpec::new(file.num_states, file.num_actions, file.horizon, file.s0, budget);
    spec.name = file.name.clone();
    let mut rows: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); file.horizon * file.num_states * file.num_actions];
    let cell = |h: usize, s: usize, a: usize| ((h - 1) * file.num_states + s) * file.num_actions + a;
    for (i, (h, s, a, t, n, d)) in file.transitions.iter().enumerate() {
        let field = format!("transitions[{i}]");
        check_cell(&file, *h, *s, *a, &field)?;
        if *t >= file.num_states {
            return Err(Error::Parse(format!("{field}: next state {t} out of range")));
        }
        rows[cell(*h, *s, *a)].push((*t, parse_ratio(*n, *d, &field)?));
    }
    for h in 1..=file.horizon {
        for s in 0..file.num_states {
            for a in 0..file.num_actions {
                spec.set_transition(h, s, a, std::mem::take(&mut rows[cell(h, s, a)]));
            }
        }
    }
    for (i, (h, s, a, n, d)) in file.rewards.iter().enumerate() {
        let field = format!("rewards[{i}]");
        check_cell(&file, *h, *s, *a, &field)?;
        spec.set_reward(*h, *s, *a, parse_ratio(*n, *d, &field)?);
    }
    for (i, (h, s, a, entries)) in file.costs.iter().enumerate() {
        let field = format!("costs[{i}]");
        check_cell(&file, *h, *s, *a, &field)?;
        let support = entries
            .iter()
            .enumerate()
            .map(|(j, (nums, n, d))| {
                let f = format!("{field}[{j}]");
                Ok((cost_vec(nums, &file, &f)?, parse_ratio(*n, *d, &f)?))
            })
            .collect::<Result<Vec<_>>>()?;
        spec.set_costs(*h, *s, *a, CostDistribution::new(support));
    }
    match file.constraint_kind.as_str() {
        "anytime-upper" => {}
        "interval" => {
            let (Some(lower), Some(upper)) = (&file.lower, &file.upper) else {
                return Err(Error::Parse("interval constraint needs `lower` and `upper`".to_string()));
            };
            let conv = |v: &Vec<Vec<i64>>, name: &str| {
                v.iter().enumerate().map(|(k, c)| cost_vec(c, &file, &format!("{name}[{k}]"))).collect::<Result<Vec<_>>>()
            };
            spec.set_constraint(ConstraintKind::Interval { lower: conv(lower, "lower")?, upper: conv(upper, "upper")? });
        }
        other => return Err(Error::Parse(format!("constraint_kind: unknown value {other:?}"))),
    }
    if let Some(c) = &file.c_max {
        spec.set_declared_cost_max(Some(cost_vec(c, &file, "c_max")?));
    }
    ensure_valid(&spec)?;
    Ok(spec)
}

pub fn write_instance(spec: &CmdpSpec, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(spec)?)?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<CmdpSpec> {
    from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::validate_cmdp;

    #[test]
    fn generators_are_valid_and_round_trip() {
        let specs = vec![
            gen_hard_family(6, &rational::ratio(1, 10), 3, DEFAULT_QUANTUM).unwrap(),
            gen_knapsack(&[3, 4, 5], &[2, 3, 4], 5).unwrap(),
            gen_knapsack(&[], &[], 0).unwrap(),
            gen_partition(&[3, 1, 1, 2, 2, 1]).unwrap(),
            gen_partition(&[1, 2]).unwrap(),
            gen_markovian_gap(4, 2, &rational::int(10), &rational::ratio(3, 2)).unwrap(),
            gen_random(&RandomOptions { dim: 2, support: 3, ..Default::default() }, 9).unwrap(),
            gen_tiny(17).unwrap(),
        ];
        for spec in specs {
            assert!(validate_cmdp(&spec).is_empty(), "{:?}", validate_cmdp(&spec));
            assert_eq!(from_json(&to_json(&spec).unwrap()).unwrap(), spec);
        }
    }

    #[test]
    fn hard_family_is_seeded() {
        let b = rational::int(10);
        assert_eq!(gen_hard_family(10, &b, 5, 1024).unwrap(), gen_hard_family(10, &b, 5, 1024).unwrap());
        assert_ne!(gen_hard_family(10, &b, 5, 1024).unwrap(), gen_hard_family(10, &b, 6, 1024).unwrap());
        assert_eq!(gen_hard_family(4, &rational::ratio(1, 10), 0, 1024).unwrap().denominator(), 5120);
    }

    #[test]
    fn degenerate_knapsack_has_one_step() {
        assert_eq!(gen_knapsack(&[], &[], 3).unwrap().horizon(), 1);
        assert!(gen_knapsack(&[1], &[], 3).is_err());
    }

    #[test]
    fn markovian_gap_preconditions() {
        let one = rational::one();
        assert!(gen_markovian_gap(2, 2, &one, &one).is_err());
        assert!(gen_markovian_gap(2, 1, &rational::zero(), &one).is_err());
    }

    #[test]
    fn missing_denominator_is_a_parse_error() {
        let text = to_json(&gen_knapsack(&[1], &[1], 1).unwrap()).unwrap();
        let broken = text.replace("\"denominator\":1,", "");
        match from_json(&broken) {
            Err(Error::Parse(msg)) => assert!(msg.contains("denominator"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn negative_probability_is_a_validation_error() {
        let text = to_json(&gen_knapsack(&[1], &[1], 1).unwrap()).unwrap();
        let broken = text.replace("[1,0,0,0,1,1]", "[1,0,0,0,-1,1]");
        assert!(matches!(from_json(&broken), Err(Error::Validation(_))));
    }

    #[test]
    fn out_of_range_index_names_the_field() {
        let text = to_json(&gen_knapsack(&[1], &[1], 1).unwrap()).unwrap();
        let broken = text.replace("[1,0,0,0,1,1]", "[1,0,0,4,1,1]");
        match from_json(&broken) {
            Err(Error::Parse(msg)) => assert!(msg.starts_with("transitions[0]"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
