//! Interaction protocols, rollouts, exhaustive trajectory enumeration and
//! Monte Carlo audits.
//!
//! Under the exact protocol the policy observes `(s_h, c_bar_h)`; under a
//! projection it observes `(s_h, c_hat_h)` with `c_hat_{h+1} = f_h(c_hat_h, c_h)`.
//! Rewards are the deterministic means.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::ProjectionConfig;
use crate::cost::{CostVector, Key};
use crate::error::{Error, Result};
use crate::layered::Protocol;
use crate::policy::AugmentedPolicy;
use crate::rational::{self, Rational};
use crate::spec::{anytime_feasible_trace, CmdpSpec};

pub const DEFAULT_TRAJECTORY_CEILING: usize = 1_000_000;

/// Generator for one episode: seeded by `seed`, stream selected by `episode`.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Draws an index from exact probabilities.
pub(crate) fn sample_index<R: Rng>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrajectoryStep {
    pub h: usize,
    pub state: usize,
    pub action: usize,
    pub cost: CostVector,
    pub reward: Rational,
    /// Exact cumulative cost before this step.
    pub c_bar: Key,
    /// Approximate cumulative cost (grid key) before this step.
    pub c_hat: Option<Key>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub final_state: usize,
    pub final_c_bar: Key,
    pub final_c_hat: Option<Key>,
}

impl Trajectory {
    pub fn total_reward(&self) -> Rational {
        self.steps.iter().map(|s| s.reward.clone()).sum()
    }

    pub fn costs(&self) -> Vec<CostVector> {
        self.steps.iter().map(|s| s.cost.clone()).collect()
    }

    /// Componentwise maximum prefix sum over `h = 1..=H+1` (numerators).
    pub fn max_prefix(&self) -> Key {
        let mut best = self.final_c_bar.clone();
        for s in &self.steps {
            for (b, c) in best.iter_mut().zip(&s.c_bar) {
                *b = (*b).max(*c);
            }
        }
        best
    }

    pub fn feasible(&self, spec: &CmdpSpec) -> bool {
        anytime_feasible_trace(&self.costs(), spec)
    }

    /// Every nonempty prefix sum is `<= bound` componentwise (exact rationals).
    pub fn within(&self, bound: &[Rational], denominator: i64) -> bool {
        let check = |k: &Key| k.iter().zip(bound).all(|(c, b)| rational::ratio(*c, denominator) <= *b);
        self.steps.iter().skip(1).all(|s| check(&s.c_bar)) && (self.steps.is_empty() || check(&self.final_c_bar))
    }

    /// One line per step: `h s a | cost | c_bar | c_hat` (numerators).
    pub fn dump(&self) -> String {
        let join = |k: &[i64]| k.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::from("h,s,a,cost,c_bar,c_hat\n");
        for s in &self.steps {
            let hat = s.c_hat.as_ref().map(|k| join(k)).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},\"{}\",\"{}\",\"{}\"", s.h, s.state, s.action, join(s.cost.components()), join(&s.c_bar), hat);
        }
        out
    }
}

fn observation(c_bar: &Key, c_hat: &Option<Key>) -> Key {
    c_hat.clone().unwrap_or_else(|| c_bar.clone())
}

fn choose_action(
    spec: &CmdpSpec,
    policy: &AugmentedPolicy,
    protocol: Protocol<'_>,
    h: usize,
    s: usize,
    obs: &Key,
) -> Result<usize> {
    let a = policy
        .get(h, s, obs)
        .ok_or_else(|| Error::Protocol(format!("policy undefined at (h={h}, s={s}, key={obs:?})")))?;
    if a >= spec.num_actions() || !protocol.admissible(spec, h, s, a, obs)? {
        return Err(Error::Protocol(format!("policy action {a} not admissible at (h={h}, s={s}, key={obs:?})")));
    }
    Ok(a)
}

fn protocol_of(projection: Option<&ProjectionConfig>) -> Protocol<'_> {
    match projection {
        Some(cfg) => Protocol::Approximate(cfg),
        None => Protocol::Exact,
    }
}

/// One episode under the exact (`projection = None`) or approximate protocol.
pub fn rollout(
    spec: &CmdpSpec,
    policy: &AugmentedPolicy,
    projection: Option<&ProjectionConfig>,
    seed: u64,
    episode: u64,
) -> Result<Trajectory> {
    let protocol = protocol_of(projection);
    let mut rng = episode_rng(seed, episode);
    let mut s = spec.initial_state();
    let mut c_bar: Key = smallvec::smallvec![0; spec.dim()];
    let mut c_hat = projection.map(|cfg| cfg.initial_key());
    let mut steps = Vec::with_capacity(spec.horizon());
    for h in 1..=spec.horizon() {
        let obs = observation(&c_bar, &c_hat);
        let a = choose_action(spec, policy, protocol, h, s, &obs)?;
        let dist = spec.cost(h, s, a);
        let cost = dist.support()[sample_index(&mut rng, dist.support().iter().map(|(_, p)| rational::to_f64(p)))]
            .0
            .clone();
        let row = spec.transition(h, s, a);
        let next = row[sample_index(&mut rng, row.iter().map(|(_, p)| rational::to_f64(p)))].0;
        steps.push(TrajectoryStep {
            h,
            state: s,
            action: a,
            cost: cost.clone(),
            reward: spec.reward(h, s, a).clone(),
            c_bar: c_bar.clone(),
            c_hat: c_hat.clone(),
        });
        c_bar = c_bar.iter().zip(cost.components()).map(|(x, y)| x + y).collect();
        c_hat = projection.map(|cfg| cfg.step_key(h, c_hat.as_ref().expect("set with projection"), &cost));
        s = next;
    }
    Ok(Trajectory { steps, final_state: s, final_c_bar: c_bar, final_c_hat: c_hat })
}

/// Every positive-probability trajectory with its exact probability.
pub fn enumerate_trajectories(
    spec: &CmdpSpec,
    policy: &AugmentedPolicy,
    projection: Option<&ProjectionConfig>,
    ceiling: usize,
) -> Result<Vec<(Trajectory, Rational)>> {
    let protocol = protocol_of(projection);
    let start = Trajectory {
        steps: Vec::new(),
        final_state: spec.initial_state(),
        final_c_bar: smallvec::smallvec![0; spec.dim()],
        final_c_hat: projection.map(|cfg| cfg.initial_key()),
    };
    let mut frontier = vec![(start, rational::one())];
    for h in 1..=spec.horizon() {
        let mut next_frontier = Vec::new();
        for (traj, p) in frontier {
            let s = traj.final_state;
            let obs = observation(&traj.final_c_bar, &traj.final_c_hat);
            let a = choose_action(spec, policy, protocol, h, s, &obs)?;
            for (cost, pc) in spec.cost(h, s, a).support() {
                for (t, pt) in spec.transition(h, s, a) {
                    if next_frontier.len() >= ceiling {
                        return Err(Error::resource(format!("more than {ceiling} trajectories")));
                    }
                    let mut next = traj.clone();
                    next.steps.push(TrajectoryStep {
                        h,
                        state: s,
                        action: a,
                        cost: cost.clone(),
                        reward: spec.reward(h, s, a).clone(),
                        c_bar: traj.final_c_bar.clone(),
                        c_hat: traj.final_c_hat.clone(),
                    });
                    next.final_state = *t;
                    next.final_c_bar = traj.final_c_bar.iter().zip(cost.components()).map(|(x, y)| x + y).collect();
                    next.final_c_hat = projection.map(|cfg| cfg.step_key(h, traj.final_c_hat.as_ref().expect("set"), cost));
                    next_frontier.push((next, &p * pc * pt));
                }
            }
        }
        frontier = next_frontier;
    }
    Ok(frontier)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloSummary {
    pub episodes: u64,
    pub mean: f64,
    pub std_error: f64,
    /// Episodes with some prefix violating the original constraint.
    pub violations: u64,
    /// Episodes exceeding the mode's guaranteed bound (`B` when exact).
    pub bound_violations: u64,
}

/// Sample mean return with standard error and violation counts.
pub fn monte_carlo_value(
    spec: &CmdpSpec,
    policy: &AugmentedPolicy,
    projection: Option<&ProjectionConfig>,
    episodes: u64,
    seed: u64,
) -> Result<MonteCarloSummary> {
    if episodes == 0 {
        return Err(Error::config("episodes must be at least 1"));
    }
    let bound = match projection {
        Some(cfg) => cfg.violation_bound(),
        None => spec.budget().to_rationals(),
    };
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    let (mut violations, mut bound_violations) = (0, 0);
    for e in 0..episodes {
        let traj = rollout(spec, policy, projection, seed, e)?;
        let r = rational::to_f64(&traj.total_reward());
        sum += r;
        sum_sq += r * r;
        if !traj.feasible(spec) {
            violations += 1;
        }
        let exceeded = match projection {
            Some(_) => !traj.within(&bound, spec.denominator()),
            None => !traj.feasible(spec),
        };
        if exceeded {
            bound_violations += 1;
        }
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = if episodes > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(MonteCarloSummary { episodes, mean, std_error: (var / n).sqrt(), violations, bound_violations })
}
