//! Learning through the interaction protocol.
//!
//! The environment wraps a tabular instance and exposes only the augmented
//! (or approximate) observation `(h, s, key)` together with the admissible
//! action set, computed from the true model. The learner is a model-based
//! optimistic planner: empirical transitions and mean rewards per
//! `(h, s, key, a)`, Hoeffding-style bonuses, and backward induction over
//! the observations seen so far.

use std::collections::HashMap;

use crate::approx::ProjectionConfig;
use crate::cost::{CostVector, Key};
use crate::error::{Error, Result};
use crate::layered::Protocol;
use crate::policy::AugmentedPolicy;
use crate::rational;
use crate::simulate::{episode_rng, sample_index};
use crate::spec::CmdpSpec;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation {
    /// Time index, `1..=H+1`.
    pub h: usize,
    pub state: usize,
    /// Exact cumulative-cost numerators, or grid indices under a projection.
    pub key: Key,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub cost: CostVector,
    pub observation: Observation,
    /// The episode is over: either `H` steps were taken or the new
    /// observation offers no admissible action.
    pub done: bool,
}

/// Episodic environment driven by observations and admissible action sets.
pub trait Environment {
    fn horizon(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Lower and upper bounds on a single step's reward.
    fn reward_range(&self) -> (f64, f64);
    /// Starts episode `episode` and returns the initial observation.
    fn reset(&mut self, episode: u64) -> Observation;
    /// Actions offered at the current observation.
    fn admissible_actions(&self) -> Vec<usize>;
    fn step(&mut self, action: usize) -> Result<StepOutcome>;
    /// Whether the current episode has breached the original constraint.
    fn violated(&self) -> bool;
    /// Componentwise maximum prefix cost of the current episode.
    fn max_prefix(&self) -> Vec<f64>;
}

/// Environment running the exact protocol (`projection = None`) or the
/// approximate one on top of a known instance.
pub struct ProtocolEnv {
    spec: CmdpSpec,
    projection: Option<ProjectionConfig>,
    seed: u64,
    rng: rand_chacha::ChaCha8Rng,
    obs: Observation,
    c_bar: Key,
    max_prefix: Key,
    violated: bool,
}

impl ProtocolEnv {
    pub fn new(spec: CmdpSpec, projection: Option<ProjectionConfig>, seed: u64) -> Result<Self> {
        crate::spec::ensure_valid(&spec)?;
        let dim = spec.dim();
        let obs = Observation { h: 1, state: spec.initial_state(), key: smallvec::smallvec![0; dim] };
        Ok(Self {
            rng: episode_rng(seed, 0),
            spec,
            projection,
            seed,
            obs,
            c_bar: smallvec::smallvec![0; dim],
            max_prefix: smallvec::smallvec![0; dim],
            violated: false,
        })
    }

    fn protocol(&self) -> Protocol<'_> {
        match &self.projection {
            Some(cfg) => Protocol::Approximate(cfg),
            None => Protocol::Exact,
        }
    }

    pub fn spec(&self) -> &CmdpSpec {
        &self.spec
    }
}

impl Environment for ProtocolEnv {
    fn horizon(&self) -> usize {
        self.spec.horizon()
    }

    fn num_actions(&self) -> usize {
        self.spec.num_actions()
    }

    fn reward_range(&self) -> (f64, f64) {
        let (lo, hi) = self.spec.reward_range();
        (rational::to_f64(&lo), rational::to_f64(&hi))
    }

    fn reset(&mut self, episode: u64) -> Observation {
        self.rng = episode_rng(self.seed, episode);
        let key = match &self.projection {
            Some(cfg) => cfg.initial_key(),
            None => smallvec::smallvec![0; self.spec.dim()],
        };
        self.obs = Observation { h: 1, state: self.spec.initial_state(), key };
        self.c_bar = smallvec::smallvec![0; self.spec.dim()];
        self.max_prefix = self.c_bar.clone();
        self.violated = false;
        self.obs.clone()
    }

    fn admissible_actions(&self) -> Vec<usize> {
        let Observation { h, state, key } = &self.obs;
        if *h > self.spec.horizon() {
            return Vec::new();
        }
        (0..self.spec.num_actions())
            .filter(|&a| self.protocol().admissible(&self.spec, *h, *state, a, key).unwrap_or(false))
            .collect()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if !self.admissible_actions().contains(&action) {
            return Err(Error::Protocol(format!("action {action} is not offered at {:?}", self.obs)));
        }
        let Observation { h, state, .. } = self.obs.clone();
        let dist = self.spec.cost(h, state, action);
        let i = sample_index(&mut self.rng, dist.support().iter().map(|(_, p)| rational::to_f64(p)));
        let cost = dist.support()[i].0.clone();
        let row = self.spec.transition(h, state, action);
        let next = row[sample_index(&mut self.rng, row.iter().map(|(_, p)| rational::to_f64(p)))].0;
        let reward = rational::to_f64(self.spec.reward(h, state, action));
        let key = match &self.projection {
            Some(cfg) => cfg.step_key(h, &self.obs.key, &cost),
            None => self.obs.key.iter().zip(cost.components()).map(|(x, y)| x + y).collect(),
        };
        self.c_bar = self.c_bar.iter().zip(cost.components()).map(|(x, y)| x + y).collect();
        for (m, c) in self.max_prefix.iter_mut().zip(&self.c_bar) {
            *m = (*m).max(*c);
        }
        if !self.spec.within_bounds(h, &self.c_bar) {
            self.violated = true;
        }
        self.obs = Observation { h: h + 1, state: next, key };
        let done = h == self.spec.horizon() || self.admissible_actions().is_empty();
        Ok(StepOutcome { reward, cost, observation: self.obs.clone(), done })
    }

    fn violated(&self) -> bool {
        self.violated
    }

    fn max_prefix(&self) -> Vec<f64> {
        let den = self.spec.denominator() as f64;
        self.max_prefix.iter().map(|c| *c as f64 / den).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    pub episodes: u64,
    /// Confidence parameter of the bonuses.
    pub delta: f64,
    /// Stop early once the optimistic and pessimistic root values differ by
    /// less than `gamma`.
    pub gamma: f64,
    pub bonus_scale: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self { episodes: 10_000, delta: 0.1, gamma: 0.1, bonus_scale: 1.0, seed: 0 }
    }
}

impl LearnerConfig {
    fn check(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("episodes must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta must lie in (0, 1)"));
        }
        if self.gamma.is_nan() || self.gamma <= 0.0 {
            return Err(Error::config("gamma must be positive"));
        }
        if self.bonus_scale.is_nan() || self.bonus_scale < 0.0 {
            return Err(Error::config("bonus scale must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub ret: f64,
    pub max_prefix: Vec<f64>,
    pub violation: bool,
    /// Steps taken (fewer than `H` when a dead end was reached).
    pub length: usize,
}

#[derive(Clone, Debug)]
pub struct LearnOutcome {
    pub policy: AugmentedPolicy,
    pub log: Vec<EpisodeRecord>,
    /// Value of the initial observation under the empirical model.
    pub estimated_value: f64,
}

#[derive(Default)]
struct ActionStats {
    visits: u64,
    reward_sum: f64,
    next: HashMap<Observation, u64>,
}

struct ObsStats {
    admissible: Vec<usize>,
    actions: HashMap<usize, ActionStats>,
}

struct Model {
    horizon: usize,
    rmin: f64,
    rmax: f64,
    table: HashMap<Observation, ObsStats>,
    /// Per-time observation lists, for backward sweeps.
    by_time: Vec<Vec<Observation>>,
}

#[derive(Clone, Copy)]
enum Estimate {
    Optimistic,
    Empirical,
    Pessimistic,
}

impl Model {
    fn record_obs(&mut self, obs: &Observation, admissible: Vec<usize>) {
        if !self.table.contains_key(obs) {
            self.by_time[obs.h - 1].push(obs.clone());
            self.table.insert(obs.clone(), ObsStats { admissible, actions: HashMap::new() });
        }
    }

    /// Values of every known observation, plus per-observation action choices.
    fn plan(&self, estimate: Estimate, delta: f64, bonus_scale: f64) -> HashMap<Observation, (f64, Option<usize>)> {
        let mut values: HashMap<Observation, (f64, Option<usize>)> = HashMap::new();
        let log_term = (2.0 * (self.table.len().max(1) as f64) * (self.horizon as f64) / delta).ln();
        for h in (1..=self.horizon + 1).rev() {
            for obs in &self.by_time[h - 1] {
                if h == self.horizon + 1 {
                    values.insert(obs.clone(), (0.0, None));
                    continue;
                }
                let stats = &self.table[obs];
                let togo = (self.horizon - h + 1) as f64;
                let (lo, hi) = (togo * self.rmin, togo * self.rmax);
                let mut best: Option<(f64, usize)> = None;
                for &a in &stats.admissible {
                    let q = match stats.actions.get(&a) {
                        Some(st) if st.visits > 0 => {
                            let n = st.visits as f64;
                            let mut q = st.reward_sum / n;
                            for (next, count) in &st.next {
                                let v = values.get(next).map_or(hi - self.rmax, |(v, _)| *v);
                                q += (*count as f64 / n) * v;
                            }
                            let bonus = bonus_scale * (hi - lo) * (log_term / (2.0 * n)).sqrt();
                            match estimate {
                                Estimate::Optimistic => (q + bonus).min(hi),
                                Estimate::Empirical => q,
                                Estimate::Pessimistic => (q - bonus).max(lo.min(q)),
                            }
                        }
                        _ => match estimate {
                            Estimate::Optimistic => hi,
                            Estimate::Empirical | Estimate::Pessimistic => continue,
                        },
                    };
                    if best.is_none_or(|(b, _)| q > b) {
                        best = Some((q, a));
                    }
                }
                let entry = match best {
                    Some((v, a)) => (v, Some(a)),
                    None if stats.admissible.is_empty() => (f64::NEG_INFINITY, None),
                    None => match estimate {
                        Estimate::Pessimistic => (lo, stats.admissible.first().copied()),
                        _ => (f64::NEG_INFINITY, stats.admissible.first().copied()),
                    },
                };
                values.insert(obs.clone(), entry);
            }
        }
        values
    }
}

/// Learns a policy by interacting with `env` for up to `cfg.episodes`
/// episodes and returns the greedy policy of the final empirical model.
pub fn learn_policy<E: Environment>(env: &mut E, cfg: &LearnerConfig) -> Result<LearnOutcome> {
    cfg.check()?;
    let horizon = env.horizon();
    let (rmin, rmax) = env.reward_range();
    let mut model = Model { horizon, rmin: rmin.min(0.0), rmax: rmax.max(0.0), table: HashMap::new(), by_time: vec![Vec::new(); horizon + 1] };
    let mut log = Vec::new();
    for episode in 0..cfg.episodes {
        let plan = model.plan(Estimate::Optimistic, cfg.delta, cfg.bonus_scale);
        let mut obs = env.reset(episode);
        let mut ret = 0.0;
        let mut length = 0;
        loop {
            let admissible = env.admissible_actions();
            model.record_obs(&obs, admissible.clone());
            if obs.h > horizon || admissible.is_empty() {
                break;
            }
            let action = match plan.get(&obs) {
                Some((_, Some(a))) => *a,
                _ => admissible[0],
            };
            let outcome = env.step(action)?;
            ret += outcome.reward;
            length += 1;
            let st = model.table.get_mut(&obs).expect("recorded").actions.entry(action).or_default();
            st.visits += 1;
            st.reward_sum += outcome.reward;
            *st.next.entry(outcome.observation.clone()).or_insert(0) += 1;
            obs = outcome.observation;
            if outcome.done {
                let admissible = env.admissible_actions();
                model.record_obs(&obs, admissible);
                break;
            }
        }
        log.push(EpisodeRecord { episode, ret, max_prefix: env.max_prefix(), violation: env.violated(), length });
        if (episode + 1) % 64 == 0 {
            let root = env.reset(episode + 1);
            let upper = model.plan(Estimate::Optimistic, cfg.delta, cfg.bonus_scale).get(&root).map(|v| v.0);
            let lower = model.plan(Estimate::Pessimistic, cfg.delta, cfg.bonus_scale).get(&root).map(|v| v.0);
            if let (Some(u), Some(l)) = (upper, lower) {
                if u - l < cfg.gamma {
                    break;
                }
            }
        }
    }
    let greedy = model.plan(Estimate::Empirical, cfg.delta, cfg.bonus_scale);
    let mut policy = AugmentedPolicy::new(horizon);
    for (obs, (_, a)) in &greedy {
        if let Some(a) = a {
            policy.insert(obs.h, obs.state, &obs.key, *a);
        }
    }
    let root = env.reset(cfg.episodes);
    let estimated_value = greedy.get(&root).map_or(f64::NEG_INFINITY, |v| v.0);
    Ok(LearnOutcome { policy, log, estimated_value })
}
