//! History-dependent randomized policies on tiny instances: exact evaluation
//! over the full history tree, anytime-cost audits and derandomization.

use std::collections::HashMap;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::ProjectionConfig;
use crate::cost::{CostVector, Key};
use crate::error::{Error, Result};
use crate::policy::AugmentedPolicy;
use crate::rational::{self, Rational};
use crate::spec::CmdpSpec;

/// Default ceiling on history-tree nodes.
pub const DEFAULT_HISTORY_CEILING: usize = 1_000_000;

/// One completed step `(s_t, a_t, c_t)`; costs are instance numerators.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub cost: Key,
}

/// A partial history `(s_1, a_1, c_1, ..., s_h)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct History {
    pub steps: Vec<Step>,
    pub state: usize,
}

impl History {
    pub fn initial(state: usize) -> Self {
        Self { steps: Vec::new(), state }
    }

    /// Current time index `h` (1-based).
    pub fn time(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn extend(&self, action: usize, cost: &[i64], next: usize) -> Self {
        let mut steps = self.steps.clone();
        steps.push(Step { state: self.state, action, cost: Key::from_slice(cost) });
        Self { steps, state: next }
    }

    /// Cumulative cost numerators.
    pub fn cumulative(&self, dim: usize) -> Key {
        let mut total: Key = smallvec::smallvec![0; dim];
        for step in &self.steps {
            for (t, c) in total.iter_mut().zip(&step.cost) {
                *t += c;
            }
        }
        total
    }
}

/// Action distribution per history.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HistoryPolicy {
    map: HashMap<History, Vec<(usize, Rational)>>,
}

impl HistoryPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, history: History, dist: Vec<(usize, Rational)>) {
        self.map.insert(history, dist);
    }

    pub fn get(&self, history: &History) -> Option<&[(usize, Rational)]> {
        self.map.get(history).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Every distribution is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.map.values().all(|d| d.iter().filter(|(_, p)| !p.is_zero()).count() == 1)
    }

    /// Histories whose distribution does not sum to one or is empty.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (h, d) in &self.map {
            let total: Rational = d.iter().map(|(_, p)| p.clone()).sum();
            if !total.is_one() || d.iter().any(|(_, p)| *p < rational::zero()) {
                out.push(format!("distribution at {h:?} sums to {total}"));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyEvaluation {
    /// Exact expected return.
    pub value: Rational,
    /// Componentwise maximum cumulative cost over all positive-probability
    /// histories, including the empty prefix.
    pub anytime_cost: CostVector,
    /// Every positive-probability prefix satisfies the constraint.
    pub feasible: bool,
    /// Number of history-tree nodes visited.
    pub nodes: usize,
}

struct Evaluator<'a> {
    spec: &'a CmdpSpec,
    policy: &'a HistoryPolicy,
    ceiling: usize,
    nodes: usize,
    anytime: Key,
    feasible: bool,
    values: Option<&'a mut HashMap<History, Rational>>,
}

impl Evaluator<'_> {
    fn visit(&mut self, history: &History, cumulative: &Key) -> Result<Rational> {
        self.nodes += 1;
        if self.nodes > self.ceiling {
            return Err(Error::resource(format!("history tree exceeds {} nodes", self.ceiling)));
        }
        for (m, c) in self.anytime.iter_mut().zip(cumulative) {
            *m = (*m).max(*c);
        }
        let h = history.time();
        if h > self.spec.horizon() {
            return Ok(rational::zero());
        }
        let dist = self
            .policy
            .get(history)
            .ok_or_else(|| Error::Protocol(format!("history policy undefined at {history:?}")))?
            .to_vec();
        let mut value = rational::zero();
        for (a, q) in dist {
            if q.is_zero() {
                continue;
            }
            let q_value = self.action_value(history, cumulative, a)?;
            value += q * q_value;
        }
        if let Some(values) = self.values.as_deref_mut() {
            values.insert(history.clone(), value.clone());
        }
        Ok(value)
    }

    fn action_value(&mut self, history: &History, cumulative: &Key, a: usize) -> Result<Rational> {
        let spec = self.spec;
        let h = history.time();
        let s = history.state;
        let mut total = spec.reward(h, s, a).clone();
        for (c, pc) in spec.cost(h, s, a).support() {
            let next: Key = cumulative.iter().zip(c.components()).map(|(x, y)| x + y).collect();
            if !spec.within_bounds(h, &next) {
                self.feasible = false;
            }
            for (t, pt) in spec.transition(h, s, a) {
                let child = history.extend(a, c.components(), *t);
                let v = self.visit(&child, &next)?;
                total += pt * pc * v;
            }
        }
        Ok(total)
    }
}

fn run_evaluation(
    spec: &CmdpSpec,
    policy: &HistoryPolicy,
    ceiling: usize,
    values: Option<&mut HashMap<History, Rational>>,
) -> Result<PolicyEvaluation> {
    let mut ev = Evaluator {
        spec,
        policy,
        ceiling,
        nodes: 0,
        anytime: smallvec::smallvec![0; spec.dim()],
        feasible: true,
        values,
    };
    let root = History::initial(spec.initial_state());
    let zero: Key = smallvec::smallvec![0; spec.dim()];
    let value = ev.visit(&root, &zero)?;
    Ok(PolicyEvaluation {
        value,
        anytime_cost: CostVector::new(&ev.anytime, spec.denominator())?,
        feasible: ev.feasible,
        nodes: ev.nodes,
    })
}

/// Exact value and anytime-cost audit of a history policy.
pub fn evaluate_policy(spec: &CmdpSpec, policy: &HistoryPolicy, ceiling: usize) -> Result<PolicyEvaluation> {
    run_evaluation(spec, policy, ceiling, None)
}

/// Deterministic policy that, at every history the input reaches, picks the
/// supported action maximizing `r + E[V^pi(next history)]` (ties to the
/// lowest action).
pub fn derandomize(spec: &CmdpSpec, policy: &HistoryPolicy, ceiling: usize) -> Result<HistoryPolicy> {
    let mut values = HashMap::new();
    run_evaluation(spec, policy, ceiling, Some(&mut values))?;
    let mut out = HistoryPolicy::new();
    for history in values.keys() {
        let h = history.time();
        let s = history.state;
        let mut best: Option<(Rational, usize)> = None;
        let mut support: Vec<usize> = policy
            .get(history)
            .expect("evaluated histories are covered")
            .iter()
            .filter(|(_, q)| !q.is_zero())
            .map(|(a, _)| *a)
            .collect();
        support.sort_unstable();
        support.dedup();
        for a in support {
            let mut q = spec.reward(h, s, a).clone();
            for (c, pc) in spec.cost(h, s, a).support() {
                for (t, pt) in spec.transition(h, s, a) {
                    let child = history.extend(a, c.components(), *t);
                    let v = values.get(&child).cloned().unwrap_or_else(rational::zero);
                    q += pt * pc * v;
                }
            }
            if best.as_ref().is_none_or(|(b, _)| q > *b) {
                best = Some((q, a));
            }
        }
        let (_, a) = best.expect("distributions are nonempty");
        out.set(history.clone(), vec![(a, rational::one())]);
    }
    Ok(out)
}

/// Unrolls an augmented policy into the equivalent history policy over every
/// history it reaches. With a projection, the observation is the grid key.
pub fn augmented_to_history(
    spec: &CmdpSpec,
    policy: &AugmentedPolicy,
    projection: Option<&ProjectionConfig>,
    ceiling: usize,
) -> Result<HistoryPolicy> {
    let mut out = HistoryPolicy::new();
    let start = match projection {
        Some(cfg) => cfg.initial_key(),
        None => smallvec::smallvec![0; spec.dim()],
    };
    let mut stack = vec![(History::initial(spec.initial_state()), start)];
    while let Some((history, key)) = stack.pop() {
        if out.len() >= ceiling {
            return Err(Error::resource(format!("history tree exceeds {ceiling} nodes")));
        }
        let h = history.time();
        if h > spec.horizon() {
            continue;
        }
        let s = history.state;
        let a = policy
            .get(h, s, &key)
            .ok_or_else(|| Error::Protocol(format!("policy undefined at (h={h}, s={s}, key={key:?})")))?;
        for c in spec.cost(h, s, a).costs() {
            let next_key: Key = match projection {
                Some(cfg) => cfg.step_key(h, &key, c),
                None => key.iter().zip(c.components()).map(|(x, y)| x + y).collect(),
            };
            for (t, _) in spec.transition(h, s, a) {
                stack.push((history.extend(a, c.components(), *t), next_key.clone()));
            }
        }
        out.set(history, vec![(a, rational::one())]);
    }
    Ok(out)
}

/// A random randomized history policy over every history it reaches. Each
/// history draws a random nonempty action subset with random weights,
/// preferring admissible actions.
pub fn random_history_policy(spec: &CmdpSpec, seed: u64, ceiling: usize) -> Result<HistoryPolicy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = HistoryPolicy::new();
    let mut stack = vec![History::initial(spec.initial_state())];
    while let Some(history) = stack.pop() {
        if out.len() >= ceiling {
            return Err(Error::resource(format!("history tree exceeds {ceiling} nodes")));
        }
        let h = history.time();
        if h > spec.horizon() {
            continue;
        }
        let s = history.state;
        let cumulative = CostVector::new(&history.cumulative(spec.dim()), spec.denominator())?;
        let admissible = spec.admissible_actions(h, s, &cumulative);
        let pool: Vec<usize> = if !admissible.is_empty() && rng.gen_bool(0.8) {
            admissible
        } else {
            (0..spec.num_actions()).collect()
        };
        let mut chosen: Vec<usize> = pool.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
        if chosen.is_empty() {
            chosen.push(pool[rng.gen_range(0..pool.len())]);
        }
        let weights: Vec<i64> = chosen.iter().map(|_| rng.gen_range(1..=3)).collect();
        let total: i64 = weights.iter().sum();
        let dist: Vec<(usize, Rational)> =
            chosen.iter().zip(&weights).map(|(a, w)| (*a, rational::ratio(*w, total))).collect();
        for (a, _) in &dist {
            for c in spec.cost(h, s, *a).costs() {
                for (t, _) in spec.transition(h, s, *a) {
                    stack.push(history.extend(*a, c.components(), *t));
                }
            }
        }
        out.set(history, dist);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostVector;
    use crate::rational::ratio;

    fn two_arms() -> CmdpSpec {
        let mut spec = CmdpSpec::new(1, 2, 1, 0, CostVector::scalar(0, 1).unwrap());
        spec.set_all_self_loops();
        spec.set_reward(1, 0, 1, rational::one());
        spec
    }

    #[test]
    fn mixed_arms_derandomize_to_the_better_one() {
        let spec = two_arms();
        let mut pi = HistoryPolicy::new();
        pi.set(History::initial(0), vec![(0, ratio(1, 2)), (1, ratio(1, 2))]);
        assert_eq!(evaluate_policy(&spec, &pi, 100).unwrap().value, ratio(1, 2));
        let det = derandomize(&spec, &pi, 100).unwrap();
        assert!(det.is_deterministic());
        assert_eq!(det.get(&History::initial(0)).unwrap(), &[(1, rational::one())]);
        assert_eq!(evaluate_policy(&spec, &det, 100).unwrap().value, rational::one());
    }

    #[test]
    fn deterministic_input_is_unchanged() {
        let spec = two_arms();
        let mut pi = HistoryPolicy::new();
        pi.set(History::initial(0), vec![(0, rational::one())]);
        assert_eq!(derandomize(&spec, &pi, 100).unwrap(), pi);
        assert_eq!(evaluate_policy(&spec, &pi, 100).unwrap().value, rational::zero());
    }

    #[test]
    fn uniform_policy_on_gap_instance_violates() {
        let spec = crate::instances::gen_markovian_gap(2, 1, &rational::int(10), &rational::int(1)).unwrap();
        let mut pi = HistoryPolicy::new();
        let uniform = vec![(0, ratio(1, 2)), (1, ratio(1, 2))];
        let root = History::initial(0);
        pi.set(root.clone(), uniform.clone());
        for a in 0..2 {
            for c in [0, 1] {
                pi.set(root.extend(a, &[c], 0), uniform.clone());
            }
        }
        let ev = evaluate_policy(&spec, &pi, 100).unwrap();
        assert_eq!(ev.value, rational::int(5));
        assert!(!ev.feasible);
        assert_eq!(ev.anytime_cost, CostVector::scalar(2, 1).unwrap());
    }

    #[test]
    fn ceiling_is_enforced() {
        let spec = crate::instances::gen_tiny(3).unwrap();
        let pi = random_history_policy(&spec, 1, DEFAULT_HISTORY_CEILING).unwrap();
        assert!(pi.violations().is_empty());
        assert!(matches!(evaluate_policy(&spec, &pi, 1), Err(Error::Resource(_))) || pi.len() <= 1);
    }
}
