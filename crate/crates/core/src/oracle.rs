//! Brute-force ground truth for small instances.
//!
//! Everything here works on the explicit history tree: no two histories are
//! ever merged, even when they share the same state and cumulative cost.

use std::collections::BTreeSet;

use crate::cost::Key;
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::spec::{CmdpSpec, ConstraintKind};

pub const DEFAULT_ORACLE_CEILING: usize = 1_000_000;

/// `(state, cumulative cost numerators)`.
pub type Entry = (usize, Key);

/// Prefix check written against the raw bounds.
fn prefix_ok(spec: &CmdpSpec, step: usize, cumulative: &[i64]) -> bool {
    match spec.constraint() {
        ConstraintKind::AnytimeUpper => {
            let b = spec.budget().components();
            (0..cumulative.len()).all(|i| cumulative[i] <= b[i])
        }
        ConstraintKind::Interval { lower, upper } => {
            let (l, u) = (lower[step - 1].components(), upper[step - 1].components());
            (0..cumulative.len()).all(|i| l[i] <= cumulative[i] && cumulative[i] <= u[i])
        }
    }
}

struct ArenaAction {
    reward: Rational,
    children: Vec<(usize, Rational)>,
    q: Option<Rational>,
}

struct ArenaNode {
    time: usize,
    state: usize,
    cumulative: Key,
    actions: Vec<ArenaAction>,
    value: Option<Rational>,
}

/// The history tree restricted to almost-surely safe actions, with values.
struct HistoryArena {
    nodes: Vec<ArenaNode>,
}

impl HistoryArena {
    fn build(spec: &CmdpSpec, ceiling: usize) -> Result<Self> {
        crate::spec::ensure_valid(spec)?;
        let root = ArenaNode {
            time: 1,
            state: spec.initial_state(),
            cumulative: smallvec::smallvec![0; spec.dim()],
            actions: Vec::new(),
            value: None,
        };
        let mut nodes = vec![root];
        let mut i = 0;
        while i < nodes.len() {
            let (h, s) = (nodes[i].time, nodes[i].state);
            if h <= spec.horizon() {
                let cumulative = nodes[i].cumulative.clone();
                let mut actions = Vec::new();
                for a in 0..spec.num_actions() {
                    let dist = spec.cost(h, s, a);
                    let nexts: Vec<Key> = dist
                        .costs()
                        .map(|c| cumulative.iter().zip(c.components()).map(|(x, y)| x + y).collect())
                        .collect();
                    if !nexts.iter().all(|n| prefix_ok(spec, h, n)) {
                        continue;
                    }
                    let mut children = Vec::new();
                    for ((_, pc), next) in dist.support().iter().zip(&nexts) {
                        for (t, pt) in spec.transition(h, s, a) {
                            if nodes.len() >= ceiling {
                                return Err(Error::resource(format!("history tree exceeds {ceiling} nodes")));
                            }
                            nodes.push(ArenaNode {
                                time: h + 1,
                                state: *t,
                                cumulative: next.clone(),
                                actions: Vec::new(),
                                value: None,
                            });
                            children.push((nodes.len() - 1, pt * pc));
                        }
                    }
                    actions.push(ArenaAction { reward: spec.reward(h, s, a).clone(), children, q: None });
                }
                nodes[i].actions = actions;
            }
            i += 1;
        }
        // Children always have larger indices, so a reverse sweep is bottom-up.
        for i in (0..nodes.len()).rev() {
            if nodes[i].time > spec.horizon() {
                nodes[i].value = Some(rational::zero());
                continue;
            }
            let mut best: Option<Rational> = None;
            let mut actions = std::mem::take(&mut nodes[i].actions);
            for act in actions.iter_mut() {
                let mut q = Some(act.reward.clone());
                for (j, p) in &act.children {
                    q = match (q, &nodes[*j].value) {
                        (Some(acc), Some(v)) => Some(acc + p * v),
                        _ => None,
                    };
                }
                if let Some(qv) = &q {
                    if best.as_ref().is_none_or(|b| qv > b) {
                        best = Some(qv.clone());
                    }
                }
                act.q = q;
            }
            nodes[i].actions = actions;
            nodes[i].value = best;
        }
        Ok(Self { nodes })
    }

    fn sets_by_time(&self, horizon: usize, include: impl Fn(usize) -> bool) -> Vec<BTreeSet<Entry>> {
        let mut sets = vec![BTreeSet::new(); horizon + 1];
        for (i, n) in self.nodes.iter().enumerate() {
            if include(i) {
                sets[n.time - 1].insert((n.state, n.cumulative.clone()));
            }
        }
        sets
    }
}

/// Optimal expected return over deterministic history-dependent policies
/// whose every positive-probability prefix satisfies the constraint; `None`
/// when no such policy exists.
pub fn brute_force_optimum(spec: &CmdpSpec, ceiling: usize) -> Result<Option<Rational>> {
    Ok(HistoryArena::build(spec, ceiling)?.nodes[0].value.clone())
}

/// `F_h` for `h = 1..=H+1`: entries reached with positive probability by some
/// feasible policy.
pub fn exact_feasible_sets(spec: &CmdpSpec, ceiling: usize) -> Result<Vec<BTreeSet<Entry>>> {
    let arena = HistoryArena::build(spec, ceiling)?;
    let mut marked = vec![false; arena.nodes.len()];
    if arena.nodes[0].value.is_some() {
        marked[0] = true;
    }
    for i in 0..arena.nodes.len() {
        if !marked[i] {
            continue;
        }
        for act in &arena.nodes[i].actions {
            if act.q.is_some() {
                for (j, _) in &act.children {
                    marked[*j] = true;
                }
            }
        }
    }
    Ok(arena.sets_by_time(spec.horizon(), |i| marked[i]))
}

/// `S_h` for `h = 1..=H+1`: entries reachable by only ever taking actions
/// that are almost surely safe.
pub fn safe_exploration_sets(spec: &CmdpSpec, ceiling: usize) -> Result<Vec<BTreeSet<Entry>>> {
    let arena = HistoryArena::build(spec, ceiling)?;
    Ok(arena.sets_by_time(spec.horizon(), |_| true))
}

/// Best feasible value over open-loop action sequences (policies that ignore
/// states and costs). `None` if every sequence is infeasible.
pub fn best_non_adaptive(spec: &CmdpSpec, ceiling: usize) -> Result<Option<Rational>> {
    crate::spec::ensure_valid(spec)?;
    let horizon = spec.horizon();
    let count = (spec.num_actions() as u128).checked_pow(horizon as u32).unwrap_or(u128::MAX);
    if count > ceiling as u128 {
        return Err(Error::resource(format!("{count} action sequences exceed the ceiling of {ceiling}")));
    }
    let mut best: Option<Rational> = None;
    for code in 0..count as usize {
        let mut seq = Vec::with_capacity(horizon);
        let mut rest = code;
        for _ in 0..horizon {
            seq.push(rest % spec.num_actions());
            rest /= spec.num_actions();
        }
        // distribution over (state, cumulative) as an explicit list of paths
        let mut paths: Vec<(usize, Key, Rational)> =
            vec![(spec.initial_state(), smallvec::smallvec![0; spec.dim()], rational::one())];
        let mut value = rational::zero();
        let mut feasible = true;
        'steps: for (i, &a) in seq.iter().enumerate() {
            let h = i + 1;
            let mut next = Vec::new();
            for (s, cum, p) in &paths {
                value += p * spec.reward(h, *s, a);
                for (c, pc) in spec.cost(h, *s, a).support() {
                    let n: Key = cum.iter().zip(c.components()).map(|(x, y)| x + y).collect();
                    if !prefix_ok(spec, h, &n) {
                        feasible = false;
                        break 'steps;
                    }
                    for (t, pt) in spec.transition(h, *s, a) {
                        next.push((*t, n.clone(), p * pc * pt));
                    }
                }
            }
            if next.len() > ceiling {
                return Err(Error::resource("open-loop path count exceeds the ceiling"));
            }
            paths = next;
        }
        if feasible && best.as_ref().is_none_or(|b| value > *b) {
            best = Some(value);
        }
    }
    Ok(best)
}

/// Classic weight-indexed 0/1 knapsack optimum; `None` for a negative budget.
pub fn knapsack_dp(values: &[i64], weights: &[i64], budget: i64) -> Option<i64> {
    if budget < 0 {
        return None;
    }
    let cap = budget as usize;
    let mut best = vec![0i64; cap + 1];
    for (v, w) in values.iter().zip(weights) {
        let w = *w as usize;
        if w > cap {
            continue;
        }
        for b in (w..=cap).rev() {
            best[b] = best[b].max(best[b - w] + v);
        }
    }
    Some(best[cap])
}

/// Whether the multiset splits into two halves of equal sum, with a witness.
pub fn partition_feasibility(items: &[i64]) -> Option<(Vec<i64>, Vec<i64>)> {
    let sum: i64 = items.iter().sum();
    if sum % 2 != 0 {
        return None;
    }
    let target = (sum / 2) as usize;
    // reach[i][t]: some subset of the first i items sums to t
    let mut reach = vec![vec![false; target + 1]; items.len() + 1];
    reach[0][0] = true;
    for (i, x) in items.iter().enumerate() {
        let x = *x as usize;
        for t in 0..=target {
            reach[i + 1][t] = reach[i][t] || (t >= x && reach[i][t - x]);
        }
    }
    if !reach[items.len()][target] {
        return None;
    }
    let (mut left, mut right) = (Vec::new(), Vec::new());
    let mut t = target;
    for i in (0..items.len()).rev() {
        let x = items[i] as usize;
        if reach[i][t] {
            right.push(items[i]);
        } else {
            left.push(items[i]);
            t -= x;
        }
    }
    left.reverse();
    right.reverse();
    Some((left, right))
}
