//! Backward induction on layered MDPs, with an explicit infeasibility marker.
//!
//! A value of `None` stands for minus infinity: the entry has no admissible
//! action, or every admissible action reaches such an entry with positive
//! probability.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::layered::LayeredMdp;
use crate::policy::AugmentedPolicy;
use crate::rational::{self, Rational};

/// Optimal values per layer, indexed like the layer's nodes.
pub type ValueTable = Vec<Vec<Option<Rational>>>;

#[derive(Clone, Debug)]
pub struct Solution {
    values: ValueTable,
    policy: AugmentedPolicy,
    steps: u64,
}

impl Solution {
    /// Value of the initial entry, or `None` if the instance is infeasible.
    pub fn optimal_value(&self) -> Option<&Rational> {
        self.values[0][0].as_ref()
    }

    pub fn is_feasible(&self) -> bool {
        self.optimal_value().is_some()
    }

    pub fn values(&self) -> &ValueTable {
        &self.values
    }

    /// Value at layer `h` (1-based), node `i`.
    pub fn value(&self, h: usize, i: usize) -> Option<&Rational> {
        self.values[h - 1][i].as_ref()
    }

    pub fn policy(&self) -> &AugmentedPolicy {
        &self.policy
    }

    pub fn into_policy(self) -> AugmentedPolicy {
        self.policy
    }

    /// Elementary successor evaluations performed.
    pub fn steps(&self) -> u64 {
        self.steps
    }
}

fn q_value(reward: &Rational, successors: &[(usize, Rational)], next: &[Option<Rational>], steps: &mut u64) -> Option<Rational> {
    let mut q = reward.clone();
    for (j, p) in successors {
        *steps += 1;
        let v = next[*j].as_ref()?;
        if !v.is_zero() {
            q += p * v;
        }
    }
    Some(q)
}

/// Solves the layered MDP; ties go to the lowest action index.
pub fn backward_induction(mdp: &LayeredMdp) -> Solution {
    let horizon = mdp.horizon();
    let mut values: ValueTable = vec![Vec::new(); horizon + 1];
    values[horizon] = vec![Some(rational::zero()); mdp.layer(horizon + 1).len()];
    let mut policy = AugmentedPolicy::new(horizon);
    let mut steps = 0u64;
    for h in (1..=horizon).rev() {
        let (head, tail) = values.split_at_mut(h);
        let next = &tail[0];
        let layer = mdp.layer(h);
        let mut current = Vec::with_capacity(layer.len());
        for node in layer.nodes() {
            let mut best: Option<(Rational, usize)> = None;
            for edge in &node.edges {
                if let Some(q) = q_value(&edge.reward, &edge.successors, next, &mut steps) {
                    if best.as_ref().is_none_or(|(b, _)| q > *b) {
                        best = Some((q, edge.action));
                    }
                }
            }
            current.push(best.map(|(v, a)| {
                policy.insert(h, node.state, &node.key, a);
                v
            }));
        }
        head[h - 1] = current;
    }
    Solution { values, policy, steps }
}

/// Checks that every stored value satisfies the Bellman optimality equation
/// exactly; returns a description of each mismatch.
pub fn bellman_residuals(mdp: &LayeredMdp, solution: &Solution) -> Vec<String> {
    let mut out = Vec::new();
    let mut steps = 0;
    for h in 1..=mdp.horizon() {
        let next = &solution.values[h];
        for (i, node) in mdp.layer(h).nodes().iter().enumerate() {
            let best = node
                .edges
                .iter()
                .filter_map(|e| q_value(&e.reward, &e.successors, next, &mut steps))
                .max();
            if best.as_ref() != solution.values[h - 1][i].as_ref() {
                out.push(format!("Bellman mismatch at h={h}, entry {i}"));
            }
        }
    }
    out
}

/// Exact value of a deterministic augmented policy on `mdp`.
///
/// Returns `Ok(None)` when the policy maps a reachable entry to an action
/// that is not admissible there (minus infinity), and a protocol error when
/// a reachable entry is not covered at all.
pub fn evaluate_augmented(mdp: &LayeredMdp, policy: &AugmentedPolicy) -> Result<Option<Rational>> {
    let horizon = mdp.horizon();
    // reach[h-1][i]: whether entry i of layer h is reached with positive probability
    let mut reach: Vec<Vec<bool>> = mdp.layers().iter().map(|l| vec![false; l.len()]).collect();
    reach[0][0] = true;
    for h in 1..=horizon {
        for (i, node) in mdp.layer(h).nodes().iter().enumerate() {
            if !reach[h - 1][i] {
                continue;
            }
            let a = policy.get(h, node.state, &node.key).ok_or_else(|| {
                Error::Protocol(format!("policy undefined at (h={h}, s={}, key={:?})", node.state, node.key))
            })?;
            match node.edges.iter().find(|e| e.action == a) {
                Some(edge) => edge.successors.iter().for_each(|(j, _)| reach[h][*j] = true),
                None => return Ok(None),
            }
        }
    }
    let mut next: Vec<Option<Rational>> = vec![Some(rational::zero()); mdp.layer(horizon + 1).len()];
    let mut steps = 0;
    for h in (1..=horizon).rev() {
        let current = mdp
            .layer(h)
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, node)| {
                if !reach[h - 1][i] {
                    return Some(rational::zero());
                }
                let a = policy.get(h, node.state, &node.key)?;
                let edge = node.edges.iter().find(|e| e.action == a)?;
                q_value(&edge.reward, &edge.successors, &next, &mut steps)
            })
            .collect();
        next = current;
    }
    Ok(next[0].clone())
}
