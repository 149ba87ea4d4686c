//! Layered MDPs over (state, cumulative-cost key) pairs.
//!
//! Both the exact augmented MDP and the grid-projected approximate MDP share
//! this representation; only the key update and admissibility test differ.

use std::collections::{BTreeSet, HashMap};

use crate::approx::ProjectionConfig;
use crate::cost::{CostVector, Key};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::spec::CmdpSpec;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildLimits {
    /// Ceiling on the number of entries in any single layer.
    pub max_layer_entries: usize,
}

impl Default for BuildLimits {
    fn default() -> Self {
        Self { max_layer_entries: 10_000_000 }
    }
}

/// How cumulative costs are tracked while building layers.
#[derive(Clone, Copy, Debug)]
pub enum Protocol<'a> {
    /// Keys are exact cost numerators over the instance denominator.
    Exact,
    /// Keys are grid indices under the given projection.
    Approximate(&'a ProjectionConfig),
}

impl Protocol<'_> {
    pub fn initial_key(&self, spec: &CmdpSpec) -> Key {
        match self {
            Protocol::Exact => smallvec::smallvec![0; spec.dim()],
            Protocol::Approximate(cfg) => cfg.initial_key(),
        }
    }

    /// Successor key after incurring `c` at step `h`, or `None` when the
    /// result leaves the feasible region.
    pub fn advance(&self, spec: &CmdpSpec, h: usize, key: &[i64], c: &CostVector) -> Result<Option<Key>> {
        match self {
            Protocol::Exact => {
                let mut next = Key::with_capacity(key.len());
                for (k, ci) in key.iter().zip(c.components()) {
                    next.push(k.checked_add(*ci).ok_or_else(|| Error::config("cumulative cost overflows i64"))?);
                }
                Ok(spec.within_bounds(h, &next).then_some(next))
            }
            Protocol::Approximate(cfg) => {
                let next = cfg.step_key(h, key, c);
                Ok(cfg.key_admissible(&next).then_some(next))
            }
        }
    }

    /// Whether every supported cost of `(h, s, a)` keeps the key feasible.
    pub fn admissible(&self, spec: &CmdpSpec, h: usize, s: usize, a: usize, key: &[i64]) -> Result<bool> {
        for c in spec.cost(h, s, a).costs() {
            if self.advance(spec, h, key, c)?.is_none() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub action: usize,
    pub reward: Rational,
    /// `(index into the next layer, probability)`, sorted by index.
    pub successors: Vec<(usize, Rational)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub state: usize,
    pub key: Key,
    /// One edge per admissible action, in increasing action order.
    pub edges: Vec<Edge>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layer {
    nodes: Vec<Node>,
    index: HashMap<(usize, Key), usize>,
}

impl Layer {
    fn from_sorted(nodes: Vec<Node>) -> Self {
        let index = nodes.iter().enumerate().map(|(i, n)| ((n.state, n.key.clone()), i)).collect();
        Self { nodes, index }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn find(&self, state: usize, key: &[i64]) -> Option<usize> {
        self.index.get(&(state, Key::from_slice(key))).copied()
    }

    /// Number of distinct keys in this layer.
    pub fn distinct_keys(&self) -> usize {
        self.nodes.iter().map(|n| &n.key).collect::<BTreeSet<_>>().len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub layer_sizes: Vec<usize>,
    pub distinct_keys: Vec<usize>,
    /// Elementary successor evaluations performed.
    pub steps: u64,
}

impl BuildStats {
    pub fn diversity(&self) -> usize {
        self.distinct_keys.iter().copied().max().unwrap_or(0)
    }

    pub fn total_entries(&self) -> usize {
        self.layer_sizes.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Exact { denominator: i64 },
    Approximate(ProjectionConfig),
}

/// `H + 1` layers; layer `h` (1-based) holds the entries reachable at time `h`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayeredMdp {
    horizon: usize,
    num_actions: usize,
    layers: Vec<Layer>,
    stats: BuildStats,
    kind: LayerKind,
}

impl LayeredMdp {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn kind(&self) -> &LayerKind {
        &self.kind
    }

    pub fn projection(&self) -> Option<&ProjectionConfig> {
        match &self.kind {
            LayerKind::Approximate(cfg) => Some(cfg),
            LayerKind::Exact { .. } => None,
        }
    }

    pub fn protocol(&self) -> Protocol<'_> {
        match &self.kind {
            LayerKind::Approximate(cfg) => Protocol::Approximate(cfg),
            LayerKind::Exact { .. } => Protocol::Exact,
        }
    }

    /// Layer `h` for `h` in `1..=H+1`.
    pub fn layer(&self, h: usize) -> &Layer {
        &self.layers[h - 1]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    pub fn diversity(&self) -> usize {
        self.stats.diversity()
    }

    /// The `(state, cumulative cost)` pairs of layer `h`, with keys converted
    /// to exact costs.
    pub fn entries(&self, h: usize) -> Vec<(usize, Vec<Rational>)> {
        self.layer(h).nodes.iter().map(|n| (n.state, self.key_value(&n.key))).collect()
    }

    pub fn key_value(&self, key: &[i64]) -> Vec<Rational> {
        match &self.kind {
            LayerKind::Exact { denominator } => key.iter().map(|k| rational::ratio(*k, *denominator)).collect(),
            LayerKind::Approximate(cfg) => cfg.grid_value(key),
        }
    }
}

/// Forward induction: starts from `{(s0, 0)}` and expands every entry through
/// its admissible actions, merging arrivals at the same `(state, key)`.
pub fn forward_induction(spec: &CmdpSpec, protocol: Protocol<'_>, limits: &BuildLimits) -> Result<LayeredMdp> {
    crate::spec::ensure_valid(spec)?;
    let horizon = spec.horizon();
    let initial = Node { state: spec.initial_state(), key: protocol.initial_key(spec), edges: Vec::new() };
    let mut layers: Vec<Layer> = vec![Layer::from_sorted(vec![initial])];
    let mut stats = BuildStats { layer_sizes: vec![1], distinct_keys: vec![1], steps: 0 };

    for h in 1..=horizon {
        let current = layers.last_mut().expect("at least one layer");
        let mut next_ids: HashMap<(usize, Key), usize> = HashMap::new();
        let mut next_nodes: Vec<(usize, Key)> = Vec::new();
        // Successor indices temporarily refer to `next_nodes` (insertion order).
        for node in current.nodes.iter_mut() {
            'actions: for a in 0..spec.num_actions() {
                let dist = spec.cost(h, node.state, a);
                let mut keys = Vec::with_capacity(dist.len());
                for (c, p) in dist.support() {
                    stats.steps += 1;
                    match protocol.advance(spec, h, &node.key, c)? {
                        Some(k) => keys.push((k, p)),
                        None => continue 'actions,
                    }
                }
                let mut successors: Vec<(usize, Rational)> = Vec::new();
                for (t, pt) in spec.transition(h, node.state, a) {
                    for (k, pc) in &keys {
                        stats.steps += 1;
                        let id = *next_ids.entry((*t, k.clone())).or_insert_with(|| {
                            next_nodes.push((*t, k.clone()));
                            next_nodes.len() - 1
                        });
                        successors.push((id, pt * *pc));
                    }
                }
                node.edges.push(Edge { action: a, reward: spec.reward(h, node.state, a).clone(), successors });
            }
        }
        if next_nodes.len() > limits.max_layer_entries {
            return Err(Error::resource(format!(
                "layer {} holds {} entries, above the ceiling of {}",
                h + 1,
                next_nodes.len(),
                limits.max_layer_entries
            )));
        }

        let mut order: Vec<usize> = (0..next_nodes.len()).collect();
        order.sort_by(|&x, &y| next_nodes[x].cmp(&next_nodes[y]));
        let mut position = vec![0usize; order.len()];
        for (pos, &old) in order.iter().enumerate() {
            position[old] = pos;
        }
        for node in current.nodes.iter_mut() {
            for edge in node.edges.iter_mut() {
                let mut merged: Vec<(usize, Rational)> = Vec::with_capacity(edge.successors.len());
                edge.successors.iter_mut().for_each(|(id, _)| *id = position[*id]);
                edge.successors.sort_by_key(|(id, _)| *id);
                for (id, p) in edge.successors.drain(..) {
                    match merged.last_mut() {
                        Some((last, q)) if *last == id => *q += p,
                        _ => merged.push((id, p)),
                    }
                }
                edge.successors = merged;
            }
        }
        let mut slots: Vec<Option<(usize, Key)>> = next_nodes.into_iter().map(Some).collect();
        let nodes: Vec<Node> = order
            .iter()
            .map(|&old| {
                let (state, key) = slots[old].take().expect("each node placed once");
                Node { state, key, edges: Vec::new() }
            })
            .collect();
        let layer = Layer::from_sorted(nodes);
        stats.layer_sizes.push(layer.len());
        stats.distinct_keys.push(layer.distinct_keys());
        layers.push(layer);
    }

    let kind = match protocol {
        Protocol::Exact => LayerKind::Exact { denominator: spec.denominator() },
        Protocol::Approximate(cfg) => LayerKind::Approximate(cfg.clone()),
    };
    Ok(LayeredMdp { horizon, num_actions: spec.num_actions(), layers, stats, kind })
}
