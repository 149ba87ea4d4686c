//! Deterministic augmented policies `(h, s, key) -> action`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::cost::Key;
use crate::error::{Error, Result};
use crate::layered::LayeredMdp;

/// Maps each covered `(state, key)` of layer `h` (1-based, `h <= H`) to an
/// action. Keys are exact cost numerators or grid indices, matching the
/// layered MDP the policy was solved against.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AugmentedPolicy {
    layers: Vec<BTreeMap<(usize, Key), usize>>,
}

impl AugmentedPolicy {
    pub fn new(horizon: usize) -> Self {
        Self { layers: vec![BTreeMap::new(); horizon] }
    }

    pub fn horizon(&self) -> usize {
        self.layers.len()
    }

    pub fn insert(&mut self, h: usize, state: usize, key: &[i64], action: usize) {
        self.layers[h - 1].insert((state, Key::from_slice(key)), action);
    }

    pub fn get(&self, h: usize, state: usize, key: &[i64]) -> Option<usize> {
        self.layers.get(h.checked_sub(1)?)?.get(&(state, Key::from_slice(key))).copied()
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries as `(h, state, key, action)`, ordered by `h`, state, key.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &Key, usize)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().map(move |((s, k), a)| (i + 1, *s, k, *a)))
    }

    /// Every mapped action is admissible at an entry of `mdp`.
    pub fn check_admissible(&self, mdp: &LayeredMdp) -> Vec<String> {
        let mut out = Vec::new();
        for (h, s, key, a) in self.entries() {
            match mdp.layer(h).find(s, key) {
                None => out.push(format!("policy entry (h={h}, s={s}, key={key:?}) is not a layer entry")),
                Some(i) => {
                    if !mdp.layer(h).nodes()[i].edges.iter().any(|e| e.action == a) {
                        out.push(format!("action {a} is not admissible at (h={h}, s={s}, key={key:?})"));
                    }
                }
            }
        }
        out
    }

    /// JSON list of `[h, s, [key...], action]`.
    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .entries()
            .map(|(h, s, k, a)| serde_json::json!([h, s, k.as_slice(), a]))
            .collect();
        serde_json::Value::Array(rows).to_string()
    }

    /// Parses the format written by [`AugmentedPolicy::to_json`]; `horizon`
    /// bounds the accepted time indices.
    pub fn from_json(text: &str, horizon: usize) -> Result<Self> {
        let rows: Vec<(usize, usize, Vec<i64>, usize)> =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("policy file: {e}")))?;
        let mut policy = Self::new(horizon);
        for (i, (h, s, key, a)) in rows.into_iter().enumerate() {
            if h == 0 || h > horizon {
                return Err(Error::Parse(format!("policy row {i}: time index {h} outside 1..={horizon}")));
            }
            policy.insert(h, s, &key, a);
        }
        Ok(policy)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path, horizon: usize) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut p = AugmentedPolicy::new(2);
        p.insert(1, 0, &[0], 1);
        p.insert(2, 0, &[-3], 0);
        p.insert(2, 1, &[5], 1);
        let text = p.to_json();
        assert_eq!(text, "[[1,0,[0],1],[2,0,[-3],0],[2,1,[5],1]]");
        assert_eq!(AugmentedPolicy::from_json(&text, 2).unwrap(), p);
        assert!(matches!(AugmentedPolicy::from_json(&text, 1), Err(Error::Parse(_))));
        assert!(matches!(AugmentedPolicy::from_json("{", 1), Err(Error::Parse(_))));
    }
}
