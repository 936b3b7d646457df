use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::game::{ActionId, GameSpec, InfoKey};

/// Anything that yields a distribution over the legal actions at a key.
/// Returned vectors are aligned with `legal` and sum to 1.
pub trait Policy {
    fn distribution(&self, key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>>;
}

/// Uniform over whatever is legal.
#[derive(Clone, Copy, Debug, Default)]
pub struct Uniform;

impl Policy for Uniform {
    fn distribution(&self, _key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>> {
        Some(uniform(legal.len()))
    }
}

pub(crate) fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Explicit tabular profile for both players: key to (action, probability).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyProfile {
    entries: BTreeMap<InfoKey, Vec<(ActionId, f64)>>,
}

impl PolicyProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: InfoKey, dist: Vec<(ActionId, f64)>) {
        self.entries.insert(key, dist);
    }

    pub fn get(&self, key: &InfoKey) -> Option<&[(ActionId, f64)]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&InfoKey, &[(ActionId, f64)])> {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Probability of `action` at `key`, 0 when absent.
    pub fn prob(&self, key: &InfoKey, action: ActionId) -> f64 {
        self.get(key)
            .and_then(|d| d.iter().find(|(a, _)| *a == action))
            .map_or(0.0, |(_, p)| *p)
    }

    /// One line per (key, action label, probability), sorted by key then action.
    pub fn to_text(&self, spec: &GameSpec) -> String {
        let mut out = String::new();
        for (key, dist) in &self.entries {
            for &(a, p) in dist {
                out.push_str(&format!("{}\t{}\t{:.9}\n", key, spec.action_labels[a], p));
            }
        }
        out
    }
}

impl Policy for PolicyProfile {
    /// Restricts the stored distribution to `legal` and renormalises; falls
    /// back to uniform when no stored mass lands on a legal action.
    fn distribution(&self, key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>> {
        let stored = self.entries.get(key)?;
        let mut probs: Vec<f64> = legal
            .iter()
            .map(|a| stored.iter().find(|(b, _)| b == a).map_or(0.0, |(_, p)| *p))
            .collect();
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Some(uniform(legal.len()));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Some(probs)
    }
}

/// Plays each seat from its own policy.
pub struct SeatPolicies<'a> {
    pub seats: [&'a dyn Policy; 2],
}

impl Policy for SeatPolicies<'_> {
    fn distribution(&self, key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>> {
        self.seats[key.player().min(1)].distribution(key, legal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restriction_renormalises() {
        let mut p = PolicyProfile::new();
        let key = InfoKey::new(0, "K", "");
        p.insert(key.clone(), vec![(0, 0.25), (1, 0.75)]);
        assert_eq!(p.distribution(&key, &[0]).unwrap(), vec![1.0]);
        assert_eq!(p.distribution(&key, &[0, 1]).unwrap(), vec![0.25, 0.75]);
        assert!(p.distribution(&InfoKey::new(1, "K", "p"), &[0, 1]).is_none());
    }
}
