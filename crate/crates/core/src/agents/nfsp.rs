//! Tabular neural-fictitious-self-play: an ε-greedy Q-learning best-response
//! learner plus an average strategy kept as exact action counts.

use std::collections::HashMap;

use rand::Rng;

use super::tabular::TabularLearner;
use super::{entropy, sample_index, AgentRng, Choice, Decision, Learner, Step};
use crate::game::{ActionId, InfoKey, PlayerId};
use crate::policy::uniform;

#[derive(Clone, Debug)]
pub struct NfspLearner {
    pub best_response: TabularLearner,
    counts: HashMap<InfoKey, Vec<f64>>,
    eta: f64,
    /// Per seat: whether the current episode acts from the best-response learner.
    best_response_mode: [bool; 2],
    frozen: bool,
}

impl NfspLearner {
    pub fn new(num_actions: usize, alpha: f64, epsilon: f64, eta: f64) -> Self {
        Self {
            best_response: TabularLearner::q_learning(num_actions, alpha, epsilon),
            counts: HashMap::new(),
            eta,
            best_response_mode: [true; 2],
            frozen: false,
        }
    }

    /// Empirical frequency of best-response actions at `key`, uniform when
    /// nothing has been recorded on the legal set.
    pub fn average_policy(&self, key: &InfoKey, legal: &[ActionId]) -> Vec<f64> {
        let Some(c) = self.counts.get(key) else {
            return uniform(legal.len());
        };
        let counts: Vec<f64> = legal.iter().map(|&a| c[a]).collect();
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return uniform(legal.len());
        }
        counts.into_iter().map(|n| n / total).collect()
    }

    fn record(&mut self, key: &InfoKey, action: ActionId) {
        let n = self.best_response.table.num_actions();
        self.counts.entry(key.clone()).or_insert_with(|| vec![0.0; n])[action] += 1.0;
    }
}

impl Learner for NfspLearner {
    fn begin_episode(&mut self, rng: &mut AgentRng) {
        for mode in &mut self.best_response_mode {
            // η = 1 skips the draw so the learner reduces exactly to Q-learning.
            *mode = self.eta >= 1.0 || rng.gen::<f64>() < self.eta;
        }
    }

    fn act(&mut self, decision: &Decision<'_>, rng: &mut AgentRng) -> Choice {
        if self.best_response_mode[decision.player.min(1)] {
            let choice = self.best_response.act(decision, rng);
            if !self.frozen {
                self.record(decision.key, choice.action);
            }
            choice
        } else {
            let dist = self.average_policy(decision.key, decision.legal);
            let i = sample_index(&dist, rng);
            Choice {
                action: decision.legal[i],
                prob: dist[i],
                entropy: entropy(&dist),
                q_gap: None,
            }
        }
    }

    fn observe(&mut self, _player: PlayerId, steps: &[Step], reward: f64, _rng: &mut AgentRng) {
        if !self.frozen {
            self.best_response.learn(steps, reward);
        }
    }

    fn freeze(&mut self) {
        self.frozen = true;
        self.best_response.freeze();
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// The mixture actually played: η times best response plus (1 − η) times average.
    fn policy(&self, key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>> {
        let br = self.best_response.policy(key, legal)?;
        let avg = self.average_policy(key, legal);
        Some(br.iter().zip(&avg).map(|(b, a)| self.eta * b + (1.0 - self.eta) * a).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn key(s: &str) -> InfoKey {
        InfoKey::parse(s).unwrap()
    }

    #[test]
    fn eta_one_is_q_learning() {
        let mut nfsp = NfspLearner::new(2, 0.1, 0.15, 1.0);
        let mut ql = TabularLearner::q_learning(2, 0.1, 0.15);
        let (mut r1, mut r2) = (AgentRng::seed_from_u64(5), AgentRng::seed_from_u64(5));
        let k = key("P1|Q|p");
        for ep in 0..500 {
            nfsp.begin_episode(&mut r1);
            ql.begin_episode(&mut r2);
            let d = Decision { player: 1, key: &k, legal: &[0, 1], observation: None };
            let a = nfsp.act(&d, &mut r1);
            let b = ql.act(&d, &mut r2);
            assert_eq!(a, b);
            let reward = if a.action == 1 { 1.0 } else { (ep % 3) as f64 - 1.0 };
            let step = Step { key: k.clone(), legal: vec![0, 1], action: a.action, prob: a.prob, observation: None };
            nfsp.observe(1, std::slice::from_ref(&step), reward, &mut r1);
            ql.observe(1, std::slice::from_ref(&step), reward, &mut r2);
        }
        assert_eq!(nfsp.best_response.table, ql.table);
        assert_eq!(r1, r2);
    }

    #[test]
    fn forced_nodes_concentrate_the_average() {
        let mut nfsp = NfspLearner::new(2, 0.1, 0.15, 1.0);
        let mut rng = AgentRng::seed_from_u64(1);
        let k = key("P0|J|");
        for _ in 0..50 {
            nfsp.begin_episode(&mut rng);
            nfsp.act(&Decision { player: 0, key: &k, legal: &[0], observation: None }, &mut rng);
        }
        assert_eq!(nfsp.average_policy(&k, &[0, 1]), vec![1.0, 0.0]);
    }
}
