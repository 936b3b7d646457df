//! Softmax policies over a preference table, trained by REINFORCE or by a
//! tabular clipped-surrogate (PPO) update.

use std::collections::HashMap;

use super::{entropy, sample_index, AgentRng, Choice, Decision, Learner, Step};
use crate::game::{ActionId, InfoKey, PlayerId};

/// Preferences θ(s, a); the policy at `s` is the softmax over the legal set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreferenceTable {
    num_actions: usize,
    prefs: HashMap<InfoKey, Vec<f64>>,
}

impl PreferenceTable {
    pub fn new(num_actions: usize) -> Self {
        Self {
            num_actions,
            prefs: HashMap::new(),
        }
    }

    pub fn get(&self, key: &InfoKey, action: ActionId) -> f64 {
        self.prefs.get(key).map_or(0.0, |p| p[action])
    }

    pub fn add(&mut self, key: &InfoKey, action: ActionId, delta: f64) {
        let n = self.num_actions;
        self.prefs.entry(key.clone()).or_insert_with(|| vec![0.0; n])[action] += delta;
    }

    /// Softmax over `legal`; masked actions get no mass.
    pub fn policy(&self, key: &InfoKey, legal: &[ActionId]) -> Vec<f64> {
        let theta: Vec<f64> = legal.iter().map(|&a| self.get(key, a)).collect();
        softmax(&theta)
    }
}

pub fn softmax(theta: &[f64]) -> Vec<f64> {
    let max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = theta.iter().map(|t| (t - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// ∂ log π(legal[taken]) / ∂ θ(legal[b]) for every `b`.
pub fn log_softmax_grad(probs: &[f64], taken: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(b, &p)| if b == taken { 1.0 - p } else { -p })
        .collect()
}

/// ∂ H(π) / ∂ θ(legal[b]).
pub fn entropy_grad(probs: &[f64]) -> Vec<f64> {
    let h = entropy(probs);
    probs
        .iter()
        .map(|&p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
        .collect()
}

/// `θ ← θ + lr·(G − b)·∇ log π(a|s)` at every decision of the trajectory.
pub fn reinforce_update(
    prefs: &mut PreferenceTable,
    trajectory: &[(InfoKey, Vec<ActionId>, ActionId)],
    ret: f64,
    baseline: f64,
    lr: f64,
) {
    let advantage = ret - baseline;
    if advantage == 0.0 {
        return;
    }
    for (key, legal, action) in trajectory {
        let probs = prefs.policy(key, legal);
        let taken = legal.iter().position(|a| a == action).expect("action in legal set");
        for (b, g) in log_softmax_grad(&probs, taken).into_iter().enumerate() {
            prefs.add(key, legal[b], lr * advantage * g);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PpoSample {
    pub key: InfoKey,
    pub legal: Vec<ActionId>,
    pub action: ActionId,
    /// Probability of `action` under the rollout policy.
    pub old_prob: f64,
    pub advantage: f64,
}

/// Per-sample clipped surrogate with entropy bonus:
/// `min(r·A, clip(r, 1−ε, 1+ε)·A) + c·H(π)`.
pub fn ppo_sample_objective(prefs: &PreferenceTable, s: &PpoSample, clip: f64, entropy_coef: f64) -> f64 {
    let probs = prefs.policy(&s.key, &s.legal);
    let taken = s.legal.iter().position(|&a| a == s.action).expect("action in legal set");
    let ratio = probs[taken] / s.old_prob;
    let unclipped = ratio * s.advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
    unclipped.min(clipped) + entropy_coef * entropy(&probs)
}

/// Mean objective over the batch.
pub fn ppo_objective(prefs: &PreferenceTable, batch: &[PpoSample], clip: f64, entropy_coef: f64) -> f64 {
    batch
        .iter()
        .map(|s| ppo_sample_objective(prefs, s, clip, entropy_coef))
        .sum::<f64>()
        / batch.len() as f64
}

/// Analytic gradient of [`ppo_objective`] per key, aligned with global action ids.
pub fn ppo_gradient(
    prefs: &PreferenceTable,
    batch: &[PpoSample],
    clip: f64,
    entropy_coef: f64,
) -> HashMap<InfoKey, Vec<f64>> {
    let n = batch.len() as f64;
    let mut grad: HashMap<InfoKey, Vec<f64>> = HashMap::new();
    for s in batch {
        let probs = prefs.policy(&s.key, &s.legal);
        let taken = s.legal.iter().position(|&a| a == s.action).expect("action in legal set");
        let ratio = probs[taken] / s.old_prob;
        // The clipped branch is flat; only the unclipped branch carries gradient.
        let active = ratio * s.advantage <= ratio.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
        let g = grad.entry(s.key.clone()).or_insert_with(|| vec![0.0; prefs.num_actions]);
        if active {
            for (b, d) in log_softmax_grad(&probs, taken).into_iter().enumerate() {
                g[s.legal[b]] += ratio * s.advantage * d / n;
            }
        }
        for (b, d) in entropy_grad(&probs).into_iter().enumerate() {
            g[s.legal[b]] += entropy_coef * d / n;
        }
    }
    grad
}

/// One gradient-ascent step on the clipped objective.
pub fn ppo_tabular_update(prefs: &mut PreferenceTable, batch: &[PpoSample], lr: f64, clip: f64, entropy_coef: f64) {
    if batch.is_empty() {
        return;
    }
    for (key, g) in ppo_gradient(prefs, batch, clip, entropy_coef) {
        for (a, d) in g.into_iter().enumerate() {
            if d != 0.0 {
                prefs.add(&key, a, lr * d);
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Method {
    Reinforce,
    Ppo {
        clip: f64,
        entropy_coef: f64,
        epochs: usize,
        batch_episodes: usize,
    },
}

/// Softmax learner with a running return baseline per seat.
#[derive(Clone, Debug)]
pub struct PolicyGradientLearner {
    pub prefs: PreferenceTable,
    method: Method,
    lr: f64,
    baseline_rate: f64,
    baseline: [f64; 2],
    pending: Vec<PpoSample>,
    pending_episodes: usize,
    frozen: bool,
}

impl PolicyGradientLearner {
    pub fn reinforce(num_actions: usize, lr: f64, baseline_rate: f64) -> Self {
        Self::with_method(num_actions, Method::Reinforce, lr, baseline_rate)
    }

    pub fn ppo(
        num_actions: usize,
        lr: f64,
        baseline_rate: f64,
        clip: f64,
        entropy_coef: f64,
        epochs: usize,
        batch_episodes: usize,
    ) -> Self {
        Self::with_method(
            num_actions,
            Method::Ppo {
                clip,
                entropy_coef,
                epochs: epochs.max(1),
                batch_episodes: batch_episodes.max(1),
            },
            lr,
            baseline_rate,
        )
    }

    fn with_method(num_actions: usize, method: Method, lr: f64, baseline_rate: f64) -> Self {
        Self {
            prefs: PreferenceTable::new(num_actions),
            method,
            lr,
            baseline_rate,
            baseline: [0.0; 2],
            pending: Vec::new(),
            pending_episodes: 0,
            frozen: false,
        }
    }
}

impl Learner for PolicyGradientLearner {
    fn begin_episode(&mut self, _rng: &mut AgentRng) {
        if let Method::Ppo {
            clip,
            entropy_coef,
            epochs,
            batch_episodes,
        } = self.method
        {
            if self.pending_episodes >= batch_episodes {
                for _ in 0..epochs {
                    ppo_tabular_update(&mut self.prefs, &self.pending, self.lr, clip, entropy_coef);
                }
                self.pending.clear();
                self.pending_episodes = 0;
            }
            self.pending_episodes += 1;
        }
    }

    fn act(&mut self, decision: &Decision<'_>, rng: &mut AgentRng) -> Choice {
        let probs = self.prefs.policy(decision.key, decision.legal);
        let i = sample_index(&probs, rng);
        Choice {
            action: decision.legal[i],
            prob: probs[i],
            entropy: entropy(&probs),
            q_gap: None,
        }
    }

    fn observe(&mut self, player: PlayerId, steps: &[Step], reward: f64, _rng: &mut AgentRng) {
        if self.frozen {
            return;
        }
        let seat = player.min(1);
        let baseline = self.baseline[seat];
        self.baseline[seat] += self.baseline_rate * (reward - baseline);
        match self.method {
            Method::Reinforce => {
                let traj: Vec<(InfoKey, Vec<ActionId>, ActionId)> =
                    steps.iter().map(|s| (s.key.clone(), s.legal.clone(), s.action)).collect();
                reinforce_update(&mut self.prefs, &traj, reward, baseline, self.lr);
            }
            Method::Ppo { .. } => {
                self.pending.extend(steps.iter().filter(|s| s.legal.len() > 1).map(|s| PpoSample {
                    key: s.key.clone(),
                    legal: s.legal.clone(),
                    action: s.action,
                    old_prob: s.prob,
                    advantage: reward - baseline,
                }));
            }
        }
    }

    fn freeze(&mut self) {
        self.frozen = true;
        self.pending.clear();
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn policy(&self, key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>> {
        Some(self.prefs.policy(key, legal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str) -> InfoKey {
        InfoKey::parse(s).unwrap()
    }

    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn softmax_sums_to_one_and_masks() {
        let mut p = PreferenceTable::new(3);
        let k = key("P0|J|");
        p.add(&k, 2, 5.0);
        let probs = p.policy(&k, &[0, 1]);
        assert_eq!(probs.len(), 2);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((probs[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_advantage_is_a_no_op() {
        let mut p = PreferenceTable::new(2);
        let k = key("P0|J|");
        reinforce_update(&mut p, &[(k.clone(), vec![0, 1], 1)], 0.7, 0.7, 0.01);
        assert_eq!(p, PreferenceTable::new(2));
    }

    #[test]
    fn positive_advantage_raises_taken_probability() {
        let mut p = PreferenceTable::new(2);
        let k = key("P1|Q|p");
        let before = p.policy(&k, &[0, 1])[1];
        reinforce_update(&mut p, &[(k.clone(), vec![0, 1], 1)], 1.0, 0.0, 0.01);
        assert!(p.policy(&k, &[0, 1])[1] > before);
    }

    #[test]
    fn log_softmax_gradient_matches_finite_differences() {
        let theta = [0.3, -1.2, 0.8];
        let h = 1e-5;
        for taken in 0..3 {
            let analytic = log_softmax_grad(&softmax(&theta), taken);
            for b in 0..3 {
                let mut up = theta;
                let mut down = theta;
                up[b] += h;
                down[b] -= h;
                let fd = (softmax(&up)[taken].ln() - softmax(&down)[taken].ln()) / (2.0 * h);
                assert!(relative_error(analytic[b], fd) < 1e-6, "{} vs {}", analytic[b], fd);
            }
        }
    }

    fn batch() -> (PreferenceTable, Vec<PpoSample>) {
        let mut p = PreferenceTable::new(3);
        let (k1, k2) = (key("P0|J|"), key("P1|K|b"));
        p.add(&k1, 0, 0.4);
        p.add(&k1, 1, -0.3);
        p.add(&k2, 2, 0.9);
        let samples = vec![
            PpoSample { key: k1.clone(), legal: vec![0, 1], action: 1, old_prob: 0.4, advantage: 0.8 },
            PpoSample { key: k1, legal: vec![0, 1], action: 0, old_prob: 0.6, advantage: -0.5 },
            PpoSample { key: k2, legal: vec![0, 1, 2], action: 2, old_prob: 0.5, advantage: 1.3 },
        ];
        (p, samples)
    }

    #[test]
    fn ppo_gradient_matches_finite_differences() {
        let (prefs, samples) = batch();
        let grad = ppo_gradient(&prefs, &samples, 0.2, 0.01);
        let h = 1e-5;
        for (k, g) in &grad {
            for a in 0..3 {
                let mut up = prefs.clone();
                let mut down = prefs.clone();
                up.add(k, a, h);
                down.add(k, a, -h);
                let fd = (ppo_objective(&up, &samples, 0.2, 0.01) - ppo_objective(&down, &samples, 0.2, 0.01)) / (2.0 * h);
                let err = if g[a].abs() < 1e-9 && fd.abs() < 1e-9 { 0.0 } else { relative_error(g[a], fd) };
                assert!(err < 1e-4, "{k} {a}: {} vs {}", g[a], fd);
            }
        }
    }

    #[test]
    fn ratio_one_reduces_to_policy_gradient() {
        let mut p = PreferenceTable::new(2);
        let k = key("P0|Q|");
        let probs = p.policy(&k, &[0, 1]);
        let s = PpoSample { key: k.clone(), legal: vec![0, 1], action: 1, old_prob: probs[1], advantage: 0.6 };
        let g = ppo_gradient(&p, std::slice::from_ref(&s), 0.2, 0.0);
        let pg = log_softmax_grad(&probs, 1);
        assert!((g[&k][0] - 0.6 * pg[0]).abs() < 1e-15);
        assert!((g[&k][1] - 0.6 * pg[1]).abs() < 1e-15);
        ppo_tabular_update(&mut p, &[s], 0.01, 0.2, 0.0);
        assert!((p.get(&k, 1) - 0.01 * 0.6 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn clip_caps_the_surrogate() {
        let mut p = PreferenceTable::new(2);
        let k = key("P0|Q|");
        // π(bet) = 0.75 against an old probability of 0.5: ratio 1.5.
        p.add(&k, 1, 3f64.ln());
        let s = PpoSample { key: k, legal: vec![0, 1], action: 1, old_prob: 0.5, advantage: 2.0 };
        assert!((ppo_sample_objective(&p, &s, 0.2, 0.0) - 1.2 * 2.0).abs() < 1e-12);
    }
}
