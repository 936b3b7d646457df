//! Learners that can occupy a seat in the self-play engine, plus the exact
//! CFR solver and the population-based trainer.

pub mod cfr;
pub mod dqn;
pub mod nfsp;
pub mod policy_gradient;
pub mod psro;
pub mod tabular;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionId, Game, InfoKey, PlayerId};
use crate::policy::{Policy, PolicyProfile};

pub use dqn::{DqnConfig, DqnLearner};
pub use nfsp::NfspLearner;
pub use policy_gradient::{PolicyGradientLearner, PreferenceTable};
pub use tabular::{TabularLearner, TdRule, ValueTable};

pub type AgentRng = ChaCha8Rng;

/// What a learner sees when asked to act.
pub struct Decision<'a> {
    pub player: PlayerId,
    pub key: &'a InfoKey,
    /// Effective (post-mask) legal actions in canonical order.
    pub legal: &'a [ActionId],
    /// Fixed-width encoding of the state, present only for learners that
    /// ask for it.
    pub observation: Option<&'a [f32]>,
}

/// An action plus diagnostics about the distribution it was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub action: ActionId,
    pub prob: f64,
    /// Entropy (nats) of the behaviour distribution at this decision.
    pub entropy: f64,
    /// Gap between the two largest action values, for value-based learners.
    pub q_gap: Option<f64>,
}

/// One decision of one player within a finished episode.
#[derive(Clone, Debug)]
pub struct Step {
    pub key: InfoKey,
    pub legal: Vec<ActionId>,
    pub action: ActionId,
    pub prob: f64,
    pub observation: Option<Vec<f32>>,
}

pub trait Learner: Send {
    /// Called once before every episode.
    fn begin_episode(&mut self, _rng: &mut AgentRng) {}

    fn act(&mut self, decision: &Decision<'_>, rng: &mut AgentRng) -> Choice;

    /// Delivers the decisions `player` made during the episode together with
    /// that player's terminal reward. A shared learner is called once per seat.
    fn observe(&mut self, player: PlayerId, steps: &[Step], reward: f64, rng: &mut AgentRng);

    /// Stops all further learning; action selection is unchanged.
    fn freeze(&mut self);

    fn is_frozen(&self) -> bool;

    /// Current behaviour distribution at `key`, when it can be derived from
    /// the key alone.
    fn policy(&self, key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>>;

    fn wants_observations(&self) -> bool {
        false
    }
}

/// Adapter exposing a learner's behaviour policy through [`Policy`].
pub struct LearnerPolicy<'a>(pub &'a dyn Learner);

impl Policy for LearnerPolicy<'_> {
    fn distribution(&self, key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>> {
        self.0.policy(key, legal)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    QLearning,
    Sarsa,
    EntropyQl,
    Reinforce,
    Ppo,
    Nfsp,
    Dqn,
}

impl Algorithm {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(match text {
            "ql" | "q_learning" => Algorithm::QLearning,
            "sarsa" => Algorithm::Sarsa,
            "entropy_ql" => Algorithm::EntropyQl,
            "reinforce" => Algorithm::Reinforce,
            "ppo" => Algorithm::Ppo,
            "nfsp" => Algorithm::Nfsp,
            "dqn" => Algorithm::Dqn,
            other => return Err(Error::InvalidParameter(format!("unknown algorithm {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    /// Tabular step size.
    pub alpha: f64,
    pub epsilon: f64,
    /// Entropy temperature for entropy-regularised QL.
    pub tau: f64,
    /// Preference learning rate for REINFORCE and PPO.
    pub lr: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    /// Step size of the running return baseline.
    pub baseline_rate: f64,
    pub ppo_epochs: usize,
    pub ppo_batch_episodes: usize,
    /// NFSP anticipatory parameter.
    pub eta: f64,
    pub dqn: DqnConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::QLearning,
            alpha: 0.1,
            epsilon: 0.15,
            tau: 0.0,
            lr: 0.01,
            clip: 0.2,
            entropy_coef: 0.01,
            baseline_rate: 0.01,
            ppo_epochs: 4,
            ppo_batch_episodes: 10,
            eta: 0.1,
            dqn: DqnConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(self.lr >= 0.0) {
            return Err(Error::InvalidParameter("learning rates must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter("epsilon and eta must lie in [0, 1]".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("tau {} is negative", self.tau)));
        }
        Ok(())
    }

    pub fn build(&self, game: &dyn Game, rng: &mut AgentRng) -> Result<Box<dyn Learner>> {
        self.validate()?;
        let n = game.spec().num_actions();
        Ok(match self.algorithm {
            Algorithm::QLearning => Box::new(TabularLearner::new(n, TdRule::MonteCarlo, self.alpha, self.epsilon)),
            Algorithm::Sarsa => Box::new(TabularLearner::new(n, TdRule::Sarsa, self.alpha, self.epsilon)),
            Algorithm::EntropyQl => Box::new(TabularLearner::new(
                n,
                TdRule::EntropyRegularised { tau: self.tau },
                self.alpha,
                self.epsilon,
            )),
            Algorithm::Reinforce => Box::new(PolicyGradientLearner::reinforce(n, self.lr, self.baseline_rate)),
            Algorithm::Ppo => Box::new(PolicyGradientLearner::ppo(
                n,
                self.lr,
                self.baseline_rate,
                self.clip,
                self.entropy_coef,
                self.ppo_epochs,
                self.ppo_batch_episodes,
            )),
            Algorithm::Nfsp => Box::new(NfspLearner::new(n, self.alpha, self.epsilon, self.eta)),
            Algorithm::Dqn => Box::new(DqnLearner::new(game, self.dqn.clone(), rng)),
        })
    }
}

/// A seat controlled by a fixed profile, e.g. a frozen CFR average strategy.
#[derive(Clone, Debug)]
pub struct FixedPolicyLearner {
    profile: PolicyProfile,
}

impl FixedPolicyLearner {
    pub fn new(profile: PolicyProfile) -> Self {
        Self { profile }
    }
}

impl Learner for FixedPolicyLearner {
    fn act(&mut self, decision: &Decision<'_>, rng: &mut AgentRng) -> Choice {
        let dist = self
            .profile
            .distribution(decision.key, decision.legal)
            .unwrap_or_else(|| crate::policy::uniform(decision.legal.len()));
        let i = sample_index(&dist, rng);
        Choice {
            action: decision.legal[i],
            prob: dist[i],
            entropy: entropy(&dist),
            q_gap: None,
        }
    }

    fn observe(&mut self, _player: PlayerId, _steps: &[Step], _reward: f64, _rng: &mut AgentRng) {}

    fn freeze(&mut self) {}

    fn is_frozen(&self) -> bool {
        true
    }

    fn policy(&self, key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>> {
        self.profile.distribution(key, legal)
    }
}

/// Draws an index from a discrete distribution. Singletons consume no randomness.
pub fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    if dist.len() == 1 {
        return 0;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// Shannon entropy in nats.
pub fn entropy(dist: &[f64]) -> f64 {
    -dist.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Difference between the largest and second-largest values.
pub fn top_gap(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in values {
        if v > a {
            b = a;
            a = v;
        } else if v > b {
            b = v;
        }
    }
    Some(a - b)
}
