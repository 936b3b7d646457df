//! Tabular value learners: Monte Carlo Q-learning, SARSA and the
//! entropy-regularised variant, all ε-greedy over a shared value table.

use std::collections::HashMap;

use rand::Rng;

use super::{entropy, top_gap, AgentRng, Choice, Decision, Learner, Step};
use crate::error::{Error, Result};
use crate::game::{ActionId, GameSpec, InfoKey, PlayerId};

#[derive(Clone, Debug, PartialEq)]
struct Row {
    values: Vec<f64>,
    /// Bit per action id that has been written at least once.
    written: u64,
}

/// Action values keyed by information key; unseen pairs read as 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    num_actions: usize,
    rows: HashMap<InfoKey, Row>,
}

impl ValueTable {
    pub fn new(num_actions: usize) -> Self {
        assert!(num_actions <= 64, "action ids must fit a 64-bit mask");
        Self {
            num_actions,
            rows: HashMap::new(),
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, key: &InfoKey, action: ActionId) -> f64 {
        self.rows.get(key).map_or(0.0, |r| r.values[action])
    }

    pub fn set(&mut self, key: &InfoKey, action: ActionId, value: f64) {
        debug_assert!(value.is_finite());
        let n = self.num_actions;
        let row = self.rows.entry(key.clone()).or_insert_with(|| Row {
            values: vec![0.0; n],
            written: 0,
        });
        row.values[action] = value;
        row.written |= 1 << action;
    }

    /// Values of `legal` at `key`, in the same order.
    pub fn values(&self, key: &InfoKey, legal: &[ActionId]) -> Vec<f64> {
        match self.rows.get(key) {
            Some(r) => legal.iter().map(|&a| r.values[a]).collect(),
            None => vec![0.0; legal.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.values().map(|r| r.written.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Greedy action over `legal`, lowest id on ties.
    pub fn greedy(&self, key: &InfoKey, legal: &[ActionId]) -> ActionId {
        legal[argmax(&self.values(key, legal))]
    }

    /// One line per written (key, action label, value), sorted by key then
    /// action id. Values use the shortest round-tripping decimal form.
    pub fn to_text(&self, spec: &GameSpec) -> String {
        let mut keys: Vec<&InfoKey> = self.rows.keys().collect();
        keys.sort();
        let mut out = String::new();
        for key in keys {
            let row = &self.rows[key];
            for a in (0..self.num_actions).filter(|a| row.written >> a & 1 == 1) {
                out.push_str(&format!("{}\t{}\t{}\n", key, spec.action_labels[a], row.values[a]));
            }
        }
        out
    }

    pub fn from_text(spec: &GameSpec, text: &str) -> Result<Self> {
        let mut table = ValueTable::new(spec.num_actions());
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut parts = line.split('\t');
            let (Some(k), Some(label), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(Error::InvalidParameter(format!("malformed table line: {line}")));
            };
            let key = InfoKey::parse(k).ok_or_else(|| Error::InvalidParameter(format!("bad key {k}")))?;
            let value: f64 = v
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad value {v}")))?;
            table.set(&key, spec.action_id(label)?, value);
        }
        Ok(table)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy behaviour distribution over `legal`.
pub fn egreedy_distribution(table: &ValueTable, key: &InfoKey, legal: &[ActionId], epsilon: f64) -> Vec<f64> {
    let n = legal.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut dist = vec![epsilon / n as f64; n];
    dist[argmax(&table.values(key, legal))] += 1.0 - epsilon;
    dist
}

/// With probability `1 - ε` the greedy action (lowest id on ties), otherwise
/// uniform over `legal`. A singleton set returns its action without drawing.
pub fn select_action_egreedy(
    table: &ValueTable,
    key: &InfoKey,
    legal: &[ActionId],
    epsilon: f64,
    rng: &mut AgentRng,
) -> ActionId {
    if legal.len() == 1 {
        return legal[0];
    }
    if rng.gen::<f64>() < epsilon {
        legal[rng.gen_range(0..legal.len())]
    } else {
        table.greedy(key, legal)
    }
}

/// `Q ← Q + α(G − Q)` for each visited pair, in visit order.
pub fn mc_terminal_update(table: &mut ValueTable, trajectory: &[(InfoKey, ActionId)], ret: f64, alpha: f64) {
    for (key, a) in trajectory {
        let q = table.get(key, *a);
        table.set(key, *a, q + alpha * (ret - q));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SarsaTransition {
    pub key: InfoKey,
    pub action: ActionId,
    pub reward: f64,
    /// The pair chosen at the player's next decision; `None` when terminal.
    pub next: Option<(InfoKey, ActionId)>,
}

/// Undiscounted SARSA backups applied in visit order.
pub fn sarsa_update(table: &mut ValueTable, transitions: &[SarsaTransition], alpha: f64) {
    for t in transitions {
        let bootstrap = t.next.as_ref().map_or(0.0, |(k, a)| table.get(k, *a));
        let q = table.get(&t.key, t.action);
        table.set(&t.key, t.action, q + alpha * (t.reward + bootstrap - q));
    }
}

/// Monte Carlo update toward `G + τ·H(π_s)`, where `π_s` is the ε-greedy
/// policy at the visited key before this update.
pub fn entropy_ql_update(
    table: &mut ValueTable,
    trajectory: &[(InfoKey, Vec<ActionId>, ActionId)],
    ret: f64,
    alpha: f64,
    tau: f64,
    epsilon: f64,
) -> Result<()> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau {tau} is negative")));
    }
    for (key, legal, a) in trajectory {
        let bonus = if tau > 0.0 {
            tau * entropy(&egreedy_distribution(table, key, legal, epsilon))
        } else {
            0.0
        };
        let q = table.get(key, *a);
        table.set(key, *a, q + alpha * (ret + bonus - q));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TdRule {
    MonteCarlo,
    Sarsa,
    EntropyRegularised { tau: f64 },
}

/// ε-greedy tabular learner with a fixed exploration rate.
#[derive(Clone, Debug)]
pub struct TabularLearner {
    pub table: ValueTable,
    rule: TdRule,
    alpha: f64,
    epsilon: f64,
    frozen: bool,
}

impl TabularLearner {
    pub fn new(num_actions: usize, rule: TdRule, alpha: f64, epsilon: f64) -> Self {
        Self {
            table: ValueTable::new(num_actions),
            rule,
            alpha,
            epsilon,
            frozen: false,
        }
    }

    pub fn q_learning(num_actions: usize, alpha: f64, epsilon: f64) -> Self {
        Self::new(num_actions, TdRule::MonteCarlo, alpha, epsilon)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn learn(&mut self, steps: &[Step], reward: f64) {
        if self.frozen || steps.is_empty() {
            return;
        }
        match self.rule {
            TdRule::MonteCarlo => {
                let traj: Vec<(InfoKey, ActionId)> = steps.iter().map(|s| (s.key.clone(), s.action)).collect();
                mc_terminal_update(&mut self.table, &traj, reward, self.alpha);
            }
            TdRule::Sarsa => {
                let transitions: Vec<SarsaTransition> = steps
                    .iter()
                    .enumerate()
                    .map(|(i, s)| SarsaTransition {
                        key: s.key.clone(),
                        action: s.action,
                        reward: if i + 1 == steps.len() { reward } else { 0.0 },
                        next: steps.get(i + 1).map(|n| (n.key.clone(), n.action)),
                    })
                    .collect();
                sarsa_update(&mut self.table, &transitions, self.alpha);
            }
            TdRule::EntropyRegularised { tau } => {
                let traj: Vec<(InfoKey, Vec<ActionId>, ActionId)> =
                    steps.iter().map(|s| (s.key.clone(), s.legal.clone(), s.action)).collect();
                entropy_ql_update(&mut self.table, &traj, reward, self.alpha, tau, self.epsilon)
                    .expect("tau validated at construction");
            }
        }
    }
}

impl Learner for TabularLearner {
    fn act(&mut self, decision: &Decision<'_>, rng: &mut AgentRng) -> Choice {
        let action = select_action_egreedy(&self.table, decision.key, decision.legal, self.epsilon, rng);
        let dist = egreedy_distribution(&self.table, decision.key, decision.legal, self.epsilon);
        let i = decision.legal.iter().position(|&a| a == action).expect("chosen from legal");
        Choice {
            action,
            prob: dist[i],
            entropy: entropy(&dist),
            q_gap: top_gap(&self.table.values(decision.key, decision.legal)),
        }
    }

    fn observe(&mut self, _player: PlayerId, steps: &[Step], reward: f64, _rng: &mut AgentRng) {
        self.learn(steps, reward);
    }

    fn freeze(&mut self) {
        self.frozen = true;
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn policy(&self, key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>> {
        Some(egreedy_distribution(&self.table, key, legal, self.epsilon))
    }
}
