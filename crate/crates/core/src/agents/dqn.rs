//! Deep Q-network: a one-hidden-layer ReLU network trained with Adam on
//! uniformly sampled replay, bootstrapping from a periodically synced target
//! network. Illegal actions are excluded from both action selection and the
//! bootstrap maximum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{entropy, top_gap, AgentRng, Choice, Decision, Learner, Step};
use crate::game::{ActionId, Game, InfoKey, PlayerId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hidden: usize,
    pub lr: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub target_update_episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Decision steps over which ε moves linearly from start to end.
    pub epsilon_decay_steps: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            lr: 1e-3,
            buffer_capacity: 10_000,
            batch_size: 32,
            target_update_episodes: 500,
            epsilon_start: 0.15,
            epsilon_end: 0.01,
            epsilon_decay_steps: 50_000,
        }
    }
}

impl DqnConfig {
    pub fn fixed_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon_start: epsilon,
            epsilon_end: epsilon,
            ..Self::default()
        }
    }

    pub fn epsilon_at(&self, step: usize) -> f64 {
        if self.epsilon_decay_steps == 0 || step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

/// Input → hidden (ReLU) → one output per global action. Parameters live in
/// one flat vector laid out as `[w1, b1, w2, b2]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    input: usize,
    hidden: usize,
    output: usize,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut params = vec![0.0; hidden * input + hidden + output * hidden + output];
        let b1 = (6.0 / input as f64).sqrt();
        let b2 = (6.0 / hidden as f64).sqrt();
        for w in &mut params[..hidden * input] {
            *w = rng.gen_range(-b1..b1);
        }
        let w2 = hidden * input + hidden;
        for w in &mut params[w2..w2 + output * hidden] {
            *w = rng.gen_range(-b2..b2) * 0.1;
        }
        Self {
            input,
            hidden,
            output,
            params,
        }
    }

    pub fn output_len(&self) -> usize {
        self.output
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        (b1, w2, b2)
    }

    /// Returns post-activation hidden units and outputs.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.input);
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &p[j * self.input..(j + 1) * self.input];
                let z = p[b1 + j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        let out = (0..self.output)
            .map(|k| {
                let row = &p[w2 + k * self.hidden..w2 + (k + 1) * self.hidden];
                p[b2 + k] + row.iter().zip(&h).map(|(w, hj)| w * hj).sum::<f64>()
            })
            .collect();
        (h, out)
    }

    pub fn q_values(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).1
    }

    /// Adds `scale · ∂ Q(x)[action] / ∂ params` into `grad`.
    fn accumulate_grad(&self, x: &[f64], action: usize, scale: f64, grad: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        let (h, _) = self.forward(x);
        grad[b2 + action] += scale;
        for j in 0..self.hidden {
            grad[w2 + action * self.hidden + j] += scale * h[j];
            if h[j] > 0.0 {
                let dh = scale * self.params[w2 + action * self.hidden + j];
                grad[b1 + j] += dh;
                for (i, xi) in x.iter().enumerate() {
                    grad[j * self.input + i] += dh * xi;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Vec<f32>,
    pub action: ActionId,
    pub reward: f64,
    pub next_observation: Vec<f32>,
    /// Bit per legal action at the next observation.
    pub next_legal: u64,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn to_f64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

fn max_legal(values: &[f64], mask: u64) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(a, _)| mask >> a & 1 == 1)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// TD targets `r + max_{a' legal} Q_target(s', a')`, undiscounted.
pub fn td_targets(target: &Mlp, batch: &[&Transition]) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                t.reward
            } else {
                t.reward + max_legal(&target.q_values(&to_f64(&t.next_observation)), t.next_legal)
            }
        })
        .collect()
}

/// Mean of `½ (Q(s, a) − y)²` over the batch.
pub fn td_loss(net: &Mlp, batch: &[&Transition], targets: &[f64]) -> f64 {
    batch
        .iter()
        .zip(targets)
        .map(|(t, y)| {
            let q = net.q_values(&to_f64(&t.observation))[t.action];
            0.5 * (q - y).powi(2)
        })
        .sum::<f64>()
        / batch.len() as f64
}

pub fn td_loss_grad(net: &Mlp, batch: &[&Transition], targets: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; net.params.len()];
    let n = batch.len() as f64;
    for (t, y) in batch.iter().zip(targets) {
        let x = to_f64(&t.observation);
        let q = net.q_values(&x)[t.action];
        net.accumulate_grad(&x, t.action, (q - y) / n, &mut grad);
    }
    grad
}

/// One Adam step on the squared TD error of a sampled batch. Returns the
/// pre-step loss, or `None` while the buffer holds fewer than a batch.
pub fn dqn_step(
    net: &mut Mlp,
    target: &Mlp,
    buffer: &ReplayBuffer,
    adam: &mut Adam,
    batch_size: usize,
    rng: &mut AgentRng,
) -> Option<f64> {
    if buffer.len() < batch_size {
        return None;
    }
    let batch = buffer.sample(batch_size, rng);
    let targets = td_targets(target, &batch);
    let loss = td_loss(net, &batch, &targets);
    let grad = td_loss_grad(net, &batch, &targets);
    adam.step(&mut net.params, &grad);
    Some(loss)
}

fn legal_mask(legal: &[ActionId]) -> u64 {
    legal.iter().fold(0, |m, &a| m | 1 << a)
}

#[derive(Clone, Debug)]
pub struct DqnLearner {
    pub net: Mlp,
    target: Mlp,
    adam: Adam,
    buffer: ReplayBuffer,
    config: DqnConfig,
    steps: usize,
    episodes: usize,
    frozen: bool,
}

impl DqnLearner {
    pub fn new(game: &dyn Game, config: DqnConfig, rng: &mut AgentRng) -> Self {
        let net = Mlp::new(game.encoding_width(), config.hidden, game.spec().num_actions(), rng);
        Self {
            target: net.clone(),
            adam: Adam::new(net.params.len(), config.lr),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            net,
            config,
            steps: 0,
            episodes: 0,
            frozen: false,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon_at(self.steps)
    }
}

impl Learner for DqnLearner {
    fn begin_episode(&mut self, _rng: &mut AgentRng) {
        if self.frozen {
            return;
        }
        if self.episodes > 0 && self.episodes.is_multiple_of(self.config.target_update_episodes.max(1)) {
            self.target = self.net.clone();
        }
        self.episodes += 1;
    }

    fn act(&mut self, decision: &Decision<'_>, rng: &mut AgentRng) -> Choice {
        let legal = decision.legal;
        let obs = to_f64(decision.observation.expect("DQN needs observations"));
        let q = self.net.q_values(&obs);
        let legal_q: Vec<f64> = legal.iter().map(|&a| q[a]).collect();
        let epsilon = self.epsilon();
        if !self.frozen {
            self.steps += 1;
        }
        let n = legal.len();
        let greedy = super::tabular::argmax(&legal_q);
        let mut dist = vec![epsilon / n as f64; n];
        dist[greedy] += 1.0 - epsilon;
        let i = if n == 1 {
            0
        } else if rng.gen::<f64>() < epsilon {
            rng.gen_range(0..n)
        } else {
            greedy
        };
        Choice {
            action: legal[i],
            prob: dist[i],
            entropy: entropy(&dist),
            q_gap: top_gap(&legal_q),
        }
    }

    fn observe(&mut self, _player: PlayerId, steps: &[Step], reward: f64, rng: &mut AgentRng) {
        if self.frozen {
            return;
        }
        for (i, s) in steps.iter().enumerate() {
            let next = steps.get(i + 1);
            self.buffer.push(Transition {
                observation: s.observation.clone().expect("DQN needs observations"),
                action: s.action,
                reward: if next.is_none() { reward } else { 0.0 },
                next_observation: next
                    .map(|n| n.observation.clone().expect("DQN needs observations"))
                    .unwrap_or_default(),
                next_legal: next.map_or(0, |n| legal_mask(&n.legal)),
                terminal: next.is_none(),
            });
            dqn_step(
                &mut self.net,
                &self.target,
                &self.buffer,
                &mut self.adam,
                self.config.batch_size,
                rng,
            );
        }
    }

    fn freeze(&mut self) {
        self.frozen = true;
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn policy(&self, _key: &InfoKey, _legal: &[ActionId]) -> Option<Vec<f64>> {
        None
    }

    fn wants_observations(&self) -> bool {
        true
    }
}
