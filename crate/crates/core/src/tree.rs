//! Explicit game trees with masks baked in, used by the exact solvers and
//! metrics. Nodes are stored in depth-first preorder under a chance root
//! whose children are the deals from `initial_states`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::game::{ActionId, Game, HistoryState, InfoKey, PlayerId, ToMove};
use crate::perturb::{effective_actions, MaskRule};
use crate::policy::{Policy, PolicyProfile};

pub type NodeId = usize;

#[derive(Clone, Debug)]
pub enum Node {
    Chance { children: Vec<(NodeId, f64)> },
    Decision { infoset: usize, children: Vec<NodeId> },
    Terminal { utilities: [f64; 2] },
}

#[derive(Clone, Debug)]
pub struct InfoSet {
    pub key: InfoKey,
    pub player: PlayerId,
    /// Actions left after masking, in canonical order.
    pub actions: Vec<ActionId>,
    /// Legal actions of the unmasked game at this key.
    pub base_actions: Vec<ActionId>,
    pub depth: usize,
    pub nodes: Vec<NodeId>,
}

/// Per-infoset distributions aligned with `InfoSet::actions`.
pub type Strategy = Vec<Vec<f64>>;

#[derive(Clone, Debug)]
pub struct GameTree {
    pub nodes: Vec<Node>,
    pub depth: Vec<usize>,
    pub infosets: Vec<InfoSet>,
    index: HashMap<InfoKey, usize>,
}

pub const ROOT: NodeId = 0;

impl GameTree {
    pub fn build(game: &dyn Game, rules: &[MaskRule]) -> Result<Self> {
        let mut tree = GameTree {
            nodes: vec![Node::Chance { children: Vec::new() }],
            depth: vec![0],
            infosets: Vec::new(),
            index: HashMap::new(),
        };
        let mut children = Vec::new();
        for (state, p) in game.initial_states() {
            let id = tree.expand(game, rules, &state, 1)?;
            children.push((id, p));
        }
        tree.nodes[ROOT] = Node::Chance { children };
        Ok(tree)
    }

    fn push(&mut self, node: Node, depth: usize) -> NodeId {
        self.nodes.push(node);
        self.depth.push(depth);
        self.nodes.len() - 1
    }

    fn expand(&mut self, game: &dyn Game, rules: &[MaskRule], state: &HistoryState, depth: usize) -> Result<NodeId> {
        match state.to_move {
            ToMove::Terminal => {
                let utilities = game.utilities(state).ok_or(Error::TerminalState)?;
                Ok(self.push(Node::Terminal { utilities }, depth))
            }
            ToMove::Chance => {
                let id = self.push(Node::Chance { children: Vec::new() }, depth);
                let mut children = Vec::new();
                for (o, p) in game.chance_outcomes(state)? {
                    let c = self.expand(game, rules, &game.apply_chance(state, o)?, depth + 1)?;
                    children.push((c, p));
                }
                self.nodes[id] = Node::Chance { children };
                Ok(id)
            }
            ToMove::Player(player) => {
                let key = game.info_key(state)?;
                let base = game.legal_actions(state)?;
                let actions = effective_actions(&key, &base, rules)?;
                let infoset = match self.index.get(&key) {
                    Some(&i) => i,
                    None => {
                        self.infosets.push(InfoSet {
                            key: key.clone(),
                            player,
                            actions: actions.clone(),
                            base_actions: base,
                            depth,
                            nodes: Vec::new(),
                        });
                        self.index.insert(key, self.infosets.len() - 1);
                        self.infosets.len() - 1
                    }
                };
                let id = self.push(Node::Decision { infoset, children: Vec::new() }, depth);
                self.infosets[infoset].nodes.push(id);
                let mut children = Vec::with_capacity(actions.len());
                for &a in &actions {
                    children.push(self.expand(game, rules, &game.apply(state, a)?, depth + 1)?);
                }
                self.nodes[id] = Node::Decision { infoset, children };
                Ok(id)
            }
        }
    }

    pub fn infoset_index(&self, key: &InfoKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn player_infosets(&self, player: PlayerId) -> impl Iterator<Item = (usize, &InfoSet)> {
        self.infosets.iter().enumerate().filter(move |(_, s)| s.player == player)
    }

    pub fn uniform_strategy(&self) -> Strategy {
        self.infosets
            .iter()
            .map(|s| vec![1.0 / s.actions.len() as f64; s.actions.len()])
            .collect()
    }

    /// Materialises `policy` at every infoset. Singleton infosets need no entry.
    pub fn strategy_from(&self, policy: &dyn Policy) -> Result<Strategy> {
        self.infosets
            .iter()
            .map(|s| match policy.distribution(&s.key, &s.actions) {
                Some(d) => Ok(d),
                None if s.actions.len() == 1 => Ok(vec![1.0]),
                None => Err(Error::MissingKey(s.key.to_string())),
            })
            .collect()
    }

    pub fn profile(&self, strategy: &Strategy) -> PolicyProfile {
        let mut profile = PolicyProfile::new();
        for (s, dist) in self.infosets.iter().zip(strategy) {
            profile.insert(s.key.clone(), s.actions.iter().copied().zip(dist.iter().copied()).collect());
        }
        profile
    }

    /// Per-node reach contributions `[player 0, player 1, chance]`.
    pub fn reach_contributions(&self, strategy: &Strategy) -> Vec<[f64; 3]> {
        let mut reach = vec![[0.0; 3]; self.nodes.len()];
        reach[ROOT] = [1.0, 1.0, 1.0];
        for id in 0..self.nodes.len() {
            let r = reach[id];
            match &self.nodes[id] {
                Node::Chance { children } => {
                    for &(c, p) in children {
                        reach[c] = [r[0], r[1], r[2] * p];
                    }
                }
                Node::Decision { infoset, children } => {
                    let player = self.infosets[*infoset].player;
                    for (&c, &p) in children.iter().zip(&strategy[*infoset]) {
                        let mut rc = r;
                        rc[player] *= p;
                        reach[c] = rc;
                    }
                }
                Node::Terminal { .. } => {}
            }
        }
        reach
    }

    /// Expected utilities of both players, computed bottom-up.
    pub fn expected_utilities(&self, strategy: &Strategy) -> [f64; 2] {
        self.node_values(strategy)[ROOT]
    }

    pub fn node_values(&self, strategy: &Strategy) -> Vec<[f64; 2]> {
        let mut v = vec![[0.0; 2]; self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            v[id] = match &self.nodes[id] {
                Node::Terminal { utilities } => *utilities,
                Node::Chance { children } => children.iter().fold([0.0; 2], |acc, &(c, p)| {
                    [acc[0] + p * v[c][0], acc[1] + p * v[c][1]]
                }),
                Node::Decision { infoset, children } => children
                    .iter()
                    .zip(&strategy[*infoset])
                    .fold([0.0; 2], |acc, (&c, &p)| [acc[0] + p * v[c][0], acc[1] + p * v[c][1]]),
            };
        }
        v
    }

    /// Node ids grouped by depth, shallowest first.
    pub fn levels(&self) -> Vec<Vec<NodeId>> {
        let max = self.depth.iter().copied().max().unwrap_or(0);
        let mut levels = vec![Vec::new(); max + 1];
        for (id, &d) in self.depth.iter().enumerate() {
            levels[d].push(id);
        }
        levels
    }
}
