//! Vanilla full-tree counterfactual regret minimisation: simultaneous
//! updates, regret matching, and a reach-weighted uniform strategy average.

use crate::error::Result;
use crate::game::Game;
use crate::metrics::exploitability_on_tree;
use crate::perturb::MaskRule;
use crate::policy::PolicyProfile;
use crate::tree::{GameTree, Node, Strategy, ROOT};

pub struct CfrSolver {
    tree: GameTree,
    regrets: Vec<Vec<f64>>,
    strategy_sum: Vec<Vec<f64>>,
    current: Strategy,
    iteration: usize,
}

impl CfrSolver {
    pub fn new(game: &dyn Game, rules: &[MaskRule]) -> Result<Self> {
        Ok(Self::from_tree(GameTree::build(game, rules)?))
    }

    pub fn from_tree(tree: GameTree) -> Self {
        let zeros: Vec<Vec<f64>> = tree.infosets.iter().map(|s| vec![0.0; s.actions.len()]).collect();
        let current = tree.uniform_strategy();
        Self {
            regrets: zeros.clone(),
            strategy_sum: zeros,
            current,
            tree,
            iteration: 0,
        }
    }

    pub fn tree(&self) -> &GameTree {
        &self.tree
    }

    pub fn iterations(&self) -> usize {
        self.iteration
    }

    pub fn iterate(&mut self, n: usize) {
        for _ in 0..n {
            self.step();
        }
    }

    fn step(&mut self) {
        self.iteration += 1;
        let tree = &self.tree;
        let reach = tree.reach_contributions(&self.current);
        let values = tree.node_values(&self.current);
        for (id, node) in tree.nodes.iter().enumerate() {
            if let Node::Decision { infoset, children } = node {
                let player = tree.infosets[*infoset].player;
                let cf = reach[id][1 - player] * reach[id][2];
                let own = reach[id][player];
                let v = values[id][player];
                let regrets = &mut self.regrets[*infoset];
                let sums = &mut self.strategy_sum[*infoset];
                for (i, &c) in children.iter().enumerate() {
                    regrets[i] += cf * (values[c][player] - v);
                    sums[i] += own * self.current[*infoset][i];
                }
            }
        }
        for (dist, regrets) in self.current.iter_mut().zip(&self.regrets) {
            regret_matching(regrets, dist);
        }
    }

    pub fn average_strategy(&self) -> Strategy {
        self.strategy_sum
            .iter()
            .map(|sums| {
                let total: f64 = sums.iter().sum();
                if total > 0.0 {
                    sums.iter().map(|s| s / total).collect()
                } else {
                    vec![1.0 / sums.len() as f64; sums.len()]
                }
            })
            .collect()
    }

    pub fn average_profile(&self) -> PolicyProfile {
        self.tree.profile(&self.average_strategy())
    }

    /// Expected utility of player 0 when both seats play the average strategy.
    pub fn average_value(&self) -> f64 {
        self.tree.expected_utilities(&self.average_strategy())[0]
    }

    pub fn exploitability(&self) -> f64 {
        exploitability_on_tree(&self.tree, &self.average_strategy())
    }

    pub fn root(&self) -> usize {
        ROOT
    }
}

pub fn regret_matching(regrets: &[f64], out: &mut [f64]) {
    let positive: f64 = regrets.iter().map(|r| r.max(0.0)).sum();
    if positive > 0.0 {
        for (o, r) in out.iter_mut().zip(regrets) {
            *o = r.max(0.0) / positive;
        }
    } else {
        let u = 1.0 / out.len() as f64;
        out.iter_mut().for_each(|o| *o = u);
    }
}

/// Runs `iterations` of CFR on the unperturbed game and returns the
/// average-strategy profile.
pub fn cfr_solve(game: &dyn Game, iterations: usize) -> Result<PolicyProfile> {
    let mut solver = CfrSolver::new(game, &[])?;
    solver.iterate(iterations);
    Ok(solver.average_profile())
}
