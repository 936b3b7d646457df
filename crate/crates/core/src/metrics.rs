//! Capacity metrics, exact best response, exploitability, reward
//! normalisation and the ε-floor of the exploitation attractor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionId, Game, InfoKey, PlayerId};
use crate::perturb::MaskRule;
use crate::policy::{Policy, PolicyProfile};
use crate::tree::{GameTree, Node, Strategy, ROOT};

/// Full reach per information set (chance and both players' actions).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReachProfile {
    pub reach: BTreeMap<InfoKey, f64>,
}

impl ReachProfile {
    pub fn get(&self, key: &InfoKey) -> f64 {
        self.reach.get(key).copied().unwrap_or(0.0)
    }

    /// Reach summed over keys sharing a public decision point.
    pub fn decision_point(&self, point: &str) -> f64 {
        self.reach
            .iter()
            .filter(|(k, _)| k.decision_point() == point)
            .map(|(_, r)| r)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReachKind {
    /// Chance times both players' action probabilities.
    Full,
    /// Chance times the other player's action probabilities only.
    Counterfactual,
}

/// Reach of every infoset of `tree` under `strategy`.
pub fn infoset_reach(tree: &GameTree, strategy: &Strategy, kind: ReachKind) -> Vec<f64> {
    let contrib = tree.reach_contributions(strategy);
    tree.infosets
        .iter()
        .map(|s| {
            s.nodes
                .iter()
                .map(|&h| {
                    let r = contrib[h];
                    match kind {
                        ReachKind::Full => r[0] * r[1] * r[2],
                        ReachKind::Counterfactual => r[1 - s.player] * r[2],
                    }
                })
                .sum()
        })
        .collect()
}

pub fn reach_profile(game: &dyn Game, rules: &[MaskRule], profile: &dyn Policy) -> Result<ReachProfile> {
    let tree = GameTree::build(game, rules)?;
    let strategy = tree.strategy_from(profile)?;
    let reach = infoset_reach(&tree, &strategy, ReachKind::Full);
    Ok(ReachProfile {
        reach: tree.infosets.iter().map(|s| s.key.clone()).zip(reach).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointDetail {
    pub retained_actions: usize,
    pub reach: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    /// Public decision points (keys aggregated over private outcomes) with
    /// at least two effective actions.
    pub cac_decision_points: usize,
    /// Individual information sets with at least two effective actions.
    pub cac_raw_infosets: usize,
    /// Reach-weighted count; `None` for count-only reports.
    pub cac_weighted: Option<f64>,
    pub per_point_detail: BTreeMap<String, PointDetail>,
}

fn capacity_on_tree(tree: &GameTree, player: PlayerId, reach: Option<&[f64]>) -> CapacityReport {
    let mut detail: BTreeMap<String, PointDetail> = BTreeMap::new();
    let mut raw = 0;
    for (i, s) in tree.player_infosets(player) {
        let n = s.actions.len();
        if n >= 2 {
            raw += 1;
        }
        let d = detail.entry(s.key.decision_point()).or_insert(PointDetail {
            retained_actions: 0,
            reach: 0.0,
        });
        d.retained_actions = d.retained_actions.max(n);
        if let Some(r) = reach {
            d.reach += r[i];
        }
    }
    let points = detail.values().filter(|d| d.retained_actions >= 2).count();
    let weighted = reach.map(|_| {
        detail
            .values()
            .filter(|d| d.retained_actions >= 2)
            .map(|d| d.reach)
            .sum()
    });
    CapacityReport {
        cac_decision_points: points,
        cac_raw_infosets: raw,
        cac_weighted: weighted,
        per_point_detail: detail,
    }
}

/// Unweighted contingent action capacity of `player` under `rules`.
pub fn compute_cac(game: &dyn Game, rules: &[MaskRule], player: PlayerId) -> Result<CapacityReport> {
    let tree = GameTree::build(game, rules)?;
    Ok(capacity_on_tree(&tree, player, None))
}

/// Full capacity report with reach weights. Each decision point is weighted
/// by the chance-and-opponent reach summed over its information sets, so a
/// player's own earlier choices do not discount its later decisions.
pub fn capacity_report(
    game: &dyn Game,
    rules: &[MaskRule],
    profile: &dyn Policy,
    player: PlayerId,
) -> Result<CapacityReport> {
    let tree = GameTree::build(game, rules)?;
    let strategy = tree.strategy_from(profile)?;
    Ok(capacity_on_tree_weighted(&tree, &strategy, player))
}

pub fn capacity_on_tree_weighted(tree: &GameTree, strategy: &Strategy, player: PlayerId) -> CapacityReport {
    let reach = infoset_reach(tree, strategy, ReachKind::Counterfactual);
    capacity_on_tree(tree, player, Some(&reach))
}

pub fn compute_cac_weighted(
    game: &dyn Game,
    rules: &[MaskRule],
    profile: &dyn Policy,
    player: PlayerId,
) -> Result<f64> {
    Ok(capacity_report(game, rules, profile, player)?.cac_weighted.unwrap_or(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    /// Chosen action per responder infoset (index into `tree.infosets`).
    pub actions: BTreeMap<InfoKey, ActionId>,
    pub value: f64,
}

impl BestResponse {
    pub fn profile(&self) -> PolicyProfile {
        let mut p = PolicyProfile::new();
        for (k, &a) in &self.actions {
            p.insert(k.clone(), vec![(a, 1.0)]);
        }
        p
    }
}

/// Exact pure best response of `responder` against the other player's part
/// of `strategy`, by backward induction level by level. Ties go to the
/// lowest action id. Returns the chosen action index per infoset (`None`
/// for the other player's infosets) and the responder's value.
pub fn best_response_on_tree(tree: &GameTree, strategy: &Strategy, responder: PlayerId) -> (Vec<Option<usize>>, f64) {
    let sweep = best_response_sweep(tree, strategy, responder);
    (sweep.best, sweep.value)
}

struct BrSweep {
    best: Vec<Option<usize>>,
    value: f64,
    /// Counterfactual-reach-weighted action values per infoset.
    q: Vec<Vec<f64>>,
    /// Counterfactual reach per infoset.
    reach: Vec<f64>,
}

/// Expected value of each responder action at each responder infoset,
/// conditioned on reaching it and assuming best play afterwards. `None` for
/// the other player's infosets and for infosets the opponent and chance
/// never reach.
pub fn best_response_action_values(tree: &GameTree, strategy: &Strategy, responder: PlayerId) -> Vec<Option<Vec<f64>>> {
    let sweep = best_response_sweep(tree, strategy, responder);
    tree.infosets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            (s.player == responder && sweep.reach[i] > 0.0)
                .then(|| sweep.q[i].iter().map(|v| v / sweep.reach[i]).collect())
        })
        .collect()
}

fn best_response_sweep(tree: &GameTree, strategy: &Strategy, responder: PlayerId) -> BrSweep {
    let contrib = tree.reach_contributions(strategy);
    let weight = |h: usize| contrib[h][1 - responder] * contrib[h][2];
    let mut value = vec![0.0; tree.nodes.len()];
    let mut best: Vec<Option<usize>> = vec![None; tree.infosets.len()];
    let mut q: Vec<Vec<f64>> = tree.infosets.iter().map(|s| vec![0.0; s.actions.len()]).collect();
    let mut reach = vec![0.0; tree.infosets.len()];
    for level in tree.levels().iter().rev() {
        for &h in level {
            if let Node::Decision { infoset, children } = &tree.nodes[h] {
                if tree.infosets[*infoset].player == responder {
                    let w = weight(h);
                    reach[*infoset] += w;
                    for (qa, &c) in q[*infoset].iter_mut().zip(children) {
                        *qa += w * value[c];
                    }
                }
            }
        }
        for &h in level {
            if let Node::Decision { infoset, .. } = &tree.nodes[h] {
                if tree.infosets[*infoset].player == responder && best[*infoset].is_none() {
                    let qs = &q[*infoset];
                    let mut arg = 0;
                    for (i, &v) in qs.iter().enumerate() {
                        if v > qs[arg] + 1e-12 {
                            arg = i;
                        }
                    }
                    best[*infoset] = Some(arg);
                }
            }
        }
        for &h in level {
            value[h] = match &tree.nodes[h] {
                Node::Terminal { utilities } => utilities[responder],
                Node::Chance { children } => children.iter().map(|&(c, p)| p * value[c]).sum(),
                Node::Decision { infoset, children } => {
                    if tree.infosets[*infoset].player == responder {
                        value[children[best[*infoset].expect("decided")]]
                    } else {
                        children.iter().zip(&strategy[*infoset]).map(|(&c, &p)| p * value[c]).sum()
                    }
                }
            };
        }
    }
    BrSweep {
        best,
        value: value[ROOT],
        q,
        reach,
    }
}

/// Replaces the responder's part of `strategy` by the pure choices in `best`.
pub fn with_pure(tree: &GameTree, strategy: &Strategy, best: &[Option<usize>]) -> Strategy {
    tree.infosets
        .iter()
        .zip(strategy)
        .zip(best)
        .map(|((s, dist), b)| match b {
            Some(i) => {
                let mut d = vec![0.0; s.actions.len()];
                d[*i] = 1.0;
                d
            }
            None => dist.clone(),
        })
        .collect()
}

pub fn best_response(
    game: &dyn Game,
    rules: &[MaskRule],
    fixed_profile: &dyn Policy,
    responder: PlayerId,
) -> Result<BestResponse> {
    let tree = GameTree::build(game, rules)?;
    let strategy = strategy_for_fixed(&tree, fixed_profile, responder)?;
    let (best, value) = best_response_on_tree(&tree, &strategy, responder);
    let actions = tree
        .infosets
        .iter()
        .zip(&best)
        .filter_map(|(s, b)| b.map(|i| (s.key.clone(), s.actions[i])))
        .collect();
    Ok(BestResponse { actions, value })
}

/// Strategy with the fixed player's distributions and uniform placeholders
/// at the responder's infosets.
fn strategy_for_fixed(tree: &GameTree, fixed: &dyn Policy, responder: PlayerId) -> Result<Strategy> {
    tree.infosets
        .iter()
        .map(|s| {
            if s.player == responder {
                Ok(vec![1.0 / s.actions.len() as f64; s.actions.len()])
            } else {
                match fixed.distribution(&s.key, &s.actions) {
                    Some(d) => Ok(d),
                    None if s.actions.len() == 1 => Ok(vec![1.0]),
                    None => Err(Error::MissingKey(s.key.to_string())),
                }
            }
        })
        .collect()
}

pub fn exploitability_on_tree(tree: &GameTree, strategy: &Strategy) -> f64 {
    let (_, br0) = best_response_on_tree(tree, strategy, 0);
    let (_, br1) = best_response_on_tree(tree, strategy, 1);
    (br0 + br1) / 2.0
}

/// Mean of both players' best-response values against `profile`.
pub fn exploitability(game: &dyn Game, profile: &dyn Policy) -> Result<f64> {
    if !game.spec().zero_sum {
        return Err(Error::NotZeroSum(game.spec().name.clone()));
    }
    let tree = GameTree::build(game, &[])?;
    let strategy = tree.strategy_from(profile)?;
    Ok(exploitability_on_tree(&tree, &strategy))
}

/// Affine map of `r` from `[r_min, r_max]` onto `[0, 1]`.
pub fn normalize(r: f64, bounds: (f64, f64)) -> Result<f64> {
    let (lo, hi) = bounds;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("bounds ({lo}, {hi}) not increasing")));
    }
    if !(lo..=hi).contains(&r) {
        return Err(Error::OutOfBounds { value: r, min: lo, max: hi });
    }
    Ok((r - lo) / (hi - lo))
}

/// Whether every infoset of `player` with positive counterfactual reach
/// under uniform play has a single effective action.
pub fn is_zero_contingency(tree: &GameTree, player: PlayerId) -> bool {
    let reach = infoset_reach(tree, &tree.uniform_strategy(), ReachKind::Counterfactual);
    tree.player_infosets(player)
        .all(|(i, s)| s.actions.len() <= 1 || reach[i] <= 0.0)
}

/// Expected value of the forced player when the opponent plays an ε-greedy
/// version of its exact best response: probability `1 - ε` on the best
/// action plus `ε` spread uniformly over the effective actions.
pub fn dea_floor(epsilon: f64, game: &dyn Game, rules: &[MaskRule]) -> Result<f64> {
    let tree = GameTree::build(game, rules)?;
    dea_floor_on_tree(epsilon, &tree, 0)
}

pub fn dea_floor_on_tree(epsilon: f64, tree: &GameTree, forced: PlayerId) -> Result<f64> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if !is_zero_contingency(tree, forced) {
        return Err(Error::NotZeroContingency);
    }
    let responder = 1 - forced;
    let strategy = tree.uniform_strategy();
    let (best, _) = best_response_on_tree(tree, &strategy, responder);
    let mixed: Strategy = tree
        .infosets
        .iter()
        .zip(&strategy)
        .zip(&best)
        .map(|((s, d), b)| match b {
            Some(i) => {
                let n = s.actions.len() as f64;
                let mut m = vec![epsilon / n; s.actions.len()];
                m[*i] += 1.0 - epsilon;
                m
            }
            None => d.clone(),
        })
        .collect();
    Ok(tree.expected_utilities(&mixed)[forced])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    /// Value of the perturbed player with optimal play at the retained point.
    pub player_value: f64,
    /// Opponent's best-response value against the fully forced policy.
    pub br_value: f64,
    /// Reach of the retained point times the gain of optimal over forced play there.
    pub improvement_bound: f64,
    /// Offset of the ε-greedy exploitation floor above the pure best-response value.
    pub epsilon_floor: f64,
}

/// Decomposition of the perturbed player's value around a retained point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualDecomposition {
    /// Full reach of the retained point.
    pub reach: f64,
    /// Conditional value at the retained point with optimal play there.
    pub value_at_point: f64,
    /// Conditional value over histories that avoid the retained point.
    pub value_elsewhere: f64,
    /// Total value with optimal play at the retained point.
    pub total: f64,
}

/// Decomposes player 0's value in the residual game (where only `point`
/// keeps a choice) against a fixed opponent, with player 0 best-responding.
pub fn residual_decomposition(residual: &GameTree, opponent: &dyn Policy, point: &str) -> Result<ResidualDecomposition> {
    let strategy = strategy_for_fixed(residual, opponent, 0)?;
    let (best, total) = best_response_on_tree(residual, &strategy, 0);
    let strategy = with_pure(residual, &strategy, &best);
    let contrib = residual.reach_contributions(&strategy);
    let values = residual.node_values(&strategy);
    let mut inside = vec![false; residual.nodes.len()];
    let (mut reach, mut at_point) = (0.0, 0.0);
    for id in 0..residual.nodes.len() {
        let mark_children = |inside: &mut Vec<bool>| match &residual.nodes[id] {
            Node::Chance { children } => children.iter().for_each(|&(c, _)| inside[c] = true),
            Node::Decision { children, .. } => children.iter().for_each(|&c| inside[c] = true),
            Node::Terminal { .. } => {}
        };
        if inside[id] {
            mark_children(&mut inside);
            continue;
        }
        if let Node::Decision { infoset, .. } = &residual.nodes[id] {
            if residual.infosets[*infoset].key.decision_point() == point {
                let r = contrib[id][0] * contrib[id][1] * contrib[id][2];
                reach += r;
                at_point += r * values[id][0];
                inside[id] = true;
                mark_children(&mut inside);
            }
        }
    }
    let (mut mass, mut elsewhere) = (0.0, 0.0);
    for (id, node) in residual.nodes.iter().enumerate() {
        if let Node::Terminal { utilities } = node {
            if !inside[id] {
                let r = contrib[id][0] * contrib[id][1] * contrib[id][2];
                mass += r;
                elsewhere += r * utilities[0];
            }
        }
    }
    Ok(ResidualDecomposition {
        reach,
        value_at_point: if reach > 0.0 { at_point / reach } else { 0.0 },
        value_elsewhere: if mass > 0.0 { elsewhere / mass } else { 0.0 },
        total,
    })
}

/// Value report for a residual-contingency perturbation relative to its
/// zero-contingency counterpart, against a fixed opponent profile.
pub fn value_report(
    game: &dyn Game,
    zero_rules: &[MaskRule],
    residual_rules: &[MaskRule],
    opponent: &dyn Policy,
    point: &str,
    epsilon: f64,
) -> Result<ValueReport> {
    let zero = GameTree::build(game, zero_rules)?;
    let residual = GameTree::build(game, residual_rules)?;
    let dec = residual_decomposition(&residual, opponent, point)?;
    let zero_strategy = strategy_for_fixed(&zero, opponent, 0)?;
    let zero_values = zero.node_values(&zero_strategy);
    let contrib = zero.reach_contributions(&zero_strategy);
    let (mut reach, mut forced_at_point) = (0.0, 0.0);
    for s in zero.infosets.iter().filter(|s| s.key.decision_point() == point) {
        for &h in &s.nodes {
            let r = contrib[h][0] * contrib[h][1] * contrib[h][2];
            reach += r;
            forced_at_point += r * zero_values[h][0];
        }
    }
    let forced_at_point = if reach > 0.0 { forced_at_point / reach } else { 0.0 };
    let (_, br_value) = best_response_on_tree(&zero, &zero.uniform_strategy(), 1);
    Ok(ValueReport {
        player_value: dec.total,
        br_value,
        improvement_bound: dec.reach * (dec.value_at_point - forced_at_point),
        epsilon_floor: dea_floor_on_tree(epsilon, &zero, 0)? - dea_floor_on_tree(0.0, &zero, 0)?,
    })
}

/// Pure action of `strategy` at each infoset (argmax, lowest id on ties).
pub fn greedy_actions(tree: &GameTree, strategy: &Strategy) -> Vec<usize> {
    strategy
        .iter()
        .map(|d| {
            let mut arg = 0;
            for (i, &p) in d.iter().enumerate() {
                if p > d[arg] {
                    arg = i;
                }
            }
            arg
        })
        .take(tree.infosets.len())
        .collect()
}
