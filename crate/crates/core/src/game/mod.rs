//! Extensive-form game abstraction.
//!
//! Every game is two-player with an optional chance player. States carry the
//! private chance outcomes dealt at the root, any public chance outcomes drawn
//! later in the tree, and the ordered list of player actions.

mod coordination;
mod ipd;
mod kuhn;
mod leduc;
mod liars_dice;
mod matching_pennies;
mod negotiation;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use coordination::Coordination;
pub use ipd::IteratedPrisonersDilemma;
pub use kuhn::Kuhn;
pub use leduc::Leduc;
pub use liars_dice::LiarsDice;
pub use matching_pennies::MatchingPennies;
pub use negotiation::Negotiation;

pub type ActionId = usize;
pub type PlayerId = usize;

pub const NUM_PLAYERS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToMove {
    Player(PlayerId),
    Chance,
    Terminal,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HistoryState {
    /// Private outcome per player (card, die, or dice-multiset index).
    pub private: [u8; NUM_PLAYERS],
    /// Public chance outcomes in the order they were revealed.
    pub public_chance: Vec<u8>,
    pub actions: Vec<ActionId>,
    pub to_move: ToMove,
}

impl HistoryState {
    pub fn new(private: [u8; NUM_PLAYERS], to_move: ToMove) -> Self {
        Self {
            private,
            public_chance: Vec::new(),
            actions: Vec::new(),
            to_move,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.to_move == ToMove::Terminal
    }

    pub fn current_player(&self) -> Option<PlayerId> {
        match self.to_move {
            ToMove::Player(p) => Some(p),
            _ => None,
        }
    }
}

/// Canonical per-player information key, encoded as
/// `P{player}|{private}|{public action string}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InfoKey(String);

impl InfoKey {
    pub fn new(player: PlayerId, private: &str, public: &str) -> Self {
        InfoKey(format!("P{player}|{private}|{public}"))
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut parts = text.splitn(3, '|');
        let p = parts.next()?;
        parts.next()?;
        parts.next()?;
        if !p.starts_with('P') || p[1..].parse::<usize>().is_err() {
            return None;
        }
        Some(InfoKey(text.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn player(&self) -> PlayerId {
        let end = self.0.find('|').unwrap_or(self.0.len());
        self.0[1..end].parse().unwrap_or(0)
    }

    pub fn private(&self) -> &str {
        self.0.split('|').nth(1).unwrap_or("")
    }

    pub fn public(&self) -> &str {
        self.0.splitn(3, '|').nth(2).unwrap_or("")
    }

    /// Public decision point this key belongs to: the key with the private
    /// part dropped, so keys differing only in private outcome aggregate.
    pub fn decision_point(&self) -> String {
        format!("P{}|{}", self.player(), self.public())
    }
}

impl fmt::Display for InfoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub name: String,
    pub num_players: usize,
    pub action_labels: Vec<String>,
    /// Single-character code per action used in info keys.
    pub action_codes: Vec<char>,
    pub reward_bounds: (f64, f64),
    pub nash_reference_value: Option<f64>,
    pub zero_sum: bool,
}

impl GameSpec {
    pub fn action_id(&self, label: &str) -> Result<ActionId> {
        self.action_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownAction {
                game: self.name.clone(),
                label: label.to_string(),
            })
    }

    pub fn num_actions(&self) -> usize {
        self.action_labels.len()
    }

    pub fn code(&self, action: ActionId) -> char {
        self.action_codes[action]
    }

    pub fn public_string(&self, actions: &[ActionId]) -> String {
        actions.iter().map(|&a| self.action_codes[a]).collect()
    }
}

pub trait Game: Send + Sync + fmt::Debug {
    fn spec(&self) -> &GameSpec;

    /// Root chance enumeration: every private deal with its probability.
    fn initial_states(&self) -> Vec<(HistoryState, f64)>;

    fn legal_actions(&self, state: &HistoryState) -> Result<Vec<ActionId>>;

    fn apply(&self, state: &HistoryState, action: ActionId) -> Result<HistoryState>;

    /// Outcomes of an in-tree chance node. Only Leduc (board card) and
    /// Coordination (per-round target) have these.
    fn chance_outcomes(&self, _state: &HistoryState) -> Result<Vec<(u8, f64)>> {
        Err(Error::NotChance)
    }

    fn apply_chance(&self, _state: &HistoryState, _outcome: u8) -> Result<HistoryState> {
        Err(Error::NotChance)
    }

    fn info_key(&self, state: &HistoryState) -> Result<InfoKey>;

    /// Utilities for both players at a terminal state.
    fn utilities(&self, state: &HistoryState) -> Option<[f64; 2]>;

    /// Fixed-width one-hot observation of `state` for the player to move.
    fn encode(&self, state: &HistoryState) -> Vec<f32>;

    fn encoding_width(&self) -> usize;

    /// Text form of the chance outcomes in `state`, used to group episodes by deal.
    fn deal_label(&self, state: &HistoryState) -> String {
        let mut s: String = state.private.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",");
        if !state.public_chance.is_empty() {
            s.push('/');
            s.push_str(
                &state
                    .public_chance
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        s
    }
}

pub(crate) fn check_legal(game: &dyn Game, state: &HistoryState, action: ActionId) -> Result<()> {
    if game.legal_actions(state)?.contains(&action) {
        Ok(())
    } else {
        Err(Error::IllegalAction { action })
    }
}

pub(crate) fn require_player(state: &HistoryState) -> Result<PlayerId> {
    match state.to_move {
        ToMove::Player(p) => Ok(p),
        ToMove::Chance => Err(Error::ChanceNode),
        ToMove::Terminal => Err(Error::TerminalState),
    }
}

pub(crate) fn one_hot(out: &mut Vec<f32>, index: Option<usize>, width: usize) {
    let start = out.len();
    out.resize(start + width, 0.0);
    if let Some(i) = index {
        out[start + i] = 1.0;
    }
}

pub const GAME_NAMES: &[&str] = &[
    "kuhn",
    "leduc",
    "leduc4",
    "liars_dice_1d",
    "liars_dice_2d",
    "matching_pennies",
    "ipd",
    "coordination",
    "negotiation",
];

pub fn by_name(name: &str) -> Result<Arc<dyn Game>> {
    Ok(match name {
        "kuhn" => Arc::new(Kuhn::new()),
        "leduc" => Arc::new(Leduc::standard()),
        "leduc4" => Arc::new(Leduc::four_rank()),
        "liars_dice_1d" => Arc::new(LiarsDice::new(1)),
        "liars_dice_2d" => Arc::new(LiarsDice::new(2)),
        "matching_pennies" => Arc::new(MatchingPennies::new()),
        "ipd" => Arc::new(IteratedPrisonersDilemma::new(10)),
        "coordination" => Arc::new(Coordination::new(10)),
        "negotiation" => Arc::new(Negotiation::new()),
        other => return Err(Error::UnknownGame(other.to_string())),
    })
}

pub fn initial_states(name: &str) -> Result<Vec<(HistoryState, f64)>> {
    Ok(by_name(name)?.initial_states())
}

/// All information keys of `player` reachable in the unconstrained game.
/// Walks the full tree, so only use it on games whose tree fits in memory.
pub fn enumerate_info_sets(game: &dyn Game, player: Option<PlayerId>) -> BTreeSet<InfoKey> {
    fn walk(
        game: &dyn Game,
        state: &HistoryState,
        player: Option<PlayerId>,
        seen: &mut HashSet<InfoKey>,
    ) {
        match state.to_move {
            ToMove::Terminal => {}
            ToMove::Chance => {
                for (o, _) in game.chance_outcomes(state).expect("chance node") {
                    walk(game, &game.apply_chance(state, o).expect("chance outcome"), player, seen);
                }
            }
            ToMove::Player(p) => {
                if player.is_none_or(|q| q == p) {
                    seen.insert(game.info_key(state).expect("decision node"));
                }
                for a in game.legal_actions(state).expect("decision node") {
                    walk(game, &game.apply(state, a).expect("legal action"), player, seen);
                }
            }
        }
    }
    let mut seen = HashSet::new();
    for (s, _) in game.initial_states() {
        walk(game, &s, player, &mut seen);
    }
    seen.into_iter().collect()
}
