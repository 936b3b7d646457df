use super::*;

const RANKS: [char; 4] = ['J', 'Q', 'K', 'A'];
const FOLD: ActionId = 0;
const CALL: ActionId = 1;
const RAISE: ActionId = 2;
const MAX_RAISES: usize = 2;
const RAISE_SIZES: [f64; 2] = [2.0, 4.0];

/// Fixed-limit Leduc hold'em: one private card, one board card, two betting
/// rounds with raise sizes 2 and 4 and at most two raises per round.
/// Cards are `ranks x suits`; keys only expose ranks.
#[derive(Debug, Clone)]
pub struct Leduc {
    spec: GameSpec,
    ranks: usize,
    suits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Betting {
    round: usize,
    contrib: [f64; 2],
    raises: usize,
    /// Index in `actions` where the current round's betting starts.
    round_start: usize,
    status: ToMove,
    folded: Option<PlayerId>,
}

impl Leduc {
    pub fn standard() -> Self {
        Self::with_deck("leduc", 3, 2, -0.0856)
    }

    pub fn four_rank() -> Self {
        Self::with_deck("leduc4", 4, 3, -0.096)
    }

    fn with_deck(name: &str, ranks: usize, suits: usize, nash: f64) -> Self {
        Self {
            spec: GameSpec {
                name: name.into(),
                num_players: 2,
                action_labels: vec!["fold".into(), "call".into(), "raise".into()],
                action_codes: vec!['f', 'c', 'r'],
                reward_bounds: (-13.0, 13.0),
                nash_reference_value: Some(nash),
                zero_sum: true,
            },
            ranks,
            suits,
        }
    }

    fn deck_size(&self) -> usize {
        self.ranks * self.suits
    }

    fn rank(&self, card: u8) -> usize {
        card as usize / self.suits
    }

    fn betting(&self, state: &HistoryState) -> Betting {
        let mut b = Betting {
            round: 0,
            contrib: [1.0, 1.0],
            raises: 0,
            round_start: 0,
            status: ToMove::Player(0),
            folded: None,
        };
        let mut player = 0;
        let mut acts = 0;
        for (i, &a) in state.actions.iter().enumerate() {
            match a {
                FOLD => {
                    b.folded = Some(player);
                    b.status = ToMove::Terminal;
                    return b;
                }
                CALL => {
                    b.contrib[player] = b.contrib[1 - player];
                    acts += 1;
                    if acts >= 2 {
                        if b.round == 0 {
                            b.round = 1;
                            b.raises = 0;
                            b.round_start = i + 1;
                            acts = 0;
                            player = 0;
                            if state.public_chance.is_empty() {
                                b.status = ToMove::Chance;
                                return b;
                            }
                            continue;
                        }
                        b.status = ToMove::Terminal;
                        return b;
                    }
                }
                _ => {
                    b.contrib[player] = b.contrib[1 - player] + RAISE_SIZES[b.round];
                    b.raises += 1;
                    acts += 1;
                }
            }
            player = 1 - player;
        }
        b.status = ToMove::Player(player);
        b
    }

    fn public_string(&self, state: &HistoryState) -> String {
        let b = self.betting(state);
        let mut s = String::new();
        let split = if b.round == 1 { b.round_start } else { state.actions.len() };
        s.push_str(&self.spec.public_string(&state.actions[..split]));
        if let Some(&board) = state.public_chance.first() {
            s.push('/');
            s.push(RANKS[self.rank(board)]);
            s.push_str(&self.spec.public_string(&state.actions[split..]));
        }
        s
    }
}

impl Game for Leduc {
    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn initial_states(&self) -> Vec<(HistoryState, f64)> {
        let n = self.deck_size();
        let p = 1.0 / (n * (n - 1)) as f64;
        let mut out = Vec::with_capacity(n * (n - 1));
        for c0 in 0..n as u8 {
            for c1 in 0..n as u8 {
                if c0 != c1 {
                    out.push((HistoryState::new([c0, c1], ToMove::Player(0)), p));
                }
            }
        }
        out
    }

    fn legal_actions(&self, state: &HistoryState) -> Result<Vec<ActionId>> {
        require_player(state)?;
        let b = self.betting(state);
        let p = state.current_player().unwrap_or(0);
        let facing = b.contrib[1 - p] > b.contrib[p];
        let mut legal = Vec::with_capacity(3);
        if facing {
            legal.push(FOLD);
        }
        legal.push(CALL);
        if b.raises < MAX_RAISES {
            legal.push(RAISE);
        }
        Ok(legal)
    }

    fn apply(&self, state: &HistoryState, action: ActionId) -> Result<HistoryState> {
        check_legal(self, state, action)?;
        let mut next = state.clone();
        next.actions.push(action);
        next.to_move = self.betting(&next).status;
        Ok(next)
    }

    fn chance_outcomes(&self, state: &HistoryState) -> Result<Vec<(u8, f64)>> {
        if state.to_move != ToMove::Chance {
            return Err(Error::NotChance);
        }
        let n = self.deck_size();
        let p = 1.0 / (n - 2) as f64;
        Ok((0..n as u8)
            .filter(|c| !state.private.contains(c))
            .map(|c| (c, p))
            .collect())
    }

    fn apply_chance(&self, state: &HistoryState, outcome: u8) -> Result<HistoryState> {
        if state.to_move != ToMove::Chance {
            return Err(Error::NotChance);
        }
        let mut next = state.clone();
        next.public_chance.push(outcome);
        next.to_move = self.betting(&next).status;
        Ok(next)
    }

    fn info_key(&self, state: &HistoryState) -> Result<InfoKey> {
        let p = require_player(state)?;
        let rank = RANKS[self.rank(state.private[p])].to_string();
        Ok(InfoKey::new(p, &rank, &self.public_string(state)))
    }

    fn utilities(&self, state: &HistoryState) -> Option<[f64; 2]> {
        let b = self.betting(state);
        if b.status != ToMove::Terminal {
            return None;
        }
        let u0 = if let Some(f) = b.folded {
            if f == 0 {
                -b.contrib[0]
            } else {
                b.contrib[1]
            }
        } else {
            let board = self.rank(*state.public_chance.first()?);
            let r0 = self.rank(state.private[0]);
            let r1 = self.rank(state.private[1]);
            let strength = |r: usize| if r == board { 100 + r } else { r };
            match strength(r0).cmp(&strength(r1)) {
                std::cmp::Ordering::Greater => b.contrib[1],
                std::cmp::Ordering::Less => -b.contrib[0],
                std::cmp::Ordering::Equal => 0.0,
            }
        };
        Some([u0, -u0])
    }

    fn encode(&self, state: &HistoryState) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.encoding_width());
        let p = state.current_player().unwrap_or(0);
        one_hot(&mut v, Some(p), 2);
        one_hot(&mut v, Some(self.rank(state.private[p])), self.ranks);
        one_hot(&mut v, state.public_chance.first().map(|&c| self.rank(c)), self.ranks);
        for i in 0..8 {
            one_hot(&mut v, state.actions.get(i).copied(), 3);
        }
        v
    }

    fn encoding_width(&self) -> usize {
        2 + 2 * self.ranks + 8 * 3
    }
}
