use super::*;

const CARDS: [char; 3] = ['J', 'Q', 'K'];
const PASS: ActionId = 0;
const BET: ActionId = 1;

/// Standard three-card Kuhn poker, ante 1, single bet of 1.
///
/// Actions are `pass` (check, or fold when facing a bet) and `bet` (bet, or
/// call when facing a bet).
#[derive(Debug, Clone)]
pub struct Kuhn {
    spec: GameSpec,
}

impl Kuhn {
    pub fn new() -> Self {
        Self {
            spec: GameSpec {
                name: "kuhn".into(),
                num_players: 2,
                action_labels: vec!["pass".into(), "bet".into()],
                action_codes: vec!['p', 'b'],
                reward_bounds: (-2.0, 2.0),
                nash_reference_value: Some(-1.0 / 18.0),
                zero_sum: true,
            },
        }
    }

    fn status(actions: &[ActionId]) -> ToMove {
        match actions {
            [] | [PASS, BET] => ToMove::Player(0),
            [_] => ToMove::Player(1),
            _ => ToMove::Terminal,
        }
    }
}

impl Default for Kuhn {
    fn default() -> Self {
        Self::new()
    }
}

impl Game for Kuhn {
    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn initial_states(&self) -> Vec<(HistoryState, f64)> {
        let mut out = Vec::with_capacity(6);
        for c0 in 0..3u8 {
            for c1 in 0..3u8 {
                if c0 != c1 {
                    out.push((HistoryState::new([c0, c1], ToMove::Player(0)), 1.0 / 6.0));
                }
            }
        }
        out
    }

    fn legal_actions(&self, state: &HistoryState) -> Result<Vec<ActionId>> {
        require_player(state)?;
        Ok(vec![PASS, BET])
    }

    fn apply(&self, state: &HistoryState, action: ActionId) -> Result<HistoryState> {
        check_legal(self, state, action)?;
        let mut next = state.clone();
        next.actions.push(action);
        next.to_move = Self::status(&next.actions);
        Ok(next)
    }

    fn info_key(&self, state: &HistoryState) -> Result<InfoKey> {
        let p = require_player(state)?;
        let card = CARDS[state.private[p] as usize].to_string();
        Ok(InfoKey::new(p, &card, &self.spec.public_string(&state.actions)))
    }

    fn utilities(&self, state: &HistoryState) -> Option<[f64; 2]> {
        if !state.is_terminal() {
            return None;
        }
        let showdown = if state.private[0] > state.private[1] { 1.0 } else { -1.0 };
        let u0 = match state.actions.as_slice() {
            [PASS, PASS] => showdown,
            [BET, PASS] => 1.0,
            [BET, BET] | [PASS, BET, BET] => 2.0 * showdown,
            [PASS, BET, PASS] => -1.0,
            _ => return None,
        };
        Some([u0, -u0])
    }

    fn encode(&self, state: &HistoryState) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.encoding_width());
        let p = state.current_player().unwrap_or(0);
        one_hot(&mut v, Some(p), 2);
        one_hot(&mut v, Some(state.private[p] as usize), 3);
        for i in 0..3 {
            one_hot(&mut v, state.actions.get(i).copied(), 2);
        }
        v
    }

    fn encoding_width(&self) -> usize {
        2 + 3 + 3 * 2
    }
}
