use super::*;

const PIE: usize = 10;

/// Single-round ultimatum over a pie of 10 units. P0 offers `k` units to P1
/// (actions `offer0..offer10`); P1 accepts (`10 - k`, `k`) or rejects (0, 0).
#[derive(Debug, Clone)]
pub struct Negotiation {
    spec: GameSpec,
}

impl Negotiation {
    pub const ACCEPT: ActionId = PIE + 1;
    pub const REJECT: ActionId = PIE + 2;

    pub fn new() -> Self {
        let mut labels: Vec<String> = (0..=PIE).map(|k| format!("offer{k}")).collect();
        labels.push("accept".into());
        labels.push("reject".into());
        let mut codes: Vec<char> = (0..PIE).map(|k| char::from(b'0' + k as u8)).collect();
        codes.extend(['T', 'y', 'n']);
        Self {
            spec: GameSpec {
                name: "negotiation".into(),
                num_players: 2,
                action_labels: labels,
                action_codes: codes,
                reward_bounds: (0.0, PIE as f64),
                nash_reference_value: None,
                zero_sum: false,
            },
        }
    }
}

impl Default for Negotiation {
    fn default() -> Self {
        Self::new()
    }
}

impl Game for Negotiation {
    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn initial_states(&self) -> Vec<(HistoryState, f64)> {
        vec![(HistoryState::new([0, 0], ToMove::Player(0)), 1.0)]
    }

    fn legal_actions(&self, state: &HistoryState) -> Result<Vec<ActionId>> {
        match require_player(state)? {
            0 => Ok((0..=PIE).collect()),
            _ => Ok(vec![Self::ACCEPT, Self::REJECT]),
        }
    }

    fn apply(&self, state: &HistoryState, action: ActionId) -> Result<HistoryState> {
        check_legal(self, state, action)?;
        let mut next = state.clone();
        next.actions.push(action);
        next.to_move = if next.actions.len() == 1 { ToMove::Player(1) } else { ToMove::Terminal };
        Ok(next)
    }

    fn info_key(&self, state: &HistoryState) -> Result<InfoKey> {
        let p = require_player(state)?;
        Ok(InfoKey::new(p, "", &self.spec.public_string(&state.actions)))
    }

    fn utilities(&self, state: &HistoryState) -> Option<[f64; 2]> {
        if !state.is_terminal() {
            return None;
        }
        let offer = state.actions[0] as f64;
        Some(if state.actions[1] == Self::ACCEPT {
            [PIE as f64 - offer, offer]
        } else {
            [0.0, 0.0]
        })
    }

    fn encode(&self, state: &HistoryState) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.encoding_width());
        one_hot(&mut v, state.current_player(), 2);
        one_hot(&mut v, state.actions.first().copied(), PIE + 1);
        v
    }

    fn encoding_width(&self) -> usize {
        2 + PIE + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepted_offer_splits_pie() {
        let g = Negotiation::new();
        let s = g.apply(&g.initial_states()[0].0, 3).unwrap();
        assert_eq!(g.info_key(&s).unwrap().as_str(), "P1||3");
        let t = g.apply(&s, Negotiation::ACCEPT).unwrap();
        assert_eq!(g.utilities(&t), Some([7.0, 3.0]));
        let t = g.apply(&s, Negotiation::REJECT).unwrap();
        assert_eq!(g.utilities(&t), Some([0.0, 0.0]));
    }
}
