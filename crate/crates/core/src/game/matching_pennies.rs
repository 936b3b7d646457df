use super::*;

/// Single-shot matching pennies, modelled sequentially with P1 unable to see
/// P0's move. P0 is the matcher and wins 1 on a match.
#[derive(Debug, Clone)]
pub struct MatchingPennies {
    spec: GameSpec,
}

impl MatchingPennies {
    pub fn new() -> Self {
        Self {
            spec: GameSpec {
                name: "matching_pennies".into(),
                num_players: 2,
                action_labels: vec!["heads".into(), "tails".into()],
                action_codes: vec!['h', 't'],
                reward_bounds: (-1.0, 1.0),
                nash_reference_value: Some(0.0),
                zero_sum: true,
            },
        }
    }
}

impl Default for MatchingPennies {
    fn default() -> Self {
        Self::new()
    }
}

impl Game for MatchingPennies {
    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn initial_states(&self) -> Vec<(HistoryState, f64)> {
        vec![(HistoryState::new([0, 0], ToMove::Player(0)), 1.0)]
    }

    fn legal_actions(&self, state: &HistoryState) -> Result<Vec<ActionId>> {
        require_player(state)?;
        Ok(vec![0, 1])
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
        Ok(InfoKey::new(p, "", ""))
    }

    fn utilities(&self, state: &HistoryState) -> Option<[f64; 2]> {
        if !state.is_terminal() {
            return None;
        }
        let u0 = if state.actions[0] == state.actions[1] { 1.0 } else { -1.0 };
        Some([u0, -u0])
    }

    fn encode(&self, state: &HistoryState) -> Vec<f32> {
        let mut v = Vec::with_capacity(2);
        one_hot(&mut v, state.current_player(), 2);
        v
    }

    fn encoding_width(&self) -> usize {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matcher_wins_on_match() {
        let g = MatchingPennies::new();
        let s = g.initial_states()[0].0.clone();
        let t = g.apply(&g.apply(&s, 0).unwrap(), 0).unwrap();
        assert_eq!(g.utilities(&t), Some([1.0, -1.0]));
        let t = g.apply(&g.apply(&s, 0).unwrap(), 1).unwrap();
        assert_eq!(g.utilities(&t), Some([-1.0, 1.0]));
    }
}
