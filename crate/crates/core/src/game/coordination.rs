use super::*;

/// Repeated three-action coordination game. Each round a target is drawn
/// uniformly and revealed to both players, who then choose simultaneously;
/// both earn 1 when both pick the target. Utilities are summed over rounds.
#[derive(Debug, Clone)]
pub struct Coordination {
    spec: GameSpec,
    rounds: usize,
}

impl Coordination {
    pub fn new(rounds: usize) -> Self {
        Self {
            spec: GameSpec {
                name: "coordination".into(),
                num_players: 2,
                action_labels: vec!["a0".into(), "a1".into(), "a2".into()],
                action_codes: vec!['0', '1', '2'],
                reward_bounds: (0.0, rounds as f64),
                nash_reference_value: None,
                zero_sum: false,
            },
            rounds,
        }
    }

    fn status(&self, state: &HistoryState) -> ToMove {
        let n = state.actions.len();
        if n == 2 * self.rounds {
            ToMove::Terminal
        } else if state.public_chance.len() * 2 == n {
            ToMove::Chance
        } else {
            ToMove::Player(n % 2)
        }
    }
}

impl Game for Coordination {
    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn initial_states(&self) -> Vec<(HistoryState, f64)> {
        vec![(HistoryState::new([0, 0], ToMove::Chance), 1.0)]
    }

    fn legal_actions(&self, state: &HistoryState) -> Result<Vec<ActionId>> {
        require_player(state)?;
        Ok(vec![0, 1, 2])
    }

    fn apply(&self, state: &HistoryState, action: ActionId) -> Result<HistoryState> {
        check_legal(self, state, action)?;
        let mut next = state.clone();
        next.actions.push(action);
        next.to_move = self.status(&next);
        Ok(next)
    }

    fn chance_outcomes(&self, state: &HistoryState) -> Result<Vec<(u8, f64)>> {
        if state.to_move != ToMove::Chance {
            return Err(Error::NotChance);
        }
        Ok((0..3).map(|t| (t, 1.0 / 3.0)).collect())
    }

    fn apply_chance(&self, state: &HistoryState, outcome: u8) -> Result<HistoryState> {
        if state.to_move != ToMove::Chance {
            return Err(Error::NotChance);
        }
        let mut next = state.clone();
        next.public_chance.push(outcome);
        next.to_move = self.status(&next);
        Ok(next)
    }

    fn info_key(&self, state: &HistoryState) -> Result<InfoKey> {
        let p = require_player(state)?;
        let target = state.public_chance.last().map(|t| t.to_string()).unwrap_or_default();
        Ok(InfoKey::new(p, "", &target))
    }

    fn utilities(&self, state: &HistoryState) -> Option<[f64; 2]> {
        if !state.is_terminal() {
            return None;
        }
        let hits = state
            .actions
            .chunks(2)
            .zip(&state.public_chance)
            .filter(|(pair, &t)| pair[0] == t as usize && pair[1] == t as usize)
            .count() as f64;
        Some([hits, hits])
    }

    fn encode(&self, state: &HistoryState) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.encoding_width());
        one_hot(&mut v, state.current_player(), 2);
        one_hot(&mut v, state.public_chance.last().map(|&t| t as usize), 3);
        v
    }

    fn encoding_width(&self) -> usize {
        5
    }
}
