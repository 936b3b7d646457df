use super::*;

const COOPERATE: ActionId = 0;
const PAYOFF_T: f64 = 5.0;
const PAYOFF_R: f64 = 3.0;
const PAYOFF_P: f64 = 1.0;
const PAYOFF_S: f64 = 0.0;

/// Iterated prisoner's dilemma with memory-one observations: each player sees
/// only the previous round's joint action. Utilities are per-round means.
#[derive(Debug, Clone)]
pub struct IteratedPrisonersDilemma {
    spec: GameSpec,
    rounds: usize,
}

impl IteratedPrisonersDilemma {
    pub fn new(rounds: usize) -> Self {
        Self {
            spec: GameSpec {
                name: "ipd".into(),
                num_players: 2,
                action_labels: vec!["cooperate".into(), "defect".into()],
                action_codes: vec!['c', 'd'],
                reward_bounds: (PAYOFF_S, PAYOFF_T),
                nash_reference_value: Some(PAYOFF_P),
                zero_sum: false,
            },
            rounds,
        }
    }

    fn payoff(a0: ActionId, a1: ActionId) -> [f64; 2] {
        match (a0 == COOPERATE, a1 == COOPERATE) {
            (true, true) => [PAYOFF_R, PAYOFF_R],
            (true, false) => [PAYOFF_S, PAYOFF_T],
            (false, true) => [PAYOFF_T, PAYOFF_S],
            (false, false) => [PAYOFF_P, PAYOFF_P],
        }
    }
}

impl Game for IteratedPrisonersDilemma {
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
        next.to_move = if next.actions.len() == 2 * self.rounds {
            ToMove::Terminal
        } else {
            ToMove::Player(next.actions.len() % 2)
        };
        Ok(next)
    }

    fn info_key(&self, state: &HistoryState) -> Result<InfoKey> {
        let p = require_player(state)?;
        let done = state.actions.len() / 2 * 2;
        let prev = if done >= 2 { &state.actions[done - 2..done] } else { &[][..] };
        Ok(InfoKey::new(p, "", &self.spec.public_string(prev)))
    }

    fn utilities(&self, state: &HistoryState) -> Option<[f64; 2]> {
        if !state.is_terminal() {
            return None;
        }
        let mut total = [0.0; 2];
        for pair in state.actions.chunks(2) {
            let u = Self::payoff(pair[0], pair[1]);
            total[0] += u[0];
            total[1] += u[1];
        }
        let r = self.rounds as f64;
        Some([total[0] / r, total[1] / r])
    }

    fn encode(&self, state: &HistoryState) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.encoding_width());
        one_hot(&mut v, state.current_player(), 2);
        let done = state.actions.len() / 2 * 2;
        let prev = (done >= 2).then(|| state.actions[done - 2] * 2 + state.actions[done - 1]);
        one_hot(&mut v, prev, 4);
        v
    }

    fn encoding_width(&self) -> usize {
        6
    }
}
