use super::*;

const FACES: usize = 6;

/// Liar's Dice with `dice` six-sided dice per player.
///
/// Claims are (count, face) pairs with count in `1..=2*dice`, ordered by
/// count then face; each claim must exceed the standing one. The first mover
/// cannot challenge. On challenge the claim is checked against both hands:
/// if it holds the challenger loses 1, otherwise the claimer does.
///
/// Key codes: claim `i` is `'a' + i`, challenge is `'!'`.
#[derive(Debug, Clone)]
pub struct LiarsDice {
    spec: GameSpec,
    dice: usize,
    /// Sorted dice multisets per player with their probabilities.
    hands: Vec<(Vec<u8>, f64)>,
}

impl LiarsDice {
    pub fn new(dice: usize) -> Self {
        assert!((1..=2).contains(&dice), "1 or 2 dice per player");
        let num_claims = 2 * dice * FACES;
        let mut labels: Vec<String> = (0..num_claims)
            .map(|i| format!("claim{}x{}", i / FACES + 1, i % FACES + 1))
            .collect();
        labels.push("challenge".into());
        let mut codes: Vec<char> = (0..num_claims).map(|i| (b'a' + i as u8) as char).collect();
        codes.push('!');
        let nash = if dice == 1 { Some(-0.076) } else { None };
        Self {
            spec: GameSpec {
                name: format!("liars_dice_{dice}d"),
                num_players: 2,
                action_labels: labels,
                action_codes: codes,
                reward_bounds: (-1.0, 1.0),
                nash_reference_value: nash,
                zero_sum: true,
            },
            dice,
            hands: Self::hands(dice),
        }
    }

    fn hands(dice: usize) -> Vec<(Vec<u8>, f64)> {
        let mut hands: Vec<(Vec<u8>, f64)> = Vec::new();
        let total = (FACES as f64).powi(dice as i32);
        let mut roll = vec![0u8; dice];
        loop {
            let mut sorted = roll.clone();
            sorted.sort_unstable();
            match hands.iter_mut().find(|(h, _)| *h == sorted) {
                Some((_, p)) => *p += 1.0 / total,
                None => hands.push((sorted, 1.0 / total)),
            }
            let mut i = 0;
            loop {
                if i == dice {
                    hands.sort_by(|a, b| a.0.cmp(&b.0));
                    return hands;
                }
                roll[i] += 1;
                if (roll[i] as usize) < FACES {
                    break;
                }
                roll[i] = 0;
                i += 1;
            }
        }
    }

    pub fn num_claims(&self) -> usize {
        2 * self.dice * FACES
    }

    pub fn challenge(&self) -> ActionId {
        self.num_claims()
    }

    pub fn dice_per_player(&self) -> usize {
        self.dice
    }

    pub fn num_hands(&self) -> usize {
        self.hands.len()
    }

    /// Closed-form information-set count: each (hand, claim history) pair for
    /// the player to move. Claim histories are strictly increasing sequences,
    /// i.e. subsets of the claim space.
    pub fn info_set_count(&self) -> u64 {
        self.hands.len() as u64 * (1u64 << self.num_claims())
    }

    fn hand(&self, state: &HistoryState, player: PlayerId) -> &[u8] {
        &self.hands[state.private[player] as usize].0
    }

    fn claim_holds(&self, state: &HistoryState, claim: ActionId) -> bool {
        let count = claim / FACES + 1;
        let face = (claim % FACES) as u8;
        let n = (0..2)
            .flat_map(|p| self.hand(state, p).iter())
            .filter(|&&d| d == face)
            .count();
        n >= count
    }

    fn hand_label(&self, state: &HistoryState, player: PlayerId) -> String {
        self.hand(state, player).iter().map(|d| char::from(b'1' + d)).collect()
    }
}

impl Game for LiarsDice {
    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn initial_states(&self) -> Vec<(HistoryState, f64)> {
        let mut out = Vec::with_capacity(self.hands.len().pow(2));
        for (i, (_, p0)) in self.hands.iter().enumerate() {
            for (j, (_, p1)) in self.hands.iter().enumerate() {
                out.push((HistoryState::new([i as u8, j as u8], ToMove::Player(0)), p0 * p1));
            }
        }
        out
    }

    fn legal_actions(&self, state: &HistoryState) -> Result<Vec<ActionId>> {
        require_player(state)?;
        match state.actions.last() {
            None => Ok((0..self.num_claims()).collect()),
            Some(&last) => Ok((last + 1..=self.challenge()).collect()),
        }
    }

    fn apply(&self, state: &HistoryState, action: ActionId) -> Result<HistoryState> {
        check_legal(self, state, action)?;
        let mut next = state.clone();
        next.actions.push(action);
        next.to_move = if action == self.challenge() {
            ToMove::Terminal
        } else {
            ToMove::Player(next.actions.len() % 2)
        };
        Ok(next)
    }

    fn info_key(&self, state: &HistoryState) -> Result<InfoKey> {
        let p = require_player(state)?;
        Ok(InfoKey::new(
            p,
            &self.hand_label(state, p),
            &self.spec.public_string(&state.actions),
        ))
    }

    fn utilities(&self, state: &HistoryState) -> Option<[f64; 2]> {
        if !state.is_terminal() {
            return None;
        }
        let n = state.actions.len();
        let claim = state.actions[n - 2];
        let challenger = (n - 1) % 2;
        let u_challenger = if self.claim_holds(state, claim) { -1.0 } else { 1.0 };
        let mut u = [0.0; 2];
        u[challenger] = u_challenger;
        u[1 - challenger] = -u_challenger;
        Some(u)
    }

    fn encode(&self, state: &HistoryState) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.encoding_width());
        let p = state.current_player().unwrap_or(0);
        one_hot(&mut v, Some(p), 2);
        let start = v.len();
        v.resize(start + FACES, 0.0);
        for &d in self.hand(state, p) {
            v[start + d as usize] += 1.0;
        }
        // Claims strictly increase, so the set of claims made encodes the
        // whole public sequence.
        let start = v.len();
        v.resize(start + self.num_claims(), 0.0);
        for &a in &state.actions {
            if a < self.num_claims() {
                v[start + a] = 1.0;
            }
        }
        v
    }

    fn encoding_width(&self) -> usize {
        2 + FACES + self.num_claims()
    }

    fn deal_label(&self, state: &HistoryState) -> String {
        format!("{},{}", self.hand_label(state, 0), self.hand_label(state, 1))
    }
}
