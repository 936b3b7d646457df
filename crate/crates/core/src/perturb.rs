//! Action-space perturbations: named-action removal or deterministic forcing
//! for one player, scoped to a subset of decision points and switched on and
//! off by an episode schedule.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionId, GameSpec, InfoKey, PlayerId};
use crate::policy::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceRule {
    LowestLegal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    RemoveActions(BTreeSet<ActionId>),
    ForcePolicy(ForceRule),
}

/// Which of the target player's decision points a rule touches.
#[derive(Clone)]
pub enum Scope {
    AllNodes,
    /// Decision points with an empty public action string (the player's
    /// opening decision).
    RootOnly,
    /// Decision points whose public action string is in the set.
    Public(BTreeSet<String>),
    Predicate(Arc<dyn Fn(&InfoKey) -> bool + Send + Sync>),
}

impl Scope {
    pub fn contains(&self, key: &InfoKey) -> bool {
        match self {
            Scope::AllNodes => true,
            Scope::RootOnly => key.public().is_empty(),
            Scope::Public(set) => set.contains(key.public()),
            Scope::Predicate(f) => f(key),
        }
    }

    /// Parses `all`, `root`, or `public:<s1>,<s2>,...`.
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "all" => Ok(Scope::AllNodes),
            "root" => Ok(Scope::RootOnly),
            _ => match text.strip_prefix("public:") {
                Some(list) => Ok(Scope::Public(list.split(',').map(str::to_string).collect())),
                None => Err(Error::InvalidRule(format!("unknown scope `{text}`"))),
            },
        }
    }

    pub fn keyword(&self) -> String {
        match self {
            Scope::AllNodes => "all".into(),
            Scope::RootOnly => "root".into(),
            Scope::Public(set) => format!("public:{}", set.iter().cloned().collect::<Vec<_>>().join(",")),
            Scope::Predicate(_) => "predicate".into(),
        }
    }
}

impl fmt::Debug for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.keyword())
    }
}

#[derive(Clone, Debug)]
pub struct MaskRule {
    pub target_player: PlayerId,
    pub mode: MaskMode,
    pub scope: Scope,
}

impl MaskRule {
    /// Removes the named actions. Fails if the labels are unknown or cover
    /// the game's whole action table, which would empty every node.
    pub fn remove(spec: &GameSpec, player: PlayerId, labels: &[&str], scope: Scope) -> Result<Self> {
        let removed = labels
            .iter()
            .map(|l| spec.action_id(l))
            .collect::<Result<BTreeSet<_>>>()?;
        if removed.is_empty() {
            return Err(Error::InvalidRule("no actions to remove".into()));
        }
        if removed.len() == spec.num_actions() {
            return Err(Error::InvalidRule(format!(
                "removing every action of `{}` leaves no legal action",
                spec.name
            )));
        }
        Ok(Self {
            target_player: player,
            mode: MaskMode::RemoveActions(removed),
            scope,
        })
    }

    /// Removes every action except the named ones.
    pub fn keep_only(spec: &GameSpec, player: PlayerId, labels: &[&str], scope: Scope) -> Result<Self> {
        let keep = labels
            .iter()
            .map(|l| spec.action_id(l))
            .collect::<Result<BTreeSet<_>>>()?;
        let removed: Vec<&str> = spec
            .action_labels
            .iter()
            .enumerate()
            .filter(|(i, _)| !keep.contains(i))
            .map(|(_, l)| l.as_str())
            .collect();
        Self::remove(spec, player, &removed, scope)
    }

    pub fn force(player: PlayerId, rule: ForceRule, scope: Scope) -> Self {
        Self {
            target_player: player,
            mode: MaskMode::ForcePolicy(rule),
            scope,
        }
    }

    fn applies_to(&self, key: &InfoKey) -> bool {
        key.player() == self.target_player && self.scope.contains(key)
    }

    /// Text form used in experiment configs:
    /// `player=0 mode=remove actions=bet scope=all`.
    pub fn describe(&self, spec: &GameSpec) -> String {
        let mode = match &self.mode {
            MaskMode::RemoveActions(set) => format!(
                "mode=remove actions={}",
                set.iter().map(|&a| spec.action_labels[a].as_str()).collect::<Vec<_>>().join(",")
            ),
            MaskMode::ForcePolicy(ForceRule::LowestLegal) => "mode=force rule=lowest_legal".into(),
        };
        format!("player={} {} scope={}", self.target_player, mode, self.scope.keyword())
    }
}

/// Applies the active rules to `base` at `key`.
///
/// A removal that would empty a particular node leaves that node unchanged;
/// forcing yields the singleton lowest legal action.
pub fn effective_actions(key: &InfoKey, base: &[ActionId], active_rules: &[MaskRule]) -> Result<Vec<ActionId>> {
    if base.is_empty() {
        return Err(Error::InvalidRule("empty base action set".into()));
    }
    let mut actions = base.to_vec();
    for rule in active_rules.iter().filter(|r| r.applies_to(key)) {
        match &rule.mode {
            MaskMode::RemoveActions(removed) => {
                let kept: Vec<ActionId> = actions.iter().copied().filter(|a| !removed.contains(a)).collect();
                if !kept.is_empty() {
                    actions = kept;
                }
            }
            MaskMode::ForcePolicy(ForceRule::LowestLegal) => {
                actions.truncate(1);
            }
        }
    }
    Ok(actions)
}

/// A policy seen through active rules: masked actions get probability zero
/// and the rest follow `inner` over the effective set.
pub struct MaskedPolicy<'a> {
    pub inner: &'a dyn Policy,
    pub rules: &'a [MaskRule],
}

impl Policy for MaskedPolicy<'_> {
    fn distribution(&self, key: &InfoKey, legal: &[ActionId]) -> Option<Vec<f64>> {
        let kept = effective_actions(key, legal, self.rules).ok()?;
        if kept.len() == legal.len() {
            return self.inner.distribution(key, legal);
        }
        let inner = if kept.len() == 1 {
            vec![1.0]
        } else {
            self.inner.distribution(key, &kept)?
        };
        Some(
            legal
                .iter()
                .map(|a| kept.iter().position(|k| k == a).map_or(0.0, |i| inner[i]))
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub activate_at: usize,
    pub deactivate_at: Option<usize>,
    pub per_episode_probability: f64,
}

impl Schedule {
    pub fn new(activate_at: usize, deactivate_at: Option<usize>, per_episode_probability: f64) -> Result<Self> {
        if let Some(d) = deactivate_at {
            if d <= activate_at {
                return Err(Error::InvalidSchedule(format!(
                    "deactivate_at {d} must exceed activate_at {activate_at}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&per_episode_probability) {
            return Err(Error::InvalidSchedule(format!(
                "probability {per_episode_probability} outside [0, 1]"
            )));
        }
        Ok(Self {
            activate_at,
            deactivate_at,
            per_episode_probability,
        })
    }

    pub fn at(activate_at: usize) -> Self {
        Self {
            activate_at,
            deactivate_at: None,
            per_episode_probability: 1.0,
        }
    }

    pub fn never() -> Self {
        Self::at(usize::MAX)
    }

    /// Whether `episode` lies inside the activation window.
    pub fn in_window(&self, episode: usize) -> bool {
        episode >= self.activate_at && self.deactivate_at.is_none_or(|d| episode < d)
    }
}

/// Whether the mask is active in `episode`. Inside the window a single
/// Bernoulli draw is taken per episode unless the probability is 1.
pub fn schedule_active<R: Rng + ?Sized>(episode: usize, schedule: &Schedule, rng: &mut R) -> bool {
    if !schedule.in_window(episode) {
        return false;
    }
    if schedule.per_episode_probability >= 1.0 {
        return true;
    }
    rng.gen::<f64>() < schedule.per_episode_probability
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{self, Game};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kuhn_spec() -> GameSpec {
        game::Kuhn::new().spec().clone()
    }

    #[test]
    fn full_bet_removal_forces_pass() {
        let spec = kuhn_spec();
        let rule = MaskRule::remove(&spec, 0, &["bet"], Scope::AllNodes).unwrap();
        let key = InfoKey::new(0, "K", "");
        assert_eq!(effective_actions(&key, &[0, 1], std::slice::from_ref(&rule)).unwrap(), vec![0]);
        let key = InfoKey::new(0, "K", "pb");
        assert_eq!(effective_actions(&key, &[0, 1], &[rule]).unwrap(), vec![0]);
    }

    #[test]
    fn root_only_keeps_call_fold() {
        let spec = kuhn_spec();
        let rule = MaskRule::remove(&spec, 0, &["bet"], Scope::RootOnly).unwrap();
        let key = InfoKey::new(0, "Q", "pb");
        assert_eq!(effective_actions(&key, &[0, 1], std::slice::from_ref(&rule)).unwrap(), vec![0, 1]);
        let other = InfoKey::new(1, "Q", "");
        assert_eq!(effective_actions(&other, &[0, 1], &[rule]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn forcing_lowest_legal_claim() {
        let g = game::LiarsDice::new(1);
        let rule = MaskRule::force(0, ForceRule::LowestLegal, Scope::AllNodes);
        let key = InfoKey::new(0, "4", "cd");
        let base: Vec<ActionId> = (4..=12).collect();
        assert_eq!(effective_actions(&key, &base, &[rule]).unwrap(), vec![4]);
        assert_eq!(g.spec().action_labels[4], "claim1x5");
    }

    #[test]
    fn removing_every_label_is_rejected() {
        let spec = kuhn_spec();
        assert!(MaskRule::remove(&spec, 0, &["bet", "pass"], Scope::AllNodes).is_err());
        assert!(MaskRule::remove(&spec, 0, &["raise"], Scope::AllNodes).is_err());
    }

    #[test]
    fn removal_that_would_empty_a_node_is_skipped() {
        let g = game::LiarsDice::new(1);
        let claims: Vec<String> = g.spec().action_labels[..12].to_vec();
        let refs: Vec<&str> = claims.iter().map(String::as_str).collect();
        let rule = MaskRule::remove(g.spec(), 0, &refs, Scope::AllNodes).unwrap();
        let root = InfoKey::new(0, "1", "");
        let base: Vec<ActionId> = (0..12).collect();
        assert_eq!(effective_actions(&root, &base, std::slice::from_ref(&rule)).unwrap(), base);
        let later = InfoKey::new(0, "1", "ab");
        let base: Vec<ActionId> = (2..=12).collect();
        assert_eq!(effective_actions(&later, &base, &[rule]).unwrap(), vec![12]);
    }

    #[test]
    fn schedule_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(!schedule_active(5_000, &Schedule::at(10_000), &mut rng));
        assert!(schedule_active(10_000, &Schedule::at(10_000), &mut rng));
        let s = Schedule::new(10_000, Some(15_000), 1.0).unwrap();
        assert!(!schedule_active(16_000, &s, &mut rng));
        assert!(!schedule_active(15_000, &s, &mut rng));
        assert!(schedule_active(14_999, &s, &mut rng));
        assert!(Schedule::new(10, Some(10), 1.0).is_err());
        assert!(Schedule::new(10, None, 1.5).is_err());
    }

    #[test]
    fn stochastic_schedule_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = Schedule::new(0, None, 0.5).unwrap();
        let n = 20_000;
        let active = (0..n).filter(|&e| schedule_active(e, &s, &mut rng)).count();
        let freq = active as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.02, "freq {freq}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn masking_is_idempotent_and_identity_when_inactive(
                remove_bet in any::<bool>(), root in any::<bool>(), public in "[pb]{0,2}", card in 0usize..3
            ) {
                let spec = kuhn_spec();
                let key = InfoKey::new(0, ["J", "Q", "K"][card], &public);
                let base = vec![0, 1];
                prop_assert_eq!(effective_actions(&key, &base, &[]).unwrap(), base.clone());
                let label = if remove_bet { "bet" } else { "pass" };
                let scope = if root { Scope::RootOnly } else { Scope::AllNodes };
                let rules = vec![MaskRule::remove(&spec, 0, &[label], scope).unwrap()];
                let once = effective_actions(&key, &base, &rules).unwrap();
                let twice = effective_actions(&key, &once, &rules).unwrap();
                prop_assert!(!once.is_empty());
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn same_seed_same_activation(seed in any::<u64>(), p in 0.0f64..1.0) {
                let s = Schedule::new(10, Some(200), p).unwrap();
                let mut a = ChaCha8Rng::seed_from_u64(seed);
                let mut b = ChaCha8Rng::seed_from_u64(seed);
                let xs: Vec<bool> = (0..300).map(|e| schedule_active(e, &s, &mut a)).collect();
                let ys: Vec<bool> = (0..300).map(|e| schedule_active(e, &s, &mut b)).collect();
                prop_assert_eq!(xs, ys);
            }
        }
    }
}
