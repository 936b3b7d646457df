use approx::assert_abs_diff_eq;
use caclab_core::agents::cfr::CfrSolver;
use caclab_core::game::{self, InfoKey};
use caclab_core::metrics::{
    best_response_action_values, best_response_on_tree, capacity_report, compute_cac, dea_floor, exploitability,
    exploitability_on_tree, greedy_actions, normalize, residual_decomposition, value_report,
};
use caclab_core::perturb::{MaskRule, Scope};
use caclab_core::policy::PolicyProfile;
use caclab_core::tree::{GameTree, Strategy};
use proptest::prelude::*;

const PASS: usize = 0;
const BET: usize = 1;

fn kuhn_rules(scope: Option<Scope>) -> Vec<MaskRule> {
    let g = game::by_name("kuhn").unwrap();
    scope
        .map(|s| vec![MaskRule::remove(g.spec(), 0, &["bet"], s).unwrap()])
        .unwrap_or_default()
}

/// The one-parameter family of Kuhn equilibria: P0 bluffs the jack with
/// probability `alpha` and bets the king with `3 alpha`.
fn kuhn_nash(alpha: f64) -> PolicyProfile {
    let mut p = PolicyProfile::new();
    let mut put = |player, card: &str, public: &str, bet: f64| {
        p.insert(InfoKey::new(player, card, public), vec![(PASS, 1.0 - bet), (BET, bet)]);
    };
    put(0, "J", "", alpha);
    put(0, "Q", "", 0.0);
    put(0, "K", "", 3.0 * alpha);
    put(0, "J", "pb", 0.0);
    put(0, "Q", "pb", alpha + 1.0 / 3.0);
    put(0, "K", "pb", 1.0);
    put(1, "J", "p", 1.0 / 3.0);
    put(1, "Q", "p", 0.0);
    put(1, "K", "p", 1.0);
    put(1, "J", "b", 0.0);
    put(1, "Q", "b", 1.0 / 3.0);
    put(1, "K", "b", 1.0);
    p
}

/// Best pure-strategy value of `responder` by enumerating every pure policy.
fn brute_force_br(tree: &GameTree, strategy: &Strategy, responder: usize) -> f64 {
    let mine: Vec<usize> = tree.player_infosets(responder).map(|(i, _)| i).collect();
    let sizes: Vec<usize> = mine.iter().map(|&i| tree.infosets[i].actions.len()).collect();
    let total: usize = sizes.iter().product();
    let mut best = f64::NEG_INFINITY;
    for mut code in 0..total {
        let mut s = strategy.clone();
        for (&i, &n) in mine.iter().zip(&sizes) {
            let mut d = vec![0.0; n];
            d[code % n] = 1.0;
            code /= n;
            s[i] = d;
        }
        best = best.max(tree.expected_utilities(&s)[responder]);
    }
    best
}

fn random_strategy(tree: &GameTree, weights: &[f64]) -> Strategy {
    let mut w = weights.iter().cycle();
    tree.infosets
        .iter()
        .map(|s| {
            let raw: Vec<f64> = s.actions.iter().map(|_| w.next().unwrap() + 1e-3).collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / t).collect()
        })
        .collect()
}

#[test]
fn kuhn_capacity_counts() {
    let g = game::by_name("kuhn").unwrap();
    let full = compute_cac(g.as_ref(), &[], 0).unwrap();
    assert_eq!((full.cac_decision_points, full.cac_raw_infosets), (2, 6));
    let root = compute_cac(g.as_ref(), &kuhn_rules(Some(Scope::RootOnly)), 0).unwrap();
    assert_eq!((root.cac_decision_points, root.cac_raw_infosets), (1, 3));
    let none = compute_cac(g.as_ref(), &kuhn_rules(Some(Scope::AllNodes)), 0).unwrap();
    assert_eq!((none.cac_decision_points, none.cac_raw_infosets), (0, 0));
    assert_eq!(compute_cac(g.as_ref(), &[], 1).unwrap().cac_decision_points, 2);
}

#[test]
fn weighted_capacity_under_equilibrium() {
    // Counterfactual reach of P0's pass-bet decision is P1's betting rate
    // after a pass: (1 + 1/3) / 3.
    let g = game::by_name("kuhn").unwrap();
    let nash = kuhn_nash(0.2);
    let w = |scope| capacity_report(g.as_ref(), &kuhn_rules(scope), &nash, 0).unwrap().cac_weighted.unwrap();
    assert_abs_diff_eq!(w(Some(Scope::AllNodes)), 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(w(Some(Scope::RootOnly)), 4.0 / 9.0, epsilon = 1e-12);
    assert_abs_diff_eq!(w(None), 1.0 + 4.0 / 9.0, epsilon = 1e-12);
}

#[test]
fn floor_examples() {
    let g = game::by_name("kuhn").unwrap();
    let zero = kuhn_rules(Some(Scope::AllNodes));
    assert_abs_diff_eq!(dea_floor(0.0, g.as_ref(), &zero).unwrap(), -1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(dea_floor(0.15, g.as_ref(), &zero).unwrap(), -0.925, epsilon = 1e-12);
    assert_abs_diff_eq!(dea_floor(0.30, g.as_ref(), &zero).unwrap(), -0.85, epsilon = 1e-12);
    assert!(dea_floor(0.15, g.as_ref(), &kuhn_rules(Some(Scope::RootOnly))).is_err());
    assert!(dea_floor(1.5, g.as_ref(), &zero).is_err());
}

#[test]
fn equilibrium_family_is_unexploitable() {
    let g = game::by_name("kuhn").unwrap();
    for alpha in [0.0, 0.1, 1.0 / 3.0] {
        let e = exploitability(g.as_ref(), &kuhn_nash(alpha)).unwrap();
        assert_abs_diff_eq!(e, 0.0, epsilon = 1e-9);
    }
    let tree = GameTree::build(g.as_ref(), &[]).unwrap();
    let v = tree.expected_utilities(&tree.strategy_from(&kuhn_nash(0.25)).unwrap());
    assert_abs_diff_eq!(v[0], -1.0 / 18.0, epsilon = 1e-12);
}

#[test]
fn uniform_exploitability_matches_oracle() {
    for name in ["kuhn", "matching_pennies"] {
        let tree = GameTree::build(game::by_name(name).unwrap().as_ref(), &[]).unwrap();
        let s = tree.uniform_strategy();
        let expected = (brute_force_br(&tree, &s, 0) + brute_force_br(&tree, &s, 1)) / 2.0;
        assert_abs_diff_eq!(exploitability_on_tree(&tree, &s), expected, epsilon = 1e-12);
    }
}

#[test]
fn cfr_converges_on_kuhn() {
    let g = game::by_name("kuhn").unwrap();
    let mut solver = CfrSolver::new(g.as_ref(), &[]).unwrap();
    let mut trace = Vec::new();
    for _ in 0..10 {
        solver.iterate(1_000);
        trace.push(solver.exploitability());
    }
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-4), "{trace:?}");
    assert!(trace[9] < 0.01);
    assert_abs_diff_eq!(solver.average_value(), -1.0 / 18.0, epsilon = 0.005);
}

#[test]
fn normalization_identities() {
    assert_abs_diff_eq!(normalize(-0.926, (-2.0, 2.0)).unwrap(), 0.2685, epsilon = 1e-12);
    assert_abs_diff_eq!(normalize(-0.851, (-1.0, 1.0)).unwrap(), 0.0745, epsilon = 1e-12);
    assert_eq!(normalize(-13.0, (-13.0, 13.0)).unwrap(), 0.0);
    assert_eq!(normalize(13.0, (-13.0, 13.0)).unwrap(), 1.0);
    assert!(normalize(2.5, (-2.0, 2.0)).is_err());
    assert!(normalize(0.0, (1.0, 1.0)).is_err());
    // Table rows rounded to two places.
    for (r, b, shown) in [(-0.065, 2.0, 0.48), (-0.034, 2.0, 0.49), (-0.252, 13.0, 0.49), (-0.185, 13.0, 0.49), (-0.524, 1.0, 0.24)] {
        let n = normalize(r, (-b, b)).unwrap();
        assert!((n - shown).abs() <= 0.005 + 1e-12, "{r}: {n}");
    }
}

#[test]
fn residual_point_bounds_value() {
    // With one retained decision P0 does at least as well as the mixture of
    // optimal play there and forced play elsewhere, and never worse than
    // fully forced play.
    let g = game::by_name("kuhn").unwrap();
    let zero = kuhn_rules(Some(Scope::AllNodes));
    let root = kuhn_rules(Some(Scope::RootOnly));
    for alpha in [0.0, 0.2] {
        let opponent = kuhn_nash(alpha);
        let residual = GameTree::build(g.as_ref(), &root).unwrap();
        let d = residual_decomposition(&residual, &opponent, "P0|pb").unwrap();
        let mixture = d.reach * d.value_at_point + (1.0 - d.reach) * d.value_elsewhere;
        assert!(d.total >= mixture - 1e-12);
        assert_abs_diff_eq!(d.total, mixture, epsilon = 1e-12);
        let report = value_report(g.as_ref(), &zero, &root, &opponent, "P0|pb", 0.15).unwrap();
        let forced_tree = GameTree::build(g.as_ref(), &zero).unwrap();
        let forced = forced_tree.expected_utilities(&forced_tree.strategy_from(&opponent).unwrap())[0];
        assert!(report.player_value >= forced - 1e-12);
        assert!(report.improvement_bound >= -1e-12);
        assert_abs_diff_eq!(report.player_value - forced, report.improvement_bound, epsilon = 1e-12);
        assert_abs_diff_eq!(report.br_value, 1.0, epsilon = 1e-12);
    }
}

#[test]
fn best_response_values_are_consistent() {
    let g = game::by_name("kuhn").unwrap();
    let tree = GameTree::build(g.as_ref(), &[]).unwrap();
    let s = tree.strategy_from(&kuhn_nash(0.1)).unwrap();
    let values = best_response_action_values(&tree, &s, 1);
    let (best, _) = best_response_on_tree(&tree, &s, 1);
    for (i, v) in values.iter().enumerate() {
        match (v, best[i]) {
            (Some(q), Some(b)) => {
                let top = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(q[b] >= top - 1e-12);
            }
            (None, _) => assert!(tree.infosets[i].player == 0 || best[i].is_some()),
            (Some(_), None) => panic!("values at a non-responder infoset"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn best_response_matches_enumeration(
        weights in prop::collection::vec(0.0f64..1.0, 12),
        which in 0..2usize,
        responder in 0..2usize,
    ) {
        let name = ["kuhn", "matching_pennies"][which];
        let tree = GameTree::build(game::by_name(name).unwrap().as_ref(), &[]).unwrap();
        let s = random_strategy(&tree, &weights);
        let (best, value) = best_response_on_tree(&tree, &s, responder);
        prop_assert!((value - brute_force_br(&tree, &s, responder)).abs() < 1e-9);
        let mut pure = s.clone();
        for (i, b) in best.iter().enumerate() {
            if let Some(b) = b {
                pure[i] = vec![0.0; pure[i].len()];
                pure[i][*b] = 1.0;
            }
        }
        prop_assert!((tree.expected_utilities(&pure)[responder] - value).abs() < 1e-9);
        prop_assert!(exploitability_on_tree(&tree, &s) >= -1e-12);
    }

    #[test]
    fn weighted_capacity_never_exceeds_count(weights in prop::collection::vec(0.0f64..1.0, 12), scope in 0..3usize) {
        let g = game::by_name("kuhn").unwrap();
        let rules = kuhn_rules([None, Some(Scope::RootOnly), Some(Scope::AllNodes)][scope].clone());
        let tree = GameTree::build(g.as_ref(), &rules).unwrap();
        let profile = tree.profile(&random_strategy(&tree, &weights));
        for player in 0..2 {
            let r = capacity_report(g.as_ref(), &rules, &profile, player).unwrap();
            prop_assert!(r.cac_weighted.unwrap() <= r.cac_decision_points as f64 + 1e-12);
            prop_assert!(r.cac_weighted.unwrap() >= 0.0);
        }
    }

    #[test]
    fn normalize_is_increasing(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (na, nb) = (normalize(a, (-2.0, 2.0)).unwrap(), normalize(b, (-2.0, 2.0)).unwrap());
        prop_assert!((0.0..=1.0).contains(&na));
        if a < b {
            prop_assert!(na < nb);
        }
    }
}

#[test]
fn greedy_matches_argmax() {
    let tree = GameTree::build(game::by_name("kuhn").unwrap().as_ref(), &[]).unwrap();
    let s = tree.strategy_from(&kuhn_nash(0.1)).unwrap();
    let g = greedy_actions(&tree, &s);
    let k = tree.infoset_index(&InfoKey::new(1, "K", "p")).unwrap();
    assert_eq!(tree.infosets[k].actions[g[k]], BET);
    let q = tree.infoset_index(&InfoKey::new(0, "Q", "")).unwrap();
    assert_eq!(tree.infosets[q].actions[g[q]], PASS);
}
