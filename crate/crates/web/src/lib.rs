//! Browser bindings. Every export takes plain values and returns a JSON
//! string so the page needs no glue beyond `JSON.parse`.

use caclab_core::agents::cfr::CfrSolver;
use caclab_core::agents::{AgentConfig, Algorithm};
use caclab_core::game;
use caclab_core::metrics::{compute_cac, dea_floor};
use caclab_core::perturb::{MaskRule, Schedule, Scope};
use caclab_core::selfplay::{run_match, MatchConfig, Phase, RunSeed};
use serde_json::json;
use wasm_bindgen::prelude::*;

type Outcome<T> = Result<T, String>;

fn js(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// P0 loses `action` at every decision or only at its opening one. An empty
/// action means no perturbation.
fn rules(game_name: &str, action: &str, scope: &str) -> Outcome<Vec<MaskRule>> {
    if action.is_empty() {
        return Ok(Vec::new());
    }
    let g = game::by_name(game_name).map_err(js)?;
    let scope = match scope {
        "root" => Scope::RootOnly,
        _ => Scope::AllNodes,
    };
    Ok(vec![MaskRule::remove(g.spec(), 0, &[action], scope).map_err(js)?])
}

/// Capacity counts and the ε-floor of a perturbation.
#[wasm_bindgen(js_name = capacity)]
pub fn capacity_js(game_name: &str, action: &str, scope: &str, epsilon: f64) -> Result<String, JsValue> {
    capacity(game_name, action, scope, epsilon).map_err(|e| JsValue::from_str(&e))
}

pub fn capacity(game_name: &str, action: &str, scope: &str, epsilon: f64) -> Outcome<String> {
    let g = game::by_name(game_name).map_err(js)?;
    let rules = rules(game_name, action, scope)?;
    let report = compute_cac(g.as_ref(), &rules, 0).map_err(js)?;
    // The floor is only defined once no contingency is left.
    let floor = dea_floor(epsilon, g.as_ref(), &rules).ok();
    Ok(json!({
        "decision_points": report.cac_decision_points,
        "infosets": report.cac_raw_infosets,
        "floor": floor,
        "points": report
            .per_point_detail
            .iter()
            .filter(|(_, d)| d.retained_actions >= 2)
            .map(|(k, _)| k)
            .collect::<Vec<_>>(),
    })
    .to_string())
}

/// One seed of shared Q-learning self-play with the mask switched on halfway.
#[wasm_bindgen(js_name = selfplay)]
pub fn selfplay_js(game_name: &str, action: &str, scope: &str, episodes: usize, seed: u64) -> Result<String, JsValue> {
    selfplay(game_name, action, scope, episodes, seed).map_err(|e| JsValue::from_str(&e))
}

pub fn selfplay(game_name: &str, action: &str, scope: &str, episodes: usize, seed: u64) -> Outcome<String> {
    if episodes < 200 {
        return Err(js("need at least 200 episodes"));
    }
    let mut config = MatchConfig::new(game_name, AgentConfig::new(Algorithm::QLearning));
    config.rules = rules(game_name, action, scope)?;
    config.schedule = Schedule::at(episodes / 2);
    config.episodes = episodes;
    config.window = (episodes / 4).max(1);
    config.seeds = vec![RunSeed::from(seed)];
    let result = run_match(&config).map_err(js)?;
    let window = (episodes / 100).max(1);
    let trace: Vec<f64> = result.runs[0]
        .records
        .chunks(window)
        .map(|c| c.iter().map(|r| r.reward_p0).sum::<f64>() / c.len() as f64)
        .collect();
    Ok(json!({
        "pre": result.mean(Phase::Pre),
        "post": result.mean(Phase::Post),
        "activate_at": episodes / 2,
        "window": window,
        "trace": trace,
    })
    .to_string())
}

/// CFR on the unperturbed game: P0 value and exploitability of the average.
#[wasm_bindgen(js_name = solve)]
pub fn solve_js(game_name: &str, iterations: usize) -> Result<String, JsValue> {
    solve(game_name, iterations).map_err(|e| JsValue::from_str(&e))
}

pub fn solve(game_name: &str, iterations: usize) -> Outcome<String> {
    let g = game::by_name(game_name).map_err(js)?;
    let mut solver = CfrSolver::new(g.as_ref(), &[]).map_err(js)?;
    solver.iterate(iterations);
    Ok(json!({
        "value": solver.average_value(),
        "exploitability": solver.exploitability(),
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kuhn_capacity() {
        let v: serde_json::Value = serde_json::from_str(&capacity("kuhn", "bet", "all", 0.15).unwrap()).unwrap();
        assert_eq!(v["decision_points"], 0);
        let v: serde_json::Value = serde_json::from_str(&capacity("kuhn", "bet", "root", 0.15).unwrap()).unwrap();
        assert_eq!(v["decision_points"], 1);
    }

    #[test]
    fn short_selfplay() {
        let v: serde_json::Value = serde_json::from_str(&selfplay("kuhn", "bet", "all", 1000, 0).unwrap()).unwrap();
        assert_eq!(v["trace"].as_array().unwrap().len(), 100);
        assert!(v["post"].as_f64().unwrap() < v["pre"].as_f64().unwrap());
    }

    #[test]
    fn kuhn_solve() {
        let v: serde_json::Value = serde_json::from_str(&solve("kuhn", 2000).unwrap()).unwrap();
        assert!((v["value"].as_f64().unwrap() + 1.0 / 18.0).abs() < 0.01);
    }
}
