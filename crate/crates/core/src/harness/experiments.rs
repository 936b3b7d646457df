use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{expect, near, Basis, Check, Condition, ExperimentDef, Expectation, Overrides, RunOutput};
use crate::agents::psro::{psro_run, PsroConfig};
use crate::agents::{cfr::CfrSolver, AgentConfig, Algorithm, DqnConfig};
use crate::error::{Error, Result};
use crate::game::{self, Game};
use crate::metrics::{capacity_report, compute_cac, dea_floor, exploitability, normalize};
use crate::perturb::{ForceRule, MaskRule, Schedule, Scope};
use crate::policy::PolicyProfile;
use crate::selfplay::{run_match, MatchConfig, MatchResult, Phase, RunSeed, Sharing};
use crate::stats::{paired_t, variance_decomposition, PhaseSummary};

const EPISODES: usize = 20_000;
const DQN_EPISODES: usize = 50_000;
const CFR_ITERATIONS: usize = 10_000;
const LIARS_DICE_CFR_ITERATIONS: usize = 2_000;
const WINDOW: usize = 2_000;

/// Resolved seed count, run length and window for one experiment.
struct Setup {
    seeds: usize,
    episodes: usize,
    default_episodes: usize,
    activate: Option<usize>,
    window: usize,
}

impl Setup {
    fn new(o: &Overrides, seeds: usize, episodes: usize) -> Self {
        Self::with_key(o, seeds, episodes, "episodes")
    }

    fn dqn(o: &Overrides, seeds: usize) -> Self {
        Self::with_key(o, seeds, DQN_EPISODES, "dqn_episodes")
    }

    fn with_key(o: &Overrides, seeds: usize, episodes: usize, key: &str) -> Self {
        Self {
            seeds: o.count("seeds").unwrap_or(seeds),
            episodes: o.count(key).unwrap_or(episodes),
            default_episodes: episodes,
            activate: o.count("activate_at"),
            window: o.count("window").unwrap_or(WINDOW),
        }
    }

    /// A default episode index rescaled to the configured run length.
    fn at(&self, episode: usize) -> usize {
        (episode as u128 * self.episodes as u128 / self.default_episodes as u128) as usize
    }

    fn config(&self, game: &str, agent: AgentConfig, rules: Vec<MaskRule>, activate: usize) -> Result<MatchConfig> {
        let activate = self.activate.unwrap_or(self.at(activate));
        self.config_at(game, agent, rules, Schedule::at(activate))
    }

    fn config_at(&self, game: &str, agent: AgentConfig, rules: Vec<MaskRule>, schedule: Schedule) -> Result<MatchConfig> {
        if schedule.activate_at == 0 || schedule.activate_at >= self.episodes {
            return Err(Error::InvalidOverride(format!(
                "activation at {} outside a run of {} episodes",
                schedule.activate_at, self.episodes
            )));
        }
        let mut c = MatchConfig::new(game, agent).seeds(self.seeds);
        c.rules = rules;
        c.schedule = schedule;
        c.episodes = self.episodes;
        c.window = self.window;
        Ok(c)
    }
}

fn agent(o: &Overrides, algorithm: Algorithm) -> AgentConfig {
    let mut a = AgentConfig::new(algorithm);
    a.alpha = o.real("alpha").unwrap_or(a.alpha);
    a.epsilon = o.real("epsilon").unwrap_or(a.epsilon);
    a.tau = o.real("tau").unwrap_or(a.tau);
    a.lr = o.real("lr").unwrap_or(a.lr);
    a.eta = o.real("eta").unwrap_or(a.eta);
    a
}

fn ql(o: &Overrides) -> AgentConfig {
    agent(o, Algorithm::QLearning)
}

fn spec_of(name: &str) -> Result<game::GameSpec> {
    Ok(game::by_name(name)?.spec().clone())
}

/// Kuhn perturbations by remaining capacity: 0 removes bet everywhere,
/// 1 removes it at the root only, 2 is the unperturbed control.
fn kuhn_rules(capacity: usize) -> Result<Vec<MaskRule>> {
    let spec = spec_of("kuhn")?;
    Ok(match capacity {
        0 => vec![MaskRule::remove(&spec, 0, &["bet"], Scope::AllNodes)?],
        1 => vec![MaskRule::remove(&spec, 0, &["bet"], Scope::RootOnly)?],
        _ => Vec::new(),
    })
}

fn nash_profile(name: &str, iterations: usize) -> Result<PolicyProfile> {
    let g = game::by_name(name)?;
    crate::agents::cfr::cfr_solve(g.as_ref(), iterations)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn bounds(name: &str) -> Result<(f64, f64)> {
    Ok(spec_of(name)?.reward_bounds)
}

impl RunOutput {
    /// Runs a match, stores it under `label` and records `{label}_pre`,
    /// `{label}_post` (and `_restored`) plus the paired test of post
    /// against pre.
    fn record(&mut self, label: &str, config: &MatchConfig) -> Result<&MatchResult> {
        let result = run_match(config)?;
        let pre = result.phase_means(Phase::Pre);
        let post = result.phase_means(Phase::Post);
        self.set(format!("{label}_pre"), mean(&pre));
        self.set(format!("{label}_post"), mean(&post));
        if result.runs.first().is_some_and(|r| r.phase_means.contains_key(&Phase::Restored)) {
            self.set(format!("{label}_restored"), result.mean(Phase::Restored));
        }
        if pre.len() >= 2 {
            let summary = PhaseSummary::new(label, &pre, &post, self.summaries.len() as u64)?;
            self.set(format!("{label}_p"), summary.test.p_value);
            self.set(format!("{label}_d"), summary.test.cohens_d);
            self.summaries.push(summary);
        }
        self.conditions.push(Condition {
            label: label.to_string(),
            result,
        });
        Ok(&self.conditions.last().expect("just pushed").result)
    }

    fn record_normalized(&mut self, label: &str, game: &str) -> Result<()> {
        let post = self.metric(&format!("{label}_post")).ok_or_else(|| Error::MissingKey(label.into()))?;
        self.set(format!("{label}_post_norm"), normalize(post, bounds(game)?)?);
        Ok(())
    }
}

pub(super) fn definitions() -> Vec<ExperimentDef> {
    use Basis::*;
    vec![
        ExperimentDef {
            id: "kuhn_zero_contingency",
            summary: "Kuhn, bet removed from P0 everywhere: shared QL self-play and a frozen CFR profile",
            covers: &["zero-contingency collapse", "variance decomposition"],
            expectations: vec![
                near("ql_post", -0.926, 0.02),
                near("ql_post_norm", 0.27, 0.02),
                expect("ql_p", Check::AtMost(1e-4), Measured),
                near("cfr_post", -0.221, 0.03),
                expect("cfr_post", Check::Near { target: -2.0 / 9.0, tolerance: 0.03 }, Derived),
                expect("median_episodes_to_dea", Check::AtMost(10.0), Measured),
                expect("ql_post", Check::Near { target: -0.925, tolerance: 0.02 }, Derived),
                expect("v_total", Check::AtMost(1e-4), Measured),
            ],
            runner: kuhn_zero_contingency,
        },
        ExperimentDef {
            id: "cac_sweep",
            summary: "Kuhn capacity 0, 1, 2: QL and frozen CFR, with exact and reach-weighted capacity",
            covers: &["capacity threshold", "residual contingency", "weighted capacity"],
            expectations: vec![
                expect("cac_0", Check::Near { target: 0.0, tolerance: 0.0 }, Derived),
                expect("cac_1", Check::Near { target: 1.0, tolerance: 0.0 }, Derived),
                expect("cac_2", Check::Near { target: 2.0, tolerance: 0.0 }, Derived),
                near("ql_cac0_post", -0.926, 0.03),
                near("ql_cac1_post", -0.065, 0.03),
                near("ql_cac2_post", -0.034, 0.03),
                near("cfr_cac0_post", -0.221, 0.03),
                near("cfr_cac1_post", -0.053, 0.03),
                near("cfr_cac2_post", -0.053, 0.03),
                expect("jump_0_1", Check::AtLeast(0.8), Measured),
                expect("jump_1_2", Check::AtMost(0.05), Measured),
                near("ql_cac0_post_norm", 0.27, 0.02),
                near("ql_cac1_post_norm", 0.48, 0.02),
                near("ql_cac2_post_norm", 0.49, 0.02),
                near("cac_w_nash_0", 0.0, 0.02),
                near("cac_w_nash_1", 0.473, 0.02),
                near("cac_w_nash_2", 1.473, 0.02),
            ],
            runner: cac_sweep,
        },
        ExperimentDef {
            id: "frozen_baseline",
            summary: "QL frozen when the mask activates: the constraint alone without co-adaptation",
            covers: &["frozen baseline"],
            expectations: vec![
                near("frozen_post", -0.141, 0.05),
                expect("frozen_post", Check::AtLeast(-0.9), Band),
            ],
            runner: frozen_baseline,
        },
        ExperimentDef {
            id: "fixed_opponent",
            summary: "QL P0 against a fixed CFR opponent under zero contingency",
            covers: &["fixed opponent", "fixed-opponent calibration"],
            expectations: vec![
                near("fixed_post", -0.228, 0.03),
                expect("fixed_post", Check::AtLeast(-0.9), Band),
                expect("fixed_exact", Check::Near { target: -2.0 / 9.0, tolerance: 0.005 }, Derived),
                expect("br_value", Check::Near { target: -1.0, tolerance: 1e-9 }, Derived),
            ],
            runner: fixed_opponent,
        },
        ExperimentDef {
            id: "psro",
            summary: "Population training for P1 under zero contingency, population sizes 1, 3, 5, 15",
            covers: &["population training"],
            expectations: vec![
                near("psro_pop5_post", -0.418, 0.10),
                expect("psro_pop5_post", Check::AtLeast(-0.9), Band),
                near("psro_pop5_pre", -0.05, 0.05),
                expect("psro_pop1_post", Check::AtMost(-0.8), Derived),
                near("psro_pop3_post", -0.275, 0.10),
                near("psro_pop15_post", -0.598, 0.10),
            ],
            runner: psro,
        },
        ExperimentDef {
            id: "algo_invariance",
            summary: "QL, SARSA, REINFORCE, PPO, NFSP and DQN under zero contingency",
            covers: &["algorithm invariance", "tabular ppo", "neural analysis", "neural hyperparameters"],
            expectations: vec![
                near("ql_post", -0.927, 0.03),
                near("sarsa_post", -0.927, 0.03),
                near("reinforce_post", -0.500, 0.05),
                near("ppo_post", -0.500, 0.05),
                near("nfsp_post", -0.505, 0.05),
                expect("dqn_post", Check::AtMost(-0.95), Measured),
                expect("dqn_final_entropy", Check::AtMost(0.05), Derived),
            ],
            runner: algo_invariance,
        },
        ExperimentDef {
            id: "cross_game",
            summary: "Collapse severity across Matching Pennies, Kuhn, Leduc and Leduc-4, plus solver values",
            covers: &["cross-game severity", "solver values"],
            expectations: vec![
                near("matching_pennies_post", -0.851, 0.03),
                near("matching_pennies_post_norm", 0.07, 0.02),
                near("kuhn_post", -0.926, 0.03),
                near("leduc_post", -0.252, 0.05),
                near("leduc_post_norm", 0.49, 0.02),
                near("leduc4_post", -0.185, 0.05),
                near("leduc4_post_norm", 0.49, 0.02),
                near("cfr_value_kuhn", -0.056, 0.005),
                near("cfr_value_leduc", -0.087, 0.005),
                near("cfr_value_liars_dice_1d", -0.076, 0.01),
                expect("cfr_exploitability_kuhn", Check::AtMost(0.01), Measured),
            ],
            runner: cross_game,
        },
        ExperimentDef {
            id: "ipd_boundary",
            summary: "Iterated Prisoner's Dilemma with cooperate removed from P0",
            covers: &["boundary games"],
            expectations: vec![expect("ipd_post", Check::AtLeast(0.0), Band)],
            runner: ipd_boundary,
        },
        ExperimentDef {
            id: "liars_dice_boundary",
            summary: "Liar's Dice 1d: challenge-only versus deterministic lowest action; 2d DQN with long=true",
            covers: &["boundary games", "cross-game severity"],
            expectations: vec![
                expect("challenge_only_post", Check::Between(-0.1, 0.1), Band),
                near("lowest_post", -0.524, 0.05),
                near("lowest_post_norm", 0.24, 0.02),
                expect("lowest_p", Check::AtMost(1e-4), Measured),
                Expectation {
                    optional: true,
                    ..expect("dice2_challenge_only_post", Check::Between(-0.1, 0.1), Band)
                },
            ],
            runner: liars_dice_boundary,
        },
        ExperimentDef {
            id: "coordination",
            summary: "Cooperative coordination game with P0 forced to one action",
            covers: &["boundary games", "cross-game severity"],
            expectations: vec![
                expect("coordination_p", Check::AtMost(0.01), Measured),
                expect("coordination_delta", Check::AtMost(0.0), Band),
                expect("coordination_post", Check::AtLeast(0.0), Band),
            ],
            runner: coordination,
        },
        ExperimentDef {
            id: "negotiation",
            summary: "Ultimatum negotiation: P0 forced to one offer versus keeping offers 0 to 2",
            covers: &["boundary games"],
            expectations: vec![
                expect("forced_delta", Check::AtMost(0.0), Band),
                expect("cac3_gap", Check::AtLeast(-0.5), Band),
                expect("cac_cac3", Check::Near { target: 3.0, tolerance: 0.0 }, Derived),
            ],
            runner: negotiation,
        },
        ExperimentDef {
            id: "timing_sweep",
            summary: "Activation at episodes 3k, 10k and 17k for capacity 0 and 1",
            covers: &["timing sweep"],
            expectations: vec![
                near("severe_early_post", -0.926, 0.03),
                near("severe_mid_post", -0.927, 0.03),
                near("severe_late_post", -0.925, 0.03),
                near("mild_early_post", -0.063, 0.03),
                near("mild_mid_post", -0.073, 0.03),
                near("mild_late_post", -0.061, 0.03),
                expect("severe_spread", Check::AtMost(0.01), Measured),
            ],
            runner: timing_sweep,
        },
        ExperimentDef {
            id: "recovery",
            summary: "Mask on at 10k and off at 15k in a 25k run",
            covers: &["recovery"],
            expectations: vec![
                near("recovery_pre", -0.035, 0.03),
                near("recovery_post", -0.927, 0.03),
                near("recovery_restored", -0.025, 0.03),
                expect("median_episodes_to_recover", Check::AtMost(10.0), Measured),
            ],
            runner: recovery,
        },
        ExperimentDef {
            id: "stochastic_masking",
            summary: "Root-only removal applied with probability 0.5 per episode",
            covers: &["stochastic masking"],
            expectations: vec![
                near("stochastic_post", -0.049, 0.03),
                expect("stochastic_post", Check::AtLeast(-0.1), Band),
            ],
            runner: stochastic_masking,
        },
        ExperimentDef {
            id: "hyperparam_grid",
            summary: "Zero contingency over epsilon in {0.05, 0.15, 0.3} and alpha in {0.01, 0.1, 0.3}",
            covers: &["hyperparameter grid", "fixed-opponent calibration"],
            expectations: hyperparam_expectations(),
            runner: hyperparam_grid,
        },
        ExperimentDef {
            id: "entropy_reg",
            summary: "Entropy-regularised QL, tau in {0, 0.05, 0.1, 0.2}, under zero contingency",
            covers: &["entropy regularisation"],
            expectations: vec![
                near("tau0_post", -0.927, 0.03),
                near("tau0.05_post", -0.925, 0.03),
                near("tau0.1_post", -0.923, 0.03),
                near("tau0.2_post", -0.926, 0.03),
                expect("max_gap_to_baseline", Check::AtMost(0.01), Measured),
            ],
            runner: entropy_reg,
        },
        ExperimentDef {
            id: "reach_sensitivity",
            summary: "Root-only removal over epsilon: measured reach of the retained node and post value",
            covers: &["reach sensitivity", "weighted capacity"],
            expectations: reach_expectations(),
            runner: reach_sensitivity,
        },
        ExperimentDef {
            id: "separate_selfplay",
            summary: "Shared versus separate Q-tables under zero contingency",
            covers: &["separate tables"],
            expectations: vec![
                near("separate_post", -0.926, 0.03),
                near("shared_post", -0.927, 0.03),
                expect("shared_separate_gap", Check::AtMost(0.01), Measured),
            ],
            runner: separate_selfplay,
        },
        ExperimentDef {
            id: "exploitability_trace",
            summary: "Exact exploitability over training in Kuhn and Leduc, and the CFR trace",
            covers: &["exploitability trajectory"],
            expectations: vec![
                expect("kuhn_exploitability_rise", Check::AtLeast(0.0), Band),
                expect("leduc_exploitability_rise", Check::AtLeast(0.0), Band),
                expect("cfr_kuhn_exploitability", Check::AtMost(0.01), Derived),
                expect("cfr_trace_drop", Check::AtLeast(0.0), Derived),
            ],
            runner: exploitability_trace,
        },
        ExperimentDef {
            id: "dqn_fixed_eps",
            summary: "DQN with exploration fixed at 0.15 under zero contingency",
            covers: &["algorithm invariance", "neural analysis"],
            expectations: vec![near("dqn_fixed_post", -0.923, 0.03)],
            runner: dqn_fixed_eps,
        },
    ]
}

const GRID_EPSILONS: [(f64, f64); 3] = [(0.05, -0.975), (0.15, -0.926), (0.30, -0.851)];
const GRID_ALPHAS: [f64; 3] = [0.01, 0.1, 0.3];
const REACH_ROWS: [(f64, f64); 4] = [(0.05, 0.464), (0.15, 0.469), (0.30, 0.486), (0.50, 0.517)];

fn hyperparam_expectations() -> Vec<Expectation> {
    let mut out = Vec::new();
    for (eps, target) in GRID_EPSILONS {
        for alpha in GRID_ALPHAS {
            out.push(near(&format!("eps{eps}_alpha{alpha}_post"), target, 0.02));
        }
        out.push(expect(&format!("eps{eps}_alpha_spread"), Check::AtMost(0.01), Basis::Measured));
        out.push(expect(&format!("eps{eps}_floor_gap"), Check::AtMost(0.02), Basis::Derived));
        out.push(expect(
            &format!("eps{eps}_dea_floor"),
            Check::Near {
                target: -1.0 + eps / 2.0,
                tolerance: 1e-9,
            },
            Basis::Derived,
        ));
    }
    out
}

fn reach_expectations() -> Vec<Expectation> {
    let mut out = Vec::new();
    for (eps, reach) in REACH_ROWS {
        out.push(expect(&format!("eps{eps}_post"), Check::Between(-0.15, 0.0), Basis::Measured));
        out.push(near(&format!("eps{eps}_reach"), reach, 0.03));
    }
    out
}

fn grid_seeds(n: usize, per_chance: usize) -> Vec<RunSeed> {
    (0..n)
        .map(|i| RunSeed {
            policy: i as u64,
            chance: (i / per_chance) as u64,
        })
        .collect()
}

/// Mean reward of the last `window` post-phase episodes, per seed.
fn post_window_means(result: &MatchResult, config: &MatchConfig, window: usize) -> Vec<f64> {
    let end = config.schedule.deactivate_at.unwrap_or(config.episodes).min(config.episodes);
    let start = end.saturating_sub(window).max(config.schedule.activate_at);
    result
        .runs
        .iter()
        .map(|r| r.records[start..end].iter().map(|x| x.reward_p0).sum::<f64>() / (end - start) as f64)
        .collect()
}

fn kuhn_zero_contingency(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("kuhn_zero_contingency");
    let setup = Setup::new(o, 20, EPISODES);
    let mut ql_config = setup.config("kuhn", ql(o), kuhn_rules(0)?, 10_000)?;
    ql_config.seeds = grid_seeds(setup.seeds, 4);
    ql_config.track_dea = true;
    let result = out.record("ql", &ql_config)?;
    let steps: Vec<f64> = result
        .runs
        .iter()
        .map(|r| r.episodes_to_dea.map_or(f64::INFINITY, |n| n as f64))
        .collect();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &result.runs {
        groups.entry(r.seed.chance.to_string()).or_default().push(r.mean(Phase::Post));
    }
    let windows: Vec<(usize, f64)> = [1_000, 5_000]
        .into_iter()
        .map(|w| (w, mean(&post_window_means(result, &ql_config, w))))
        .collect();
    out.set("median_episodes_to_dea", median(steps.clone()));
    let reached: Vec<f64> = steps.iter().copied().filter(|s| s.is_finite()).collect();
    if !reached.is_empty() {
        out.set("mean_episodes_to_dea", mean(&reached));
    }
    out.set("dea_not_reached", (steps.len() - reached.len()) as f64);
    for (w, m) in windows {
        out.set(format!("ql_post_window{w}"), m);
    }
    if let Ok(v) = variance_decomposition(&groups) {
        out.set("v_total", v.v_total);
        out.set("v_env", v.v_env);
        out.set("v_policy", v.v_policy);
    } else {
        out.notes.push("variance decomposition needs at least two seeds per chance seed".into());
    }
    let g = game::by_name("kuhn")?;
    out.set("dea_floor", dea_floor(ql_config.agent.epsilon, g.as_ref(), &ql_config.rules)?);
    out.record_normalized("ql", "kuhn")?;

    let nash = nash_profile("kuhn", o.count("cfr_iterations").unwrap_or(CFR_ITERATIONS))?;
    let mut cfr_config = setup.config("kuhn", ql(o), kuhn_rules(0)?, 10_000)?;
    cfr_config.sharing = Sharing::FixedProfile(nash);
    out.record("cfr", &cfr_config)?;
    Ok(out)
}

fn cac_sweep(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("cac_sweep");
    let setup = Setup::new(o, 20, EPISODES);
    let g = game::by_name("kuhn")?;
    let nash = nash_profile("kuhn", o.count("cfr_iterations").unwrap_or(CFR_ITERATIONS))?;
    for level in 0..3 {
        let rules = kuhn_rules(level)?;
        out.set(format!("cac_{level}"), compute_cac(g.as_ref(), &rules, 0)?.cac_decision_points as f64);
        let nash_report = capacity_report(g.as_ref(), &rules, &nash, 0)?;
        out.set(format!("cac_w_nash_{level}"), nash_report.cac_weighted.unwrap_or(0.0));

        let mut c = setup.config("kuhn", ql(o), rules.clone(), 10_000)?;
        c.capture_profile = true;
        let label = format!("ql_cac{level}");
        let result = out.record(&label, &c)?;
        let weighted = result
            .runs
            .iter()
            .map(|r| {
                let profile = r.final_profile.as_ref().ok_or_else(|| Error::MissingKey("final profile".into()))?;
                Ok(capacity_report(g.as_ref(), &rules, profile, 0)?.cac_weighted.unwrap_or(0.0))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.set(format!("cac_w_{level}"), mean(&weighted));
        out.record_normalized(&label, "kuhn")?;

        let mut f = setup.config("kuhn", ql(o), rules, 10_000)?;
        f.sharing = Sharing::FixedProfile(nash.clone());
        out.record(&format!("cfr_cac{level}"), &f)?;
    }
    let post = |out: &RunOutput, l: usize| out.metric(&format!("ql_cac{l}_post")).unwrap_or(f64::NAN);
    out.set("jump_0_1", post(&out, 1) - post(&out, 0));
    out.set("jump_1_2", (post(&out, 2) - post(&out, 1)).abs());
    Ok(out)
}

fn frozen_baseline(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("frozen_baseline");
    let setup = Setup::new(o, 5, EPISODES);
    let mut c = setup.config("kuhn", ql(o), kuhn_rules(0)?, 10_000)?;
    c.freeze_at_activation = true;
    out.record("frozen", &c)?;
    Ok(out)
}

fn fixed_opponent(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("fixed_opponent");
    let setup = Setup::new(o, 5, EPISODES);
    let nash = nash_profile("kuhn", o.count("cfr_iterations").unwrap_or(CFR_ITERATIONS))?;
    let rules = kuhn_rules(0)?;
    let g = game::by_name("kuhn")?;
    let tree = crate::tree::GameTree::build(g.as_ref(), &rules)?;
    let strategy = tree.strategy_from(&nash)?;
    out.set("fixed_exact", tree.expected_utilities(&strategy)[0]);
    let (_, br) = crate::metrics::best_response_on_tree(&tree, &tree.uniform_strategy(), 1);
    out.set("br_value", -br);
    let mut c = setup.config("kuhn", ql(o), rules, 10_000)?;
    c.sharing = Sharing::FixedOpponent(nash);
    out.record("fixed", &c)?;
    Ok(out)
}

fn psro(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("psro");
    let setup = Setup::new(o, 5, EPISODES);
    let rules = kuhn_rules(0)?;
    let a = ql(o);
    for size in [1, 3, 5, 15] {
        let activate = setup.activate.unwrap_or(setup.at(10_000));
        let config = PsroConfig {
            population_size: size,
            oracle_every: (setup.episodes / size).min(PsroConfig::default().oracle_episodes),
            episodes: setup.episodes,
            activate_at: activate,
            window: setup.window,
            alpha: a.alpha,
            epsilon: a.epsilon,
            ..PsroConfig::default()
        };
        let runs = (0..setup.seeds as u64)
            .map(|s| psro_run("kuhn", &rules, &config, RunSeed::from(s)))
            .collect::<Result<Vec<_>>>()?;
        let pre: Vec<f64> = runs.iter().map(|r| r.pre_mean).collect();
        let post: Vec<f64> = runs.iter().map(|r| r.post_mean).collect();
        out.set(format!("psro_pop{size}_pre"), mean(&pre));
        out.set(format!("psro_pop{size}_post"), mean(&post));
        if pre.len() >= 2 {
            let s = PhaseSummary::new(&format!("psro_pop{size}"), &pre, &post, size as u64)?;
            out.set(format!("psro_pop{size}_p"), s.test.p_value);
            out.summaries.push(s);
        }
    }
    Ok(out)
}

/// Mean entropy of the final `window` post-phase episodes, over seeds.
fn final_entropy(result: &MatchResult, config: &MatchConfig, window: usize) -> Option<f64> {
    let end = config.episodes;
    let values: Vec<f64> = result
        .runs
        .iter()
        .flat_map(|r| r.records[end.saturating_sub(window)..end].iter().filter_map(|x| x.entropy))
        .collect();
    (!values.is_empty()).then(|| mean(&values))
}

fn algo_invariance(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("algo_invariance");
    let setup = Setup::new(o, 5, EPISODES);
    let tabular = [
        ("ql", Algorithm::QLearning),
        ("sarsa", Algorithm::Sarsa),
        ("reinforce", Algorithm::Reinforce),
        ("ppo", Algorithm::Ppo),
        ("nfsp", Algorithm::Nfsp),
    ];
    for (label, alg) in tabular {
        let c = setup.config("kuhn", agent(o, alg), kuhn_rules(0)?, 10_000)?;
        out.record(label, &c)?;
    }
    let dqn_setup = Setup::dqn(o, 5);
    let c = dqn_setup.config("kuhn", agent(o, Algorithm::Dqn), kuhn_rules(0)?, DQN_EPISODES / 2)?;
    let result = out.record("dqn", &c)?;
    if let Some(h) = final_entropy(result, &c, 200) {
        out.set("dqn_final_entropy", h);
    }
    Ok(out)
}

fn dqn_fixed_eps(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("dqn_fixed_eps");
    let setup = Setup::dqn(o, 5);
    let mut a = agent(o, Algorithm::Dqn);
    a.dqn = DqnConfig::fixed_epsilon(o.real("epsilon").unwrap_or(0.15));
    let c = setup.config("kuhn", a, kuhn_rules(0)?, DQN_EPISODES / 2)?;
    let result = out.record("dqn_fixed", &c)?;
    if let Some(h) = final_entropy(result, &c, 200) {
        out.set("dqn_fixed_final_entropy", h);
    }
    Ok(out)
}

fn cross_game(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("cross_game");
    let setup = Setup::new(o, 20, EPISODES);
    let cases: [(&str, &str, Vec<MaskRule>); 4] = [
        (
            "matching_pennies",
            "matching_pennies",
            vec![MaskRule::remove(&spec_of("matching_pennies")?, 0, &["heads"], Scope::AllNodes)?],
        ),
        ("kuhn", "kuhn", kuhn_rules(0)?),
        (
            "leduc",
            "leduc",
            vec![MaskRule::remove(&spec_of("leduc")?, 0, &["raise"], Scope::AllNodes)?],
        ),
        (
            "leduc4",
            "leduc4",
            vec![MaskRule::remove(&spec_of("leduc4")?, 0, &["raise"], Scope::AllNodes)?],
        ),
    ];
    for (label, name, rules) in cases {
        let c = setup.config(name, ql(o), rules, 10_000)?;
        out.record(label, &c)?;
        out.record_normalized(label, name)?;
    }
    let iterations = o.count("cfr_iterations");
    for name in ["kuhn", "leduc", "leduc4", "liars_dice_1d"] {
        let g = game::by_name(name)?;
        let n = iterations.unwrap_or(if name == "liars_dice_1d" {
            LIARS_DICE_CFR_ITERATIONS
        } else {
            CFR_ITERATIONS
        });
        let mut solver = CfrSolver::new(g.as_ref(), &[])?;
        solver.iterate(n);
        out.set(format!("cfr_value_{name}"), solver.average_value());
        out.set(format!("cfr_exploitability_{name}"), solver.exploitability());
    }
    Ok(out)
}

fn ipd_boundary(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("ipd_boundary");
    let setup = Setup::new(o, 5, EPISODES);
    let rules = vec![MaskRule::remove(&spec_of("ipd")?, 0, &["cooperate"], Scope::AllNodes)?];
    out.record("ipd", &setup.config("ipd", ql(o), rules, 10_000)?)?;
    Ok(out)
}

fn liars_dice_boundary(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("liars_dice_boundary");
    let setup = Setup::new(o, 5, EPISODES);
    let spec = spec_of("liars_dice_1d")?;
    let challenge = vec![MaskRule::keep_only(&spec, 0, &["challenge"], Scope::AllNodes)?];
    let lowest = vec![MaskRule::force(0, ForceRule::LowestLegal, Scope::AllNodes)];
    let g = game::by_name("liars_dice_1d")?;
    out.set("challenge_only_cac", compute_cac(g.as_ref(), &challenge, 0)?.cac_decision_points as f64);
    out.set("lowest_cac", compute_cac(g.as_ref(), &lowest, 0)?.cac_decision_points as f64);
    out.record("challenge_only", &setup.config("liars_dice_1d", ql(o), challenge, 10_000)?)?;
    out.record("lowest", &setup.config("liars_dice_1d", ql(o), lowest, 10_000)?)?;
    out.record_normalized("challenge_only", "liars_dice_1d")?;
    out.record_normalized("lowest", "liars_dice_1d")?;
    if o.flag("long") {
        let spec2 = spec_of("liars_dice_2d")?;
        let rules = vec![MaskRule::keep_only(&spec2, 0, &["challenge"], Scope::AllNodes)?];
        let dqn = Setup::dqn(o, o.count("seeds").unwrap_or(3));
        let c = dqn.config("liars_dice_2d", agent(o, Algorithm::Dqn), rules, DQN_EPISODES / 2)?;
        out.record("dice2_challenge_only", &c)?;
    } else {
        out.notes.push("Liar's Dice 2d DQN skipped; pass long=true to include it".into());
    }
    Ok(out)
}

fn coordination(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("coordination");
    let setup = Setup::new(o, 20, EPISODES);
    let rules = vec![MaskRule::force(0, ForceRule::LowestLegal, Scope::AllNodes)];
    out.record("coordination", &setup.config("coordination", ql(o), rules, 10_000)?)?;
    let delta = out.metric("coordination_post").unwrap_or(f64::NAN) - out.metric("coordination_pre").unwrap_or(f64::NAN);
    out.set("coordination_delta", delta);
    Ok(out)
}

fn negotiation(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("negotiation");
    let setup = Setup::new(o, 5, EPISODES);
    let spec = spec_of("negotiation")?;
    let forced = vec![MaskRule::keep_only(&spec, 0, &["offer5"], Scope::AllNodes)?];
    let partial = vec![MaskRule::keep_only(&spec, 0, &["offer0", "offer1", "offer2"], Scope::AllNodes)?];
    let g = game::by_name("negotiation")?;
    out.set("cac_forced", compute_cac(g.as_ref(), &forced, 0)?.cac_raw_infosets as f64);
    out.set("cac_cac3", partial_capacity(&partial, g.as_ref())?);
    out.record("forced", &setup.config("negotiation", ql(o), forced, 10_000)?)?;
    out.record("cac3", &setup.config("negotiation", ql(o), partial, 10_000)?)?;
    let m = |out: &RunOutput, k: &str| out.metric(k).unwrap_or(f64::NAN);
    out.set("forced_delta", m(&out, "forced_post") - m(&out, "forced_pre"));
    out.set("cac3_gap", m(&out, "cac3_post") - m(&out, "cac3_pre"));
    Ok(out)
}

/// Retained actions at P0's single decision, counted as capacity the way the
/// ultimatum game is usually described: one unit per offer kept.
fn partial_capacity(rules: &[MaskRule], g: &dyn Game) -> Result<f64> {
    let tree = crate::tree::GameTree::build(g, rules)?;
    Ok(tree
        .player_infosets(0)
        .map(|(_, s)| if s.actions.len() > 1 { s.actions.len() } else { 0 })
        .sum::<usize>() as f64)
}

fn timing_sweep(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("timing_sweep");
    let setup = Setup::new(o, 20, EPISODES);
    let timings = [("early", 3_000), ("mid", 10_000), ("late", 17_000)];
    for (severity, level) in [("severe", 0), ("mild", 1)] {
        let mut posts = Vec::new();
        for (name, at) in timings {
            let c = setup.config_at("kuhn", ql(o), kuhn_rules(level)?, Schedule::at(setup.at(at)))?;
            let label = format!("{severity}_{name}");
            out.record(&label, &c)?;
            posts.push(out.metric(&format!("{label}_post")).unwrap_or(f64::NAN));
        }
        let hi = posts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = posts.iter().copied().fold(f64::INFINITY, f64::min);
        out.set(format!("{severity}_spread"), hi - lo);
    }
    Ok(out)
}

fn recovery(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("recovery");
    let setup = Setup::new(o, 5, 25_000);
    let schedule = Schedule::new(setup.at(10_000), Some(setup.at(15_000)), 1.0)?;
    let mut c = setup.config_at("kuhn", ql(o), kuhn_rules(0)?, schedule)?;
    c.track_recovery = true;
    let result = out.record("recovery", &c)?;
    let steps: Vec<f64> = result
        .runs
        .iter()
        .map(|r| r.episodes_to_recover.map_or(f64::INFINITY, |n| n as f64))
        .collect();
    let restored = result.phase_means(Phase::Restored);
    let post = result.phase_means(Phase::Post);
    out.set("median_episodes_to_recover", median(steps));
    if post.len() >= 2 {
        out.set("recovery_gain_p", paired_t(&post, &restored)?.p_value);
    }
    Ok(out)
}

fn stochastic_masking(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("stochastic_masking");
    let setup = Setup::new(o, 20, EPISODES);
    let activate = setup.activate.unwrap_or(setup.at(10_000));
    let schedule = Schedule::new(activate, None, 0.5)?;
    let c = setup.config_at("kuhn", ql(o), kuhn_rules(1)?, schedule)?;
    out.record("stochastic", &c)?;
    Ok(out)
}

fn hyperparam_grid(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("hyperparam_grid");
    let setup = Setup::new(o, 20, EPISODES);
    let g = game::by_name("kuhn")?;
    let rules = kuhn_rules(0)?;
    for (eps, _) in GRID_EPSILONS {
        let floor = dea_floor(eps, g.as_ref(), &rules)?;
        out.set(format!("eps{eps}_dea_floor"), floor);
        let mut posts = Vec::new();
        for alpha in GRID_ALPHAS {
            let mut a = AgentConfig::new(Algorithm::QLearning);
            a.alpha = alpha;
            a.epsilon = eps;
            let label = format!("eps{eps}_alpha{alpha}");
            out.record(&label, &setup.config("kuhn", a, rules.clone(), 10_000)?)?;
            posts.push(out.metric(&format!("{label}_post")).unwrap_or(f64::NAN));
        }
        let hi = posts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = posts.iter().copied().fold(f64::INFINITY, f64::min);
        out.set(format!("eps{eps}_alpha_spread"), hi - lo);
        out.set(format!("eps{eps}_floor_gap"), (mean(&posts) - floor).abs());
    }
    Ok(out)
}

fn entropy_reg(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("entropy_reg");
    let setup = Setup::new(o, 20, EPISODES);
    let mut posts = Vec::new();
    for tau in [0.0, 0.05, 0.1, 0.2] {
        let mut a = agent(o, Algorithm::EntropyQl);
        a.tau = tau;
        let label = format!("tau{tau}");
        out.record(&label, &setup.config("kuhn", a, kuhn_rules(0)?, 10_000)?)?;
        posts.push(out.metric(&format!("{label}_post")).unwrap_or(f64::NAN));
    }
    let gap = posts[1..].iter().map(|p| (p - posts[0]).abs()).fold(0.0, f64::max);
    out.set("max_gap_to_baseline", gap);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachRow {
    pub epsilon: f64,
    /// Fraction of post-window episodes reaching P0's decision after pass-bet.
    pub reach: f64,
    pub post: f64,
}

/// Root-only removal in Kuhn for each exploration rate: the measured reach of
/// the retained decision and the post-perturbation value.
pub fn reach_sensitivity_sweep(epsilons: &[f64], seeds: usize, episodes: usize) -> Result<Vec<ReachRow>> {
    let mut o = Overrides::new();
    o.set("seeds", &seeds.to_string())?;
    o.set("episodes", &episodes.to_string())?;
    reach_rows(&o, epsilons).map(|(rows, _)| rows)
}

fn reach_rows(o: &Overrides, epsilons: &[f64]) -> Result<(Vec<ReachRow>, Vec<Condition>)> {
    let setup = Setup::new(o, 20, EPISODES);
    let mut rows = Vec::new();
    let mut conditions = Vec::new();
    for &eps in epsilons {
        let mut a = ql(o);
        a.epsilon = eps;
        let mut c = setup.config("kuhn", a, kuhn_rules(1)?, 10_000)?;
        c.track_points = vec!["P0|pb".to_string()];
        let result = run_match(&c)?;
        let reach: Vec<f64> = result
            .runs
            .iter()
            .map(|r| r.point_visits.get("P0|pb").copied().unwrap_or(0.0))
            .collect();
        rows.push(ReachRow {
            epsilon: eps,
            reach: mean(&reach),
            post: result.mean(Phase::Post),
        });
        conditions.push(Condition {
            label: format!("eps{eps}"),
            result,
        });
    }
    Ok((rows, conditions))
}

fn reach_sensitivity(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("reach_sensitivity");
    let epsilons: Vec<f64> = REACH_ROWS.iter().map(|r| r.0).collect();
    let (rows, conditions) = reach_rows(o, &epsilons)?;
    for row in rows {
        out.set(format!("eps{}_reach", row.epsilon), row.reach);
        out.set(format!("eps{}_post", row.epsilon), row.post);
    }
    out.conditions = conditions;
    Ok(out)
}

fn separate_selfplay(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("separate_selfplay");
    let setup = Setup::new(o, 20, EPISODES);
    let shared = setup.config("kuhn", ql(o), kuhn_rules(0)?, 10_000)?;
    let mut separate = shared.clone();
    separate.sharing = Sharing::Separate;
    out.record("shared", &shared)?;
    out.record("separate", &separate)?;
    let m = |out: &RunOutput, k: &str| out.metric(k).unwrap_or(f64::NAN);
    out.set("shared_separate_gap", (m(&out, "shared_post") - m(&out, "separate_post")).abs());
    Ok(out)
}

/// Mean exploitability over checkpoints in `[from, to)`, over seeds.
fn exploitability_between(result: &MatchResult, from: usize, to: usize) -> f64 {
    let values: Vec<f64> = result
        .runs
        .iter()
        .flat_map(|r| r.exploitability.iter().filter(|(e, _)| (from..to).contains(&(e - 1))).map(|(_, v)| *v))
        .collect();
    mean(&values)
}

fn exploitability_trace(o: &Overrides) -> Result<RunOutput> {
    let mut out = RunOutput::new("exploitability_trace");
    let setup = Setup::new(o, 5, EPISODES);
    let leduc_rules = vec![MaskRule::remove(&spec_of("leduc")?, 0, &["raise"], Scope::AllNodes)?];
    for (label, name, rules, every) in [
        ("kuhn", "kuhn", kuhn_rules(0)?, 250),
        ("leduc", "leduc", leduc_rules, 1_000),
    ] {
        let mut c = setup.config(name, ql(o), rules, 10_000)?;
        c.exploitability_every = Some(every);
        let result = out.record(label, &c)?;
        let windows = c.phase_windows();
        let (a, b) = windows[&Phase::Pre];
        let (x, y) = windows[&Phase::Post];
        let pre = exploitability_between(result, a, b);
        let post = exploitability_between(result, x, y);
        out.set(format!("{label}_exploitability_pre"), pre);
        out.set(format!("{label}_exploitability_post"), post);
        out.set(format!("{label}_exploitability_rise"), post - pre);
    }
    let g = game::by_name("kuhn")?;
    let mut solver = CfrSolver::new(g.as_ref(), &[])?;
    solver.iterate(1_000);
    let early = solver.exploitability();
    solver.iterate(o.count("cfr_iterations").unwrap_or(CFR_ITERATIONS).saturating_sub(1_000));
    let late = solver.exploitability();
    out.set("cfr_kuhn_exploitability", late);
    out.set("cfr_trace_drop", early - late);
    out.set("cfr_profile_exploitability", exploitability(g.as_ref(), &solver.average_profile())?);
    Ok(out)
}
