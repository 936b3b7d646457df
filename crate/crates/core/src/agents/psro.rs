//! Population-based training for seat 1: tabular Q-learning oracles are
//! trained against seat 0's current policy and kept in a first-in-first-out
//! population. Each episode seat 1 plays a member drawn uniformly, while
//! seat 0 keeps learning against the population.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Learner, TabularLearner};
use crate::error::{Error, Result};
use crate::game::{self, Game};
use crate::perturb::{schedule_active, MaskRule, Schedule};
use crate::selfplay::{play_episode, RunSeed, SeatPair, Streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsroConfig {
    pub population_size: usize,
    /// Training episodes per added oracle.
    pub oracle_episodes: usize,
    /// Episodes between oracle additions.
    pub oracle_every: usize,
    pub episodes: usize,
    pub activate_at: usize,
    pub window: usize,
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for PsroConfig {
    fn default() -> Self {
        Self {
            population_size: 5,
            oracle_episodes: 4_000,
            oracle_every: 4_000,
            episodes: 20_000,
            activate_at: 10_000,
            window: 2_000,
            alpha: 0.1,
            epsilon: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsroOutcome {
    pub pre_mean: f64,
    pub post_mean: f64,
    pub rewards_p0: Vec<f64>,
}

/// Trains a fresh oracle for seat 1 against a frozen copy of seat 0.
fn train_oracle(
    game: &dyn Game,
    seat0: &TabularLearner,
    rules: &[MaskRule],
    active: bool,
    config: &PsroConfig,
    streams: &mut Streams,
) -> Result<TabularLearner> {
    let mut frozen = seat0.clone();
    frozen.freeze();
    let mut oracle = TabularLearner::q_learning(game.spec().num_actions(), config.alpha, config.epsilon);
    let mut seats = SeatPair {
        seats: [&mut frozen, &mut oracle],
    };
    for _ in 0..config.oracle_episodes {
        play_episode(game, &mut seats, rules, active, streams)?;
    }
    oracle.freeze();
    Ok(oracle)
}

/// Seat-0 phase means under population training with masks applied from
/// `activate_at` onward.
pub fn psro_run(game_name: &str, rules: &[MaskRule], config: &PsroConfig, seed: RunSeed) -> Result<PsroOutcome> {
    if config.population_size == 0 || config.oracle_episodes == 0 || config.oracle_every == 0 {
        return Err(Error::InvalidParameter("population size and oracle budget must be positive".into()));
    }
    let game = game::by_name(game_name)?;
    let game = game.as_ref();
    let schedule = Schedule::at(config.activate_at);
    let mut streams = Streams::new(seed);
    let mut seat0 = TabularLearner::q_learning(game.spec().num_actions(), config.alpha, config.epsilon);
    let mut population: Vec<TabularLearner> = Vec::new();
    let mut rewards = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let active = schedule_active(episode, &schedule, &mut streams.mask);
        if episode % config.oracle_every == 0 {
            let oracle = train_oracle(game, &seat0, rules, active, config, &mut streams)?;
            if population.len() == config.population_size {
                population.remove(0);
            }
            population.push(oracle);
        }
        let pick = streams.policy.gen_range(0..population.len());
        let mut seats = SeatPair {
            seats: [&mut seat0, &mut population[pick]],
        };
        let out = play_episode(game, &mut seats, rules, active, &mut streams)?;
        rewards.push(out.rewards[0]);
    }
    let mean = |end: usize| {
        let start = end.saturating_sub(config.window);
        rewards[start..end].iter().sum::<f64>() / (end - start).max(1) as f64
    };
    Ok(PsroOutcome {
        pre_mean: mean(config.activate_at.min(config.episodes)),
        post_mean: mean(config.episodes),
        rewards_p0: rewards,
    })
}
