use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, ExperimentConfig};
use super::learners::build_learner;
use super::output::PolicyArtifact;
use crate::env::{Formulation, SurrogateEnv, SurrogateParams, YEARS};
use crate::{Error, Result};

/// Outcome of one seeded repeat.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub algo: Algorithm,
    pub formulation: Formulation,
    pub repeat: usize,
    pub seed: u64,
    pub train_rewards: Vec<f64>,
    pub eval_rewards: Vec<f64>,
    pub env_steps: u64,
    /// Timing only; never written to result files.
    pub wall_clock_secs: f64,
    pub policy: PolicyArtifact,
}

impl RunResult {
    pub fn eval_reward(&self) -> f64 {
        self.eval_rewards.iter().sum::<f64>() / self.eval_rewards.len() as f64
    }
}

/// Independent streams for the environment and the learner.
pub fn seeded_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(0);
    let mut learner = ChaCha8Rng::seed_from_u64(seed);
    learner.set_stream(1);
    (env, learner)
}

pub fn run_repeat(config: &ExperimentConfig, repeat: usize) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let seed = config.seed.wrapping_add(repeat as u64);
    let (env_rng, mut rng) = seeded_streams(seed);
    let mut env = SurrogateEnv::new(config.surrogate.clone(), env_rng)?;
    let mut learner = build_learner(config, &mut rng)?;

    let mut train_rewards = Vec::with_capacity(config.train_episodes);
    for episode in 1..=config.train_episodes as u64 {
        train_rewards.push(learner.train_episode(&mut env, episode, &mut rng)?);
    }

    let actions = learner.greedy_policy()?;
    let eval_rewards = (0..config.eval_episodes())
        .map(|_| {
            env.run_episode(|s| actions[s.index()])
                .map(|t| t.episodic_reward)
        })
        .collect::<Result<Vec<_>>>()?;

    let expected = (config.episodes * YEARS) as u64;
    if env.steps() != expected {
        return Err(Error::Config(format!(
            "{} on {} used {} environment steps instead of {expected}",
            config.algo,
            config.formulation,
            env.steps()
        )));
    }
    let wall_clock_secs = started.elapsed().as_secs_f64();
    info!(
        "{} {} repeat {repeat}: eval {:.2} ({wall_clock_secs:.2}s)",
        config.algo, config.formulation, eval_rewards[0]
    );
    Ok(RunResult {
        algo: config.algo,
        formulation: config.formulation,
        repeat,
        seed,
        train_rewards,
        eval_rewards,
        env_steps: env.steps(),
        wall_clock_secs,
        policy: PolicyArtifact {
            algo: config.algo,
            formulation: config.formulation,
            repeat,
            seed,
            greedy_actions: actions,
            state: learner.state(),
        },
    })
}

/// Runs every repeat of `config` in order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    (0..config.repeats).map(|r| run_repeat(config, r)).collect()
}

/// Runs the full algorithm × formulation matrix with shared settings.
pub fn sweep(base: &ExperimentConfig) -> Result<Vec<RunResult>> {
    let mut out = Vec::new();
    for (algo, formulation) in Algorithm::matrix() {
        let config = ExperimentConfig {
            algo,
            formulation,
            ..base.clone()
        };
        out.extend(run_experiment(&config)?);
    }
    Ok(out)
}

/// Plays a stored greedy policy for one episode on a fresh environment.
pub fn replay_policy(policy: &PolicyArtifact, params: &SurrogateParams, seed: u64) -> Result<f64> {
    let (env_rng, _) = seeded_streams(seed);
    let mut env = SurrogateEnv::new(params.clone(), env_rng)?;
    let actions = policy.greedy_actions;
    if !actions.iter().all(|a| a.is_valid()) {
        return Err(Error::Config(
            "policy contains actions outside [0, 1]²".into(),
        ));
    }
    Ok(env.run_episode(|s| actions[s.index()])?.episodic_reward)
}
