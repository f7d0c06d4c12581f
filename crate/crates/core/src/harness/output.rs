use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::Algorithm;
use super::run::RunResult;
use crate::env::{Action, Formulation, YEARS};
use crate::{Error, Result};

pub const CSV_HEADER: &str = "algo,formulation,repeat,episode,reward,phase";

/// Learned state and greedy actions of one repeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub algo: Algorithm,
    pub formulation: Formulation,
    pub repeat: usize,
    pub seed: u64,
    pub greedy_actions: [Action; YEARS],
    pub state: Value,
}

impl PolicyArtifact {
    pub fn file_name(&self) -> String {
        format!(
            "policy_{}_{}_{}.json",
            self.algo, self.formulation, self.repeat
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub algo: Algorithm,
    pub formulation: Formulation,
    pub repeats: usize,
    pub eval_mean: f64,
    /// Sample standard deviation; 0 for a single repeat.
    pub eval_sd: f64,
    pub train_mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
}

impl Summary {
    /// Groups in order of first appearance.
    pub fn from_results(results: &[RunResult]) -> Self {
        let mut keys: Vec<(Algorithm, Formulation)> = Vec::new();
        for r in results {
            if !keys.contains(&(r.algo, r.formulation)) {
                keys.push((r.algo, r.formulation));
            }
        }
        let groups = keys
            .into_iter()
            .map(|(algo, formulation)| {
                let runs: Vec<&RunResult> = results
                    .iter()
                    .filter(|r| r.algo == algo && r.formulation == formulation)
                    .collect();
                let evals: Vec<f64> = runs
                    .iter()
                    .flat_map(|r| r.eval_rewards.iter().copied())
                    .collect();
                let trains: Vec<f64> = runs
                    .iter()
                    .flat_map(|r| r.train_rewards.iter().copied())
                    .collect();
                let n = evals.len() as f64;
                let eval_mean = evals.iter().sum::<f64>() / n;
                let eval_sd = if evals.len() > 1 {
                    (evals.iter().map(|e| (e - eval_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                GroupSummary {
                    algo,
                    formulation,
                    repeats: runs.len(),
                    eval_mean,
                    eval_sd,
                    train_mean: trains.iter().sum::<f64>() / trains.len() as f64,
                }
            })
            .collect();
        Summary { groups }
    }
}

fn write_csv(results: &[RunResult], path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| Error::format(path, e))?;
    for r in results {
        let train = r
            .train_rewards
            .iter()
            .enumerate()
            .map(|(i, v)| (i + 1, *v, "train"));
        let first_eval = r.train_rewards.len() + 1;
        let eval = r
            .eval_rewards
            .iter()
            .enumerate()
            .map(|(i, v)| (first_eval + i, *v, "eval"));
        for (episode, reward, phase) in train.chain(eval) {
            w.write_record([
                r.algo.as_str(),
                r.formulation.as_str(),
                &r.repeat.to_string(),
                &episode.to_string(),
                &reward.to_string(),
                phase,
            ])
            .map_err(|e| Error::format(path, e))?;
        }
    }
    w.flush().map_err(io)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::format(path, e))?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `summary.json` and one policy file per repeat.
pub fn write_results(results: &[RunResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(results, &dir.join("results.csv"))?;
    write_json(&Summary::from_results(results), &dir.join("summary.json"))?;
    for r in results {
        write_json(&r.policy, &dir.join(r.policy.file_name()))?;
    }
    Ok(())
}

pub fn read_policy(path: &Path) -> Result<PolicyArtifact> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}
