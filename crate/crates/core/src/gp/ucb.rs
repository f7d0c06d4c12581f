use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::model::{GpModel, Posterior};
use crate::tabular::argmax;
use crate::{Error, Result};

/// Floor applied when the time-varying formula goes non-positive.
pub const BETA_FLOOR: f64 = 1e-6;

/// Exploration weight schedule for GP-UCB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BetaSchedule {
    Fixed {
        beta: f64,
    },
    /// `2·ln(|D|·i²·π² / (6δ))`
    TimeVarying {
        delta: f64,
        dims: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaValue {
    pub beta: f64,
    /// The raw value was non-positive and the floor was used instead.
    pub floored: bool,
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Fixed { beta } if !(beta > 0.0) => Err(Error::InvalidValue {
                name: "beta",
                value: beta,
            }),
            BetaSchedule::TimeVarying { delta, .. } if !(delta > 0.0 && delta < 1.0) => {
                Err(Error::InvalidValue {
                    name: "delta",
                    value: delta,
                })
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, episode: u64) -> BetaValue {
        let raw = match *self {
            BetaSchedule::Fixed { beta } => beta,
            BetaSchedule::TimeVarying { delta, dims } => {
                let i = episode.max(1) as f64;
                2.0 * (dims as f64 * i * i * PI * PI / (6.0 * delta)).ln()
            }
        };
        if raw > 0.0 {
            BetaValue {
                beta: raw,
                floored: false,
            }
        } else {
            BetaValue {
                beta: BETA_FLOOR,
                floored: true,
            }
        }
    }
}

pub fn beta_value(schedule: &BetaSchedule, episode: u64) -> BetaValue {
    schedule.value(episode)
}

/// `argmax μ + sqrt(β)·σ` with the lowest index winning ties.
pub fn ucb_argmax(posteriors: &[Posterior], beta: f64) -> usize {
    let root = beta.sqrt();
    let scores: Vec<f64> = posteriors.iter().map(|p| p.mean + root * p.sd()).collect();
    argmax(&scores)
}

/// Argmax of the upper confidence bound over `candidates`.
pub fn gp_ucb_select(model: &GpModel, candidates: &[Vec<f64>], beta: f64) -> Result<usize> {
    let posteriors = candidates
        .iter()
        .map(|c| model.posterior(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(ucb_argmax(&posteriors, beta))
}

/// Joins a context encoding and an action into one GP input.
pub fn context_point(context: &[f64], action: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(context.len() + action.len());
    p.extend_from_slice(context);
    p.extend_from_slice(action);
    p
}

/// GP-UCB over `(context, action)` pairs for a fixed context.
pub fn cgp_ucb_select(
    model: &GpModel,
    context: &[f64],
    candidates: &[Vec<f64>],
    beta: f64,
) -> Result<usize> {
    let points: Vec<Vec<f64>> = candidates
        .iter()
        .map(|a| context_point(context, a))
        .collect();
    gp_ucb_select(model, &points, beta)
}
