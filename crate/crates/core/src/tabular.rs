//! Tabular bandit learners over the discretized action set.
//!
//! Value tables hold one row per context (a single row for the context-free
//! problem, one per year for the contextual one). Preference tables drive
//! the gradient bandit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{YearState, NUM_ACTIONS, YEARS};
use crate::{Error, Result};

/// Index of the largest value; ties go to the lowest index. NaNs never win.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Numerically stable soft-max.
pub fn softmax(prefs: &[f64]) -> Vec<f64> {
    let max = prefs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = prefs.iter().map(|&h| (h - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Draws an index from a discrete distribution by inverse CDF.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u beyond the accumulated mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Action-value estimates `Q` and visit counts `N`, one row per context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    rows: usize,
    actions: usize,
    alpha: f64,
    q: Vec<f64>,
    n: Vec<u64>,
}

impl ValueTable {
    pub fn new(rows: usize, actions: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidValue {
                name: "alpha",
                value: alpha,
            });
        }
        if rows == 0 || actions == 0 {
            return Err(Error::Config(
                "value table needs at least one row and one action".into(),
            ));
        }
        Ok(ValueTable {
            rows,
            actions,
            alpha,
            q: vec![0.0; rows * actions],
            n: vec![0; rows * actions],
        })
    }

    pub fn context_free(alpha: f64) -> Result<Self> {
        Self::new(1, NUM_ACTIONS, alpha)
    }

    pub fn contextual(alpha: f64) -> Result<Self> {
        Self::new(YEARS, NUM_ACTIONS, alpha)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn check(&self, row: usize, action: usize) -> Result<usize> {
        if row >= self.rows {
            return Err(Error::IndexOutOfRange {
                index: row,
                len: self.rows,
            });
        }
        if action >= self.actions {
            return Err(Error::IndexOutOfRange {
                index: action,
                len: self.actions,
            });
        }
        Ok(row * self.actions + action)
    }

    pub fn values(&self, row: usize) -> &[f64] {
        &self.q[row * self.actions..(row + 1) * self.actions]
    }

    pub fn counts(&self, row: usize) -> &[u64] {
        &self.n[row * self.actions..(row + 1) * self.actions]
    }

    pub fn value(&self, row: usize, action: usize) -> Result<f64> {
        Ok(self.q[self.check(row, action)?])
    }

    pub fn count(&self, row: usize, action: usize) -> Result<u64> {
        Ok(self.n[self.check(row, action)?])
    }

    /// Sets a value directly, leaving the visit count alone.
    pub fn set_value(&mut self, row: usize, action: usize, value: f64) -> Result<()> {
        let i = self.check(row, action)?;
        self.q[i] = value;
        Ok(())
    }

    /// Moves `Q(row, a)` a fraction `alpha` toward `target` and counts the visit.
    pub fn update(&mut self, row: usize, action: usize, target: f64) -> Result<()> {
        let i = self.check(row, action)?;
        self.q[i] += self.alpha * (target - self.q[i]);
        self.n[i] += 1;
        Ok(())
    }

    pub fn greedy(&self, row: usize) -> usize {
        argmax(self.values(row))
    }
}

/// Context-free value update with the episodic reward.
pub fn q_update(table: &mut ValueTable, action: usize, reward: f64) -> Result<()> {
    table.update(0, action, reward)
}

/// Contextual value update with the immediate reward of `year`.
pub fn contextual_update(
    table: &mut ValueTable,
    year: YearState,
    action: usize,
    reward: f64,
) -> Result<()> {
    table.update(year.index(), action, reward)
}

/// With probability `1 - eps` the greedy action, otherwise a uniform one.
pub fn select_epsilon_greedy<R: Rng + ?Sized>(values: &[f64], eps: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < eps {
        rng.random_range(0..values.len())
    } else {
        argmax(values)
    }
}

/// Upper-confidence-bound selection. Untried actions come first, in index
/// order; otherwise `argmax Q(a) + c·sqrt(ln(episode) / N(a))`.
pub fn select_ucb(values: &[f64], counts: &[u64], episode: u64, c: f64) -> usize {
    debug_assert_eq!(values.len(), counts.len());
    if let Some(untried) = counts.iter().position(|&n| n == 0) {
        return untried;
    }
    let log_i = (episode.max(1) as f64).ln();
    let scores: Vec<f64> = values
        .iter()
        .zip(counts)
        .map(|(&q, &n)| q + c * (log_i / n as f64).sqrt())
        .collect();
    argmax(&scores)
}

/// Linear decay from `start` to `end` over `decay_episodes`, flat afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.01,
            decay_episodes: 200,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_start", self.start), ("eps_end", self.end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue { name, value: v });
            }
        }
        Ok(())
    }

    /// Exploration rate after `completed` training episodes.
    pub fn value(&self, completed: u64) -> f64 {
        if self.decay_episodes == 0 || completed >= self.decay_episodes {
            return self.end;
        }
        let frac = completed as f64 / self.decay_episodes as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Running mean of every reward seen so far.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMean {
    pub mean: f64,
    pub count: u64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
    }
}

/// Numerical action preferences `H(a)` with the reward baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTable {
    pub h: Vec<f64>,
    pub baseline: RunningMean,
}

impl PreferenceTable {
    pub fn new(actions: usize) -> Self {
        PreferenceTable {
            h: vec![0.0; actions],
            baseline: RunningMean::default(),
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.h)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.probabilities(), rng)
    }

    pub fn greedy(&self) -> usize {
        argmax(&self.h)
    }
}

/// Stochastic gradient ascent on the preferences. The advantage uses the
/// baseline of the rewards seen before this one; the baseline then absorbs
/// `reward`.
pub fn gradient_bandit_step(
    table: &mut PreferenceTable,
    chosen: usize,
    reward: f64,
    alpha: f64,
) -> Result<()> {
    if chosen >= table.h.len() {
        return Err(Error::IndexOutOfRange {
            index: chosen,
            len: table.h.len(),
        });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidValue {
            name: "alpha",
            value: alpha,
        });
    }
    let pi = table.probabilities();
    let advantage = reward - table.baseline.mean;
    for (a, (h, p)) in table.h.iter_mut().zip(&pi).enumerate() {
        if a == chosen {
            *h += alpha * advantage * (1.0 - p);
        } else {
            *h -= alpha * advantage * p;
        }
    }
    table.baseline.push(reward);
    Ok(())
}
