//! Black-box baselines over flat policy vectors: random search, an elitist
//! genetic algorithm, and Bayesian optimization with a GP-hedge portfolio.
//!
//! Each optimizer is driven through `ask`/`tell`, so the harness can charge
//! every evaluation to the shared episode budget. The `*_run` helpers wrap
//! that loop for standalone use.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::env::{
    discretize_index, Action, Formulation, SurrogateEnv, GRID_POINTS, NUM_ACTIONS, YEARS,
};
use crate::gp::{CandidatePosterior, GpModel, Kernel, Posterior};
use crate::tabular::{argmax, sample_categorical, softmax};
use crate::{Error, Result};

/// How a policy vector maps to actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Two coverage fractions per action.
    Continuous,
    /// One grid index in `0..121` per action.
    Discrete,
}

/// A point in a black-box search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyVector {
    pub values: Vec<f64>,
    pub encoding: Encoding,
}

/// Search space for one formulation and encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicySpace {
    formulation: Formulation,
    encoding: Encoding,
}

impl PolicySpace {
    pub fn new(formulation: Formulation, encoding: Encoding) -> Result<Self> {
        if formulation == Formulation::Mdp {
            return Err(Error::Config(
                "black-box optimizers ignore state and do not apply to the mdp formulation".into(),
            ));
        }
        Ok(PolicySpace {
            formulation,
            encoding,
        })
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    fn actions_per_policy(&self) -> usize {
        match self.formulation {
            Formulation::ContextFree => 1,
            _ => YEARS,
        }
    }

    pub fn dims(&self) -> usize {
        match self.encoding {
            Encoding::Continuous => 2 * self.actions_per_policy(),
            Encoding::Discrete => self.actions_per_policy(),
        }
    }

    /// Draws one gene uniformly.
    pub fn sample_gene<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.encoding {
            Encoding::Continuous => rng.random::<f64>(),
            Encoding::Discrete => rng.random_range(0..NUM_ACTIONS) as f64,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PolicyVector {
        PolicyVector {
            values: (0..self.dims()).map(|_| self.sample_gene(rng)).collect(),
            encoding: self.encoding,
        }
    }

    pub fn contains(&self, x: &PolicyVector) -> bool {
        x.encoding == self.encoding
            && x.values.len() == self.dims()
            && x.values.iter().all(|&v| match self.encoding {
                Encoding::Continuous => (0.0..=1.0).contains(&v),
                Encoding::Discrete => v.fract() == 0.0 && v >= 0.0 && (v as usize) < NUM_ACTIONS,
            })
    }

    /// Actions for years 1..5; a context-free policy repeats its action.
    pub fn decode(&self, x: &PolicyVector) -> Result<[Action; YEARS]> {
        if !self.contains(x) {
            return Err(Error::Config(format!(
                "policy vector {:?} does not belong to this search space",
                x.values
            )));
        }
        let actions: Vec<Action> = match self.encoding {
            Encoding::Continuous => x
                .values
                .chunks(2)
                .map(|c| Action::new(c[0], c[1]))
                .collect::<Result<_>>()?,
            Encoding::Discrete => x
                .values
                .iter()
                .map(|&v| discretize_index(v as usize, GRID_POINTS))
                .collect::<Result<_>>()?,
        };
        Ok(std::array::from_fn(|t| actions[t % actions.len()]))
    }

    /// Coordinates in the unit cube, as seen by the GP.
    pub fn unit(&self, x: &PolicyVector) -> Vec<f64> {
        match self.encoding {
            Encoding::Continuous => x.values.clone(),
            Encoding::Discrete => x
                .values
                .iter()
                .map(|v| v / (NUM_ACTIONS - 1) as f64)
                .collect(),
        }
    }

    fn from_unit(&self, u: &[f64]) -> PolicyVector {
        let values = match self.encoding {
            Encoding::Continuous => u.to_vec(),
            Encoding::Discrete => u
                .iter()
                .map(|v| (v * (NUM_ACTIONS - 1) as f64).round())
                .collect(),
        };
        PolicyVector {
            values,
            encoding: self.encoding,
        }
    }
}

/// Plays one episode with the decoded policy and returns its reward.
pub fn evaluate(space: &PolicySpace, env: &mut SurrogateEnv, x: &PolicyVector) -> Result<f64> {
    let actions = space.decode(x)?;
    Ok(env.run_episode(|s| actions[s.index()])?.episodic_reward)
}

/// Best evaluated policy so far. Ties keep the earlier policy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub best: Option<(PolicyVector, f64)>,
}

impl Incumbent {
    pub fn offer(&mut self, x: &PolicyVector, reward: f64) {
        if self.best.as_ref().is_none_or(|(_, r)| reward > *r) {
            self.best = Some((x.clone(), reward));
        }
    }

    pub fn reward(&self) -> Option<f64> {
        self.best.as_ref().map(|(_, r)| *r)
    }

    pub fn vector(&self) -> Option<&PolicyVector> {
        self.best.as_ref().map(|(x, _)| x)
    }
}

/// Result of a standalone black-box run.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub best: PolicyVector,
    pub reward: f64,
    pub evaluations: usize,
}

/// Ask/tell interface shared by the black-box optimizers.
pub trait BlackBox {
    /// Next policy to evaluate, or `None` once the optimizer has finished.
    fn ask<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<PolicyVector>;
    fn tell(&mut self, x: &PolicyVector, reward: f64);
    fn incumbent(&self) -> &Incumbent;
}

#[derive(Clone, Debug)]
pub struct RandomSearch {
    space: PolicySpace,
    incumbent: Incumbent,
}

impl RandomSearch {
    pub fn new(space: PolicySpace) -> Self {
        RandomSearch {
            space,
            incumbent: Incumbent::default(),
        }
    }
}

impl BlackBox for RandomSearch {
    fn ask<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<PolicyVector> {
        Some(self.space.sample(rng))
    }

    fn tell(&mut self, x: &PolicyVector, reward: f64) {
        self.incumbent.offer(x, reward);
    }

    fn incumbent(&self) -> &Incumbent {
        &self.incumbent
    }
}

/// Evaluates proposals until the budget runs out or the optimizer stops.
/// Returns the number of episodes used.
pub fn drive<O: BlackBox, R: Rng + ?Sized>(
    opt: &mut O,
    space: &PolicySpace,
    env: &mut SurrogateEnv,
    budget: usize,
    rng: &mut R,
) -> Result<usize> {
    let mut used = 0;
    while used < budget {
        let Some(x) = opt.ask(rng) else { break };
        let r = evaluate(space, env, &x)?;
        opt.tell(&x, r);
        used += 1;
    }
    Ok(used)
}

fn outcome(incumbent: &Incumbent, evaluations: usize) -> Result<Outcome> {
    let (best, reward) = incumbent
        .best
        .clone()
        .ok_or_else(|| Error::Config("budget must allow at least one evaluation".into()))?;
    Ok(Outcome {
        best,
        reward,
        evaluations,
    })
}

pub fn random_search<R: Rng + ?Sized>(
    budget: usize,
    space: PolicySpace,
    env: &mut SurrogateEnv,
    rng: &mut R,
) -> Result<Outcome> {
    let mut opt = RandomSearch::new(space);
    let used = drive(&mut opt, &space, env, budget, rng)?;
    outcome(opt.incumbent(), used)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub max_iterations: usize,
    pub population: usize,
    pub mutation_prob: f64,
    pub elite_ratio: f64,
    pub crossover_prob: f64,
    pub parents_portion: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            max_iterations: 5,
            population: 87,
            mutation_prob: 0.1,
            elite_ratio: 0.01,
            crossover_prob: 0.5,
            parents_portion: 0.3,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("mutation_prob", self.mutation_prob),
            ("elite_ratio", self.elite_ratio),
            ("crossover_prob", self.crossover_prob),
            ("parents_portion", self.parents_portion),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidValue { name, value });
            }
        }
        if self.population < 2 {
            return Err(Error::InvalidValue {
                name: "population",
                value: self.population as f64,
            });
        }
        if self.elite_count() >= self.population {
            return Err(Error::Config(
                "elite_ratio leaves no room for children".into(),
            ));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        (self.elite_ratio * self.population as f64).ceil() as usize
    }

    pub fn parent_count(&self) -> usize {
        ((self.parents_portion * self.population as f64) as usize).clamp(1, self.population)
    }
}

/// Elitist GA evaluated one individual per `ask`.
///
/// Generation 0 is a random population. Every later generation carries the
/// elites over with their stored fitness and evaluates only the children.
#[derive(Clone, Debug)]
pub struct GeneticAlgorithm {
    config: GaConfig,
    space: PolicySpace,
    generation: usize,
    pending: VecDeque<PolicyVector>,
    scored: Vec<(PolicyVector, f64)>,
    generation_best: Vec<f64>,
    incumbent: Incumbent,
    started: bool,
}

impl GeneticAlgorithm {
    pub fn new(config: GaConfig, space: PolicySpace) -> Result<Self> {
        config.validate()?;
        Ok(GeneticAlgorithm {
            config,
            space,
            generation: 0,
            pending: VecDeque::new(),
            scored: Vec::new(),
            generation_best: Vec::new(),
            incumbent: Incumbent::default(),
            started: false,
        })
    }

    pub fn config(&self) -> &GaConfig {
        &self.config
    }

    /// Best fitness within each generation seen so far, the last one
    /// possibly partial.
    pub fn generation_best(&self) -> Vec<f64> {
        let mut out = self.generation_best.clone();
        if let Some(b) = self.current_best() {
            out.push(b);
        }
        out
    }

    fn current_best(&self) -> Option<f64> {
        self.scored.iter().map(|(_, f)| *f).reduce(f64::max)
    }

    pub fn is_finished(&self) -> bool {
        self.started && self.pending.is_empty() && self.generation >= self.config.max_iterations
    }

    fn ranked(&self) -> Vec<(PolicyVector, f64)> {
        let mut ranked = self.scored.clone();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        ranked
    }

    fn breed<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let ranked = self.ranked();
        self.generation_best.push(ranked[0].1);
        let elites = self.config.elite_count();
        let parents = &ranked[..self.config.parent_count().min(ranked.len())];
        let floor = parents.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = parents.iter().map(|p| p.1 - floor).collect();
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = if total > 0.0 {
            weights.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / parents.len() as f64; parents.len()]
        };
        let children = self.config.population - elites;
        let mut next = VecDeque::with_capacity(children);
        for _ in 0..children {
            let a = &parents[sample_categorical(&probs, rng)].0;
            let b = &parents[sample_categorical(&probs, rng)].0;
            let mut child = a.clone();
            if rng.random::<f64>() < self.config.crossover_prob {
                for (g, &other) in child.values.iter_mut().zip(&b.values) {
                    if rng.random::<bool>() {
                        *g = other;
                    }
                }
            }
            for g in child.values.iter_mut() {
                if rng.random::<f64>() < self.config.mutation_prob {
                    *g = self.space.sample_gene(rng);
                }
            }
            next.push_back(child);
        }
        self.scored = ranked.into_iter().take(elites).collect();
        self.pending = next;
        self.generation += 1;
    }
}

impl BlackBox for GeneticAlgorithm {
    /// Next individual to evaluate, or `None` after the last generation.
    fn ask<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<PolicyVector> {
        if !self.started {
            self.started = true;
            self.pending = (0..self.config.population)
                .map(|_| self.space.sample(rng))
                .collect();
        }
        if self.pending.is_empty() {
            if self.generation >= self.config.max_iterations {
                return None;
            }
            self.breed(rng);
        }
        self.pending.front().cloned()
    }

    fn tell(&mut self, x: &PolicyVector, fitness: f64) {
        if self.pending.front() == Some(x) {
            self.pending.pop_front();
            self.scored.push((x.clone(), fitness));
        }
        self.incumbent.offer(x, fitness);
    }

    fn incumbent(&self) -> &Incumbent {
        &self.incumbent
    }
}

/// Standalone GA run with its per-generation best fitness.
#[derive(Clone, Debug, PartialEq)]
pub struct GaOutcome {
    pub outcome: Outcome,
    pub generation_best: Vec<f64>,
}

pub fn ga_run<R: Rng + ?Sized>(
    config: GaConfig,
    space: PolicySpace,
    budget: usize,
    env: &mut SurrogateEnv,
    rng: &mut R,
) -> Result<GaOutcome> {
    let mut ga = GeneticAlgorithm::new(config, space)?;
    let used = drive(&mut ga, &space, env, budget, rng)?;
    Ok(GaOutcome {
        outcome: outcome(ga.incumbent(), used)?,
        generation_best: ga.generation_best(),
    })
}

/// Standard normal density.
fn phi(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
fn big_phi(u: f64) -> f64 {
    0.5 * erfc(-u * FRAC_1_SQRT_2)
}

/// `(μ − y*)Φ(u) + σφ(u)`; at σ = 0 this is `max(μ − y*, 0)`.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let gap = mean - best;
    if sd <= 0.0 {
        return gap.max(0.0);
    }
    let u = gap / sd;
    (gap * big_phi(u) + sd * phi(u)).max(0.0)
}

/// `Φ((μ − y*)/σ)`; at σ = 0 this is 1 when μ > y* and 0 otherwise.
pub fn probability_of_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if sd <= 0.0 {
        return if mean > best { 1.0 } else { 0.0 };
    }
    big_phi((mean - best) / sd)
}

pub fn upper_confidence_bound(mean: f64, sd: f64, kappa: f64) -> f64 {
    mean + kappa * sd
}

/// Portfolio members, in gain order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acquisition {
    Ucb,
    Ei,
    Pi,
}

impl Acquisition {
    pub const ALL: [Acquisition; 3] = [Acquisition::Ucb, Acquisition::Ei, Acquisition::Pi];

    pub fn score(self, p: &Posterior, best: f64, kappa: f64) -> f64 {
        match self {
            Acquisition::Ucb => upper_confidence_bound(p.mean, p.sd(), kappa),
            Acquisition::Ei => expected_improvement(p.mean, p.sd(), best),
            Acquisition::Pi => probability_of_improvement(p.mean, p.sd(), best),
        }
    }
}

/// `p(j) ∝ exp(η·g_j)`.
pub fn hedge_probabilities(gains: &[f64], eta: f64) -> Vec<f64> {
    let scaled: Vec<f64> = gains.iter().map(|g| eta * g).collect();
    softmax(&scaled)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedgeState {
    pub gains: [f64; 3],
    pub eta: f64,
}

impl HedgeState {
    pub fn new(eta: f64) -> Self {
        HedgeState {
            gains: [0.0; 3],
            eta,
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        hedge_probabilities(&self.gains, self.eta)
    }
}

/// Bayesian-optimization loop settings. Kernel and noise are passed
/// separately so they can be shared with the other GP learners.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub n_calls: usize,
    pub n_initial: usize,
    pub kappa: f64,
    pub n_points: usize,
    /// GP-hedge temperature.
    pub hedge_eta: f64,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            n_calls: 399,
            n_initial: 10,
            kappa: 1.96,
            n_points: 10_000,
            hedge_eta: 1.0,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_initial >= self.n_calls {
            return Err(Error::Config(format!(
                "n_initial ({}) must be below n_calls ({})",
                self.n_initial, self.n_calls
            )));
        }
        if self.n_points == 0 {
            return Err(Error::InvalidValue {
                name: "n_points",
                value: 0.0,
            });
        }
        for (name, value) in [("kappa", self.kappa), ("hedge_eta", self.hedge_eta)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidValue { name, value });
            }
        }
        Ok(())
    }
}

/// Bayesian optimization with GP-hedge over a fixed random candidate set.
///
/// The candidate set is drawn once when the first model-based proposal is
/// needed, which lets the candidate posterior grow row by row instead of
/// being recomputed every call.
#[derive(Clone, Debug)]
pub struct BayesOpt {
    config: BoConfig,
    space: PolicySpace,
    model: GpModel,
    candidates: Option<CandidatePosterior>,
    hedge: HedgeState,
    proposals: Option<[usize; 3]>,
    calls: usize,
    incumbent: Incumbent,
    fallbacks: usize,
}

impl BayesOpt {
    pub fn new(config: BoConfig, space: PolicySpace, kernel: Kernel, noise: f64) -> Result<Self> {
        config.validate()?;
        Ok(BayesOpt {
            config,
            space,
            model: GpModel::new(kernel, noise)?.standardized(true),
            candidates: None,
            hedge: HedgeState::new(config.hedge_eta),
            proposals: None,
            calls: 0,
            incumbent: Incumbent::default(),
            fallbacks: 0,
        })
    }

    pub fn config(&self) -> &BoConfig {
        &self.config
    }

    pub fn hedge(&self) -> &HedgeState {
        &self.hedge
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    /// Iterations that fell back to a random proposal after a GP failure.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    fn propose<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<PolicyVector> {
        let space = self.space;
        let n_points = self.config.n_points;
        let cache = self.candidates.get_or_insert_with(|| {
            let points = (0..n_points)
                .map(|_| space.unit(&space.sample(rng)))
                .collect();
            CandidatePosterior::new(points)
        });
        cache.sync(&self.model)?;
        let posteriors = cache.standardized(&self.model)?;
        let best = self
            .model
            .scaling()
            .apply(self.incumbent.reward().unwrap_or(0.0));
        let mut picks = [0usize; 3];
        for (pick, acq) in picks.iter_mut().zip(Acquisition::ALL) {
            let scores: Vec<f64> = posteriors
                .iter()
                .map(|p| acq.score(p, best, self.config.kappa))
                .collect();
            *pick = argmax(&scores);
        }
        let j = sample_categorical(&self.hedge.probabilities(), rng);
        self.proposals = Some(picks);
        Ok(space.from_unit(&cache.points()[picks[j]]))
    }
}

impl BlackBox for BayesOpt {
    fn ask<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<PolicyVector> {
        if self.calls >= self.config.n_calls {
            return None;
        }
        self.proposals = None;
        if self.calls < self.config.n_initial {
            return Some(self.space.sample(rng));
        }
        match self.propose(rng) {
            Ok(x) => Some(x),
            Err(e) => {
                warn!("GP proposal failed ({e}); sampling a random policy instead");
                self.fallbacks += 1;
                Some(self.space.sample(rng))
            }
        }
    }

    fn tell(&mut self, x: &PolicyVector, reward: f64) {
        if self.calls >= self.config.n_calls {
            return;
        }
        self.calls += 1;
        self.incumbent.offer(x, reward);
        if let Err(e) = self.model.push(self.space.unit(x), reward) {
            warn!("GP update failed ({e}); observation kept only in the incumbent");
            self.proposals = None;
            return;
        }
        if let (Some(picks), Some(cache)) = (self.proposals.take(), self.candidates.as_ref()) {
            for (gain, idx) in self.hedge.gains.iter_mut().zip(picks) {
                if let Ok(p) = self.model.posterior_standardized(&cache.points()[idx]) {
                    *gain += p.mean;
                }
            }
        }
    }

    fn incumbent(&self) -> &Incumbent {
        &self.incumbent
    }
}

/// Bayesian optimization with a unit Matern-5/2 kernel and noise 0.1 on
/// standardized targets.
pub fn bayes_opt_run<R: Rng + ?Sized>(
    config: BoConfig,
    space: PolicySpace,
    env: &mut SurrogateEnv,
    rng: &mut R,
) -> Result<Outcome> {
    let mut bo = BayesOpt::new(config, space, Kernel::matern52(1.0, 1.0)?, 0.1)?;
    let used = drive(&mut bo, &space, env, config.n_calls, rng)?;
    outcome(bo.incumbent(), used)
}
