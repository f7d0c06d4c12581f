use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blackbox::{BoConfig, GaConfig};
use crate::env::{Formulation, SurrogateParams};
use crate::gp::BetaSchedule;
use crate::tabular::EpsilonSchedule;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Egreedy,
    Ucb,
    GradientBandit,
    GpUcb,
    CgpUcb,
    Qlearning,
    TdCucb,
    Reinforce,
    Random,
    Ga,
    GaDiscrete,
    Bo,
    BoDiscrete,
}

impl Algorithm {
    pub const ALL: [Algorithm; 13] = [
        Algorithm::Egreedy,
        Algorithm::Ucb,
        Algorithm::GradientBandit,
        Algorithm::GpUcb,
        Algorithm::CgpUcb,
        Algorithm::Qlearning,
        Algorithm::TdCucb,
        Algorithm::Reinforce,
        Algorithm::Random,
        Algorithm::Ga,
        Algorithm::GaDiscrete,
        Algorithm::Bo,
        Algorithm::BoDiscrete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Egreedy => "egreedy",
            Algorithm::Ucb => "ucb",
            Algorithm::GradientBandit => "gradient_bandit",
            Algorithm::GpUcb => "gp_ucb",
            Algorithm::CgpUcb => "cgp_ucb",
            Algorithm::Qlearning => "qlearning",
            Algorithm::TdCucb => "td_cucb",
            Algorithm::Reinforce => "reinforce",
            Algorithm::Random => "random",
            Algorithm::Ga => "ga",
            Algorithm::GaDiscrete => "ga_discrete",
            Algorithm::Bo => "bo",
            Algorithm::BoDiscrete => "bo_discrete",
        }
    }

    pub fn supports(self, formulation: Formulation) -> bool {
        use Algorithm::*;
        use Formulation::*;
        match self {
            Egreedy | Ucb | GradientBandit => formulation != Mdp,
            GpUcb => formulation == ContextFree,
            CgpUcb => formulation == Contextual,
            Qlearning | TdCucb | Reinforce => formulation == Mdp,
            Random | Ga | GaDiscrete | Bo | BoDiscrete => formulation != Mdp,
        }
    }

    pub fn check(self, formulation: Formulation) -> Result<()> {
        if self.supports(formulation) {
            Ok(())
        } else {
            Err(Error::Incompatible {
                algo: self.as_str().to_string(),
                formulation: formulation.as_str().to_string(),
            })
        }
    }

    /// Every supported (algorithm, formulation) pair, in sweep order.
    pub fn matrix() -> Vec<(Algorithm, Formulation)> {
        Formulation::ALL
            .iter()
            .flat_map(|&f| {
                Algorithm::ALL
                    .iter()
                    .filter(move |a| a.supports(f))
                    .map(move |&a| (a, f))
            })
            .collect()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaKind {
    Fixed,
    TimeVarying,
}

/// Learner hyperparameters shared across the algorithm families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Value-table learning rate (bandits and Q-learning).
    pub alpha: f64,
    pub ucb_c: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: u64,
    /// Gradient-bandit step size.
    pub bandit_pg_alpha: f64,
    pub discount: f64,
    pub reinforce_alpha: f64,
    pub hidden_units: usize,
    /// Observation noise on standardized targets.
    pub gp_noise: f64,
    pub gp_length_scale: f64,
    pub gp_variance: f64,
    pub context_length_scale: f64,
    pub context_variance: f64,
    pub beta_schedule: BetaKind,
    pub beta: f64,
    pub beta_delta: f64,
    /// Most recent observations kept by the GP learners.
    pub gp_window: usize,
    pub cgp_refit_episodes: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 0.9,
            ucb_c: 2.0,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_episodes: 200,
            bandit_pg_alpha: 0.01,
            discount: 0.99,
            reinforce_alpha: 0.001,
            hidden_units: 10,
            gp_noise: 0.1,
            gp_length_scale: 1.0,
            gp_variance: 1.0,
            context_length_scale: 1.0,
            context_variance: 1.0,
            beta_schedule: BetaKind::Fixed,
            beta: 90.0,
            beta_delta: 0.1,
            gp_window: 500,
            cgp_refit_episodes: 2,
        }
    }
}

impl Hyperparams {
    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            decay_episodes: self.epsilon_decay_episodes,
        }
    }

    pub fn beta_schedule(&self, dims: usize) -> BetaSchedule {
        match self.beta_schedule {
            BetaKind::Fixed => BetaSchedule::Fixed { beta: self.beta },
            BetaKind::TimeVarying => BetaSchedule::TimeVarying {
                delta: self.beta_delta,
                dims,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.epsilon().validate()?;
        self.beta_schedule(2).validate()?;
        for (name, value) in [
            ("alpha", self.alpha),
            ("bandit_pg_alpha", self.bandit_pg_alpha),
            ("reinforce_alpha", self.reinforce_alpha),
            ("ucb_c", self.ucb_c),
            ("gp_length_scale", self.gp_length_scale),
            ("gp_variance", self.gp_variance),
            ("context_length_scale", self.context_length_scale),
            ("context_variance", self.context_variance),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidValue { name, value });
            }
        }
        if !(self.alpha <= 1.0) {
            return Err(Error::InvalidValue {
                name: "alpha",
                value: self.alpha,
            });
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::InvalidValue {
                name: "discount",
                value: self.discount,
            });
        }
        if !(self.gp_noise >= 0.0) {
            return Err(Error::InvalidValue {
                name: "gp_noise",
                value: self.gp_noise,
            });
        }
        for (name, value) in [
            ("hidden_units", self.hidden_units as f64),
            ("gp_window", self.gp_window as f64),
            ("cgp_refit_episodes", self.cgp_refit_episodes as f64),
        ] {
            if value < 1.0 {
                return Err(Error::InvalidValue { name, value });
            }
        }
        Ok(())
    }
}

/// Everything needed to reproduce one experiment.
///
/// Serialized as one flat table: the learner, GA, BO and surrogate settings
/// all live at the top level next to the run settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algo: Algorithm,
    pub formulation: Formulation,
    pub episodes: usize,
    pub train_episodes: usize,
    pub repeats: usize,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(flatten)]
    pub hyper: Hyperparams,
    #[serde(flatten)]
    pub ga: GaConfig,
    #[serde(flatten)]
    pub bo: BoConfig,
    #[serde(flatten)]
    pub surrogate: SurrogateParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algo: Algorithm::Ucb,
            formulation: Formulation::ContextFree,
            episodes: 400,
            train_episodes: 399,
            repeats: 20,
            seed: 0,
            out: PathBuf::from("results"),
            hyper: Hyperparams::default(),
            ga: GaConfig::default(),
            bo: BoConfig::default(),
            surrogate: SurrogateParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn new(algo: Algorithm, formulation: Formulation) -> Self {
        ExperimentConfig {
            algo,
            formulation,
            ..Default::default()
        }
    }

    /// Sets the total episode count and keeps one evaluation episode.
    pub fn with_episodes(mut self, episodes: usize) -> Self {
        self.episodes = episodes;
        self.train_episodes = episodes.saturating_sub(1);
        self
    }

    pub fn eval_episodes(&self) -> usize {
        self.episodes - self.train_episodes
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.train_episodes == 0 || self.train_episodes >= self.episodes {
            return Err(Error::Config(format!(
                "train_episodes ({}) must be positive and below episodes ({})",
                self.train_episodes, self.episodes
            )));
        }
        self.algo.check(self.formulation)?;
        self.hyper.validate()?;
        self.ga.validate()?;
        self.bo.validate()?;
        self.surrogate.validate()
    }

    fn to_table(&self) -> Result<toml::Table> {
        match toml::Value::try_from(self) {
            Ok(toml::Value::Table(t)) => Ok(t),
            Ok(_) => Err(Error::Config(
                "configuration did not serialize to a table".into(),
            )),
            Err(e) => Err(Error::Config(e.to_string())),
        }
    }

    /// Applies flat key/value overrides. Unknown keys are rejected. Setting
    /// `episodes` without `train_episodes` keeps one evaluation episode.
    pub fn merged(&self, overrides: &toml::Table) -> Result<Self> {
        let mut table = self.to_table()?;
        if let Some(key) = overrides.keys().find(|k| !table.contains_key(*k)) {
            return Err(Error::Config(format!("unknown configuration key `{key}`")));
        }
        let derive_train =
            overrides.contains_key("episodes") && !overrides.contains_key("train_episodes");
        table.extend(overrides.clone());
        let mut cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if derive_train {
            cfg.train_episodes = cfg.episodes.saturating_sub(1);
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        ExperimentConfig::default().merged(&table)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::format(path, e))?;
        ExperimentConfig::default()
            .merged(&table)
            .map_err(|e| Error::format(path, e))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&self.to_table()?).map_err(|e| Error::Config(e.to_string()))
    }
}
