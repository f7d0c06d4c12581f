//! Episodic intervention environment.
//!
//! An episode covers five yearly decisions. Each decision is an [`Action`]
//! (coverage of insecticide-treated nets and of indoor residual spraying) and
//! yields an immediate reward; the episodic reward is the sum of the five.
//!
//! The simulator behind the interface is a closed-form surrogate with one
//! hidden carry-over channel: ITN use builds up insecticide resistance, which
//! reduces ITN effectiveness in later years. Learners never observe the
//! resistance level directly; they see the year only.
//!
//! Three views of the same environment correspond to the three problem
//! formulations: [`ContextFreeView`] (one action replayed for the whole
//! episode, only the episodic reward is visible), [`ContextualView`] (per-year
//! immediate rewards) and [`MdpView`] (full transitions with a terminal flag).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of yearly decisions in an episode.
pub const YEARS: usize = 5;
/// Grid points per action dimension used throughout.
pub const GRID_POINTS: usize = 11;
/// Size of the discretized action set, `GRID_POINTS²`.
pub const NUM_ACTIONS: usize = GRID_POINTS * GRID_POINTS;

/// Coverage fractions for the two interventions, both in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub itn: f64,
    pub irs: f64,
}

impl Action {
    pub fn new(itn: f64, irs: f64) -> Result<Self> {
        for (name, v) in [("itn", itn), ("irs", irs)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue { name, value: v });
            }
        }
        Ok(Action { itn, irs })
    }

    /// Clamps both components into `[0, 1]`; NaN maps to 0.
    pub fn clamped(itn: f64, irs: f64) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        Action {
            itn: c(itn),
            irs: c(irs),
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.itn) && (0.0..=1.0).contains(&self.irs)
    }
}

/// Uniform `k × k` grid over the action square, indexed ITN-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscreteActionSet {
    k: usize,
}

impl Default for DiscreteActionSet {
    fn default() -> Self {
        DiscreteActionSet { k: GRID_POINTS }
    }
}

impl DiscreteActionSet {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidValue {
                name: "grid points",
                value: k as f64,
            });
        }
        Ok(DiscreteActionSet { k })
    }

    pub fn grid_points(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.k * self.k
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn action(&self, index: usize) -> Result<Action> {
        if index >= self.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.len(),
            });
        }
        let step = (self.k - 1) as f64;
        Ok(Action {
            itn: (index / self.k) as f64 / step,
            irs: (index % self.k) as f64 / step,
        })
    }

    /// Inverse of [`action`](Self::action). The action must lie on the grid
    /// (within 1e-9 per component).
    pub fn index_of(&self, action: Action) -> Result<usize> {
        let step = (self.k - 1) as f64;
        let snap = |v: f64, name: &'static str| -> Result<usize> {
            let scaled = v * step;
            let r = scaled.round();
            if (scaled - r).abs() > 1e-9 * step || r < 0.0 || r > step {
                return Err(Error::InvalidValue { name, value: v });
            }
            Ok(r as usize)
        };
        Ok(snap(action.itn, "itn")? * self.k + snap(action.irs, "irs")?)
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        (0..self.len()).map(move |j| self.action(j).expect("index in range"))
    }
}

/// Maps a grid index to its action on a `k × k` grid.
pub fn discretize_index(index: usize, k: usize) -> Result<Action> {
    DiscreteActionSet::new(k)?.action(index)
}

/// The observable state: the current year, 1 through 5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct YearState(u8);

impl YearState {
    pub fn new(year: i64) -> Result<Self> {
        if (1..=YEARS as i64).contains(&year) {
            Ok(YearState(year as u8))
        } else {
            Err(Error::InvalidYear(year))
        }
    }

    pub fn first() -> Self {
        YearState(1)
    }

    /// Zero-based year, suitable for table rows.
    pub fn from_index(index: usize) -> Result<Self> {
        Self::new(index as i64 + 1)
    }

    pub fn year(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn next(self) -> Option<Self> {
        (self.index() + 1 < YEARS).then_some(YearState(self.0 + 1))
    }

    pub fn all() -> impl Iterator<Item = YearState> {
        (1..=YEARS as u8).map(YearState)
    }

    /// Scalar context encoding `(year - 1) / 4` in `[0, 1]`.
    pub fn encode(self) -> f64 {
        self.index() as f64 / (YEARS - 1) as f64
    }
}

impl TryFrom<u8> for YearState {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        YearState::new(v as i64)
    }
}

impl From<YearState> for u8 {
    fn from(s: YearState) -> u8 {
        s.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: YearState,
    pub action: Action,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<Step>,
    pub episodic_reward: f64,
}

impl EpisodeTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// Parameters of the surrogate simulator. The defaults are invented values,
/// chosen so that resistance-aware sequencing is measurably better than
/// per-year greedy play, which in turn beats any single repeated action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateParams {
    /// Relative value of ITN over IRS, per year.
    pub year_weights: [f64; YEARS],
    pub resistance_decay: f64,
    pub resistance_gain: f64,
    /// Fraction of ITN effectiveness lost at full resistance.
    pub resistance_penalty: f64,
    /// Overlap penalty when both interventions are deployed.
    pub interaction: f64,
    pub benefit_scale: f64,
    pub cost_scale: f64,
    pub noise_sd: f64,
    pub noise_enabled: bool,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            year_weights: [0.9, 0.9, 1.0, 1.0, 0.1],
            resistance_decay: 0.7,
            resistance_gain: 0.5,
            resistance_penalty: 0.8,
            interaction: 0.3,
            benefit_scale: 100.0,
            cost_scale: 20.0,
            noise_sd: 5.0,
            noise_enabled: true,
        }
    }
}

impl SurrogateParams {
    pub fn noiseless() -> Self {
        SurrogateParams {
            noise_enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = self
            .year_weights
            .iter()
            .map(|&w| ("year_weights", w))
            .chain([
                ("resistance_decay", self.resistance_decay),
                ("resistance_gain", self.resistance_gain),
                ("resistance_penalty", self.resistance_penalty),
                ("interaction", self.interaction),
            ]);
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue { name, value: v });
            }
        }
        for (name, v) in [
            ("benefit_scale", self.benefit_scale),
            ("cost_scale", self.cost_scale),
            ("noise_sd", self.noise_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidValue { name, value: v });
            }
        }
        Ok(())
    }

    /// Noise-free reward and next resistance.
    pub fn mean_step(
        &self,
        state: YearState,
        hidden: HiddenEnvState,
        a: Action,
    ) -> (f64, HiddenEnvState) {
        let w = self.year_weights[state.index()];
        let e_itn = (1.0 - self.resistance_penalty * hidden.resistance) * a.itn.sqrt();
        let e_irs = a.irs.sqrt();
        let benefit = w * e_itn + (1.0 - w) * e_irs - self.interaction * e_itn * e_irs;
        let reward = self.benefit_scale * benefit - self.cost_scale * (a.itn + a.irs);
        let next = (self.resistance_decay * hidden.resistance + self.resistance_gain * a.itn)
            .clamp(0.0, 1.0);
        (reward, HiddenEnvState { resistance: next })
    }
}

/// Unobserved simulator state carried between years.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HiddenEnvState {
    pub resistance: f64,
}

/// One surrogate transition. Draws from `rng` only when noise is enabled.
pub fn surrogate_step<R: Rng + ?Sized>(
    state: YearState,
    hidden: HiddenEnvState,
    action: Action,
    params: &SurrogateParams,
    rng: &mut R,
) -> (f64, HiddenEnvState) {
    let (mut reward, next) = params.mean_step(state, hidden, action);
    if params.noise_enabled && params.noise_sd > 0.0 {
        let normal = Normal::new(0.0, params.noise_sd).expect("validated noise sd");
        reward += normal.sample(rng);
    }
    (reward, next)
}

/// Result of one environment step. `next_state` is `None` after year 5.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: YearState,
    pub action: Action,
    pub reward: f64,
    pub next_state: Option<YearState>,
}

impl Transition {
    pub fn is_terminal(&self) -> bool {
        self.next_state.is_none()
    }
}

/// Stateful surrogate environment with its own random stream and a global
/// step counter.
#[derive(Clone, Debug)]
pub struct SurrogateEnv {
    params: SurrogateParams,
    rng: ChaCha8Rng,
    steps: u64,
    current: Option<(YearState, HiddenEnvState)>,
}

impl SurrogateEnv {
    pub fn new(params: SurrogateParams, rng: ChaCha8Rng) -> Result<Self> {
        params.validate()?;
        Ok(SurrogateEnv {
            params,
            rng,
            steps: 0,
            current: None,
        })
    }

    pub fn params(&self) -> &SurrogateParams {
        &self.params
    }

    /// Total environment steps taken since construction.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn reset(&mut self) -> YearState {
        let first = YearState::first();
        self.current = Some((first, HiddenEnvState::default()));
        first
    }

    pub fn current_year(&self) -> Option<YearState> {
        self.current.map(|(s, _)| s)
    }

    pub fn step(&mut self, action: Action) -> Result<Transition> {
        let (state, hidden) = self.current.ok_or(Error::EpisodeNotStarted)?;
        if !action.is_valid() {
            return Err(Error::InvalidValue {
                name: "action",
                value: if (0.0..=1.0).contains(&action.itn) {
                    action.irs
                } else {
                    action.itn
                },
            });
        }
        let (reward, next_hidden) =
            surrogate_step(state, hidden, action, &self.params, &mut self.rng);
        self.steps += 1;
        let next_state = state.next();
        self.current = next_state.map(|s| (s, next_hidden));
        Ok(Transition {
            state,
            action,
            reward,
            next_state,
        })
    }

    /// Runs a full episode, resetting the hidden state first.
    pub fn run_episode<P>(&mut self, mut policy: P) -> Result<EpisodeTrace>
    where
        P: FnMut(YearState) -> Action,
    {
        let mut state = self.reset();
        let mut steps = Vec::with_capacity(YEARS);
        loop {
            let t = self.step(policy(state))?;
            steps.push(Step {
                state: t.state,
                action: t.action,
                reward: t.reward,
            });
            match t.next_state {
                Some(s) => state = s,
                None => break,
            }
        }
        let episodic_reward = steps.iter().map(|s| s.reward).sum();
        Ok(EpisodeTrace {
            steps,
            episodic_reward,
        })
    }

    pub fn context_free(&mut self) -> ContextFreeView<'_> {
        ContextFreeView { env: self }
    }

    pub fn contextual(&mut self) -> ContextualView<'_> {
        ContextualView { env: self }
    }

    pub fn mdp(&mut self) -> MdpView<'_> {
        MdpView { env: self }
    }

    pub fn view(&mut self, formulation: Formulation) -> FormulationView<'_> {
        match formulation {
            Formulation::ContextFree => FormulationView::ContextFree(self.context_free()),
            Formulation::Contextual => FormulationView::Contextual(self.contextual()),
            Formulation::Mdp => FormulationView::Mdp(self.mdp()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    ContextFree,
    Contextual,
    Mdp,
}

impl Formulation {
    pub const ALL: [Formulation; 3] = [
        Formulation::ContextFree,
        Formulation::Contextual,
        Formulation::Mdp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::ContextFree => "context_free",
            Formulation::Contextual => "contextual",
            Formulation::Mdp => "mdp",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context_free" | "context-free" => Ok(Formulation::ContextFree),
            "contextual" => Ok(Formulation::Contextual),
            "mdp" => Ok(Formulation::Mdp),
            other => Err(Error::Config(format!("unknown formulation `{other}`"))),
        }
    }
}

pub enum FormulationView<'a> {
    ContextFree(ContextFreeView<'a>),
    Contextual(ContextualView<'a>),
    Mdp(MdpView<'a>),
}

/// One action per episode, replayed every year; only the episodic reward is
/// visible.
pub struct ContextFreeView<'a> {
    env: &'a mut SurrogateEnv,
}

impl ContextFreeView<'_> {
    pub fn play(&mut self, action: Action) -> Result<f64> {
        Ok(self.env.run_episode(|_| action)?.episodic_reward)
    }
}

/// Per-year immediate rewards. Years are presented 1..=5 in order whatever
/// the actions.
pub struct ContextualView<'a> {
    env: &'a mut SurrogateEnv,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContextObservation {
    pub year: YearState,
    pub reward: f64,
}

impl ContextualView<'_> {
    pub fn begin(&mut self) -> YearState {
        self.env.reset()
    }

    /// Year whose action is due next, `None` once the episode is over.
    pub fn context(&self) -> Option<YearState> {
        self.env.current_year()
    }

    pub fn act(&mut self, action: Action) -> Result<ContextObservation> {
        let t = self.env.step(action)?;
        Ok(ContextObservation {
            year: t.state,
            reward: t.reward,
        })
    }
}

/// Full `(s, a, r, s')` transitions; the year-5 transition is terminal.
pub struct MdpView<'a> {
    env: &'a mut SurrogateEnv,
}

impl MdpView<'_> {
    pub fn reset(&mut self) -> YearState {
        self.env.reset()
    }

    pub fn step(&mut self, action: Action) -> Result<Transition> {
        self.env.step(action)
    }
}
