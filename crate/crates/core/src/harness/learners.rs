use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::config::{Algorithm, ExperimentConfig, Hyperparams};
use crate::blackbox::{
    evaluate, BayesOpt, BlackBox, Encoding, GeneticAlgorithm, PolicySpace, RandomSearch,
};
use crate::env::{
    Action, DiscreteActionSet, Formulation, SurrogateEnv, YearState, NUM_ACTIONS, YEARS,
};
use crate::gp::{context_point, ucb_argmax, BetaSchedule, CandidatePosterior, GpModel, Kernel};
use crate::mdp::{
    q_learning_update, reinforce_update, select_td_cucb, PolicyNetwork, QTable, ReturnTracker,
};
use crate::tabular::{
    argmax, gradient_bandit_step, select_epsilon_greedy, select_ucb, EpsilonSchedule,
    PreferenceTable, ValueTable,
};
use crate::{Error, Result};

/// A learner trained one episode at a time against the shared environment.
pub trait Learner {
    /// Plays training episode `episode` (1-based) and returns its reward.
    fn train_episode(
        &mut self,
        env: &mut SurrogateEnv,
        episode: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64>;

    /// Exploration-free actions for years 1..5.
    fn greedy_policy(&self) -> Result<[Action; YEARS]>;

    /// Learned state for the policy artifact.
    fn state(&self) -> Value;
}

fn grid_action(index: usize) -> Result<Action> {
    DiscreteActionSet::default().action(index)
}

fn grid_units() -> Vec<Vec<f64>> {
    DiscreteActionSet::default()
        .actions()
        .map(|a| vec![a.itn, a.irs])
        .collect()
}

fn per_year(indices: [usize; YEARS]) -> Result<[Action; YEARS]> {
    let actions: Vec<Action> = indices
        .iter()
        .map(|&j| grid_action(j))
        .collect::<Result<_>>()?;
    Ok(actions.try_into().expect("one action per year"))
}

/// Plays `choose(year)` for every year of one episode and feeds each
/// immediate reward to `learn`. Context-free play replays year 1's choice.
fn play_bandit<C, L>(
    env: &mut SurrogateEnv,
    formulation: Formulation,
    mut choose: C,
    mut learn: L,
) -> Result<f64>
where
    C: FnMut(YearState) -> Result<usize>,
    L: FnMut(YearState, usize, f64) -> Result<()>,
{
    match formulation {
        Formulation::ContextFree => {
            let a = choose(YearState::first())?;
            let r = env.context_free().play(grid_action(a)?)?;
            learn(YearState::first(), a, r)?;
            Ok(r)
        }
        _ => {
            let mut view = env.contextual();
            let mut total = 0.0;
            let mut year = Some(view.begin());
            while let Some(s) = year {
                let a = choose(s)?;
                let obs = view.act(grid_action(a)?)?;
                learn(s, a, obs.reward)?;
                total += obs.reward;
                year = s.next();
            }
            Ok(total)
        }
    }
}

fn row(formulation: Formulation, s: YearState) -> usize {
    match formulation {
        Formulation::ContextFree => 0,
        _ => s.index(),
    }
}

#[derive(Clone, Copy, Debug)]
enum Selection {
    EpsilonGreedy(EpsilonSchedule),
    Ucb(f64),
}

struct ValueBandit {
    formulation: Formulation,
    selection: Selection,
    table: ValueTable,
}

impl Learner for ValueBandit {
    fn train_episode(
        &mut self,
        env: &mut SurrogateEnv,
        episode: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let (f, selection) = (self.formulation, self.selection);
        let table = std::cell::RefCell::new(&mut self.table);
        play_bandit(
            env,
            f,
            |s| {
                let t = table.borrow();
                let r = row(f, s);
                Ok(match selection {
                    Selection::EpsilonGreedy(schedule) => {
                        select_epsilon_greedy(t.values(r), schedule.value(episode - 1), rng)
                    }
                    Selection::Ucb(c) => select_ucb(t.values(r), t.counts(r), episode, c),
                })
            },
            |s, a, reward| table.borrow_mut().update(row(f, s), a, reward),
        )
    }

    fn greedy_policy(&self) -> Result<[Action; YEARS]> {
        per_year(std::array::from_fn(|t| {
            self.table.greedy(row(
                self.formulation,
                YearState::from_index(t).expect("year"),
            ))
        }))
    }

    fn state(&self) -> Value {
        json!({ "table": self.table })
    }
}

struct GradientBandit {
    formulation: Formulation,
    alpha: f64,
    /// One table for context-free play, one per year otherwise.
    tables: Vec<PreferenceTable>,
}

impl Learner for GradientBandit {
    fn train_episode(
        &mut self,
        env: &mut SurrogateEnv,
        _episode: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let (f, alpha) = (self.formulation, self.alpha);
        let tables = std::cell::RefCell::new(&mut self.tables);
        play_bandit(
            env,
            f,
            |s| Ok(tables.borrow()[row(f, s)].sample(rng)),
            |s, a, reward| {
                gradient_bandit_step(&mut tables.borrow_mut()[row(f, s)], a, reward, alpha)
            },
        )
    }

    fn greedy_policy(&self) -> Result<[Action; YEARS]> {
        per_year(std::array::from_fn(|t| {
            let s = YearState::from_index(t).expect("year");
            self.tables[row(self.formulation, s)].greedy()
        }))
    }

    fn state(&self) -> Value {
        json!({ "preferences": self.tables })
    }
}

/// Keeps the most recent `window` observations in `model`. Appends
/// incrementally while under the cap and refits once it slides.
fn feed_window(model: &mut GpModel, history: &[(Vec<f64>, f64)], window: usize) -> Result<()> {
    let seen = history.len();
    let start = seen.saturating_sub(window);
    let incremental = start == 0 && model.len() <= seen;
    if incremental {
        for (x, y) in &history[model.len()..] {
            model.push(x.clone(), *y)?;
        }
        return Ok(());
    }
    let (xs, ys): (Vec<_>, Vec<_>) = history[start..].iter().cloned().unzip();
    model.fit(xs, ys)
}

struct GpUcbLearner {
    model: GpModel,
    cache: CandidatePosterior,
    beta: BetaSchedule,
    window: usize,
    history: Vec<(Vec<f64>, f64)>,
}

impl GpUcbLearner {
    fn new(h: &Hyperparams) -> Result<Self> {
        let kernel = Kernel::matern52(h.gp_variance, h.gp_length_scale)?;
        Ok(GpUcbLearner {
            model: GpModel::new(kernel, h.gp_noise)?.standardized(true),
            cache: CandidatePosterior::new(grid_units()),
            beta: h.beta_schedule(2),
            window: h.gp_window,
            history: Vec::new(),
        })
    }
}

impl Learner for GpUcbLearner {
    fn train_episode(
        &mut self,
        env: &mut SurrogateEnv,
        episode: u64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        self.cache.sync(&self.model)?;
        let posteriors = self.cache.standardized(&self.model)?;
        let a = ucb_argmax(&posteriors, self.beta.value(episode).beta);
        let r = env.context_free().play(grid_action(a)?)?;
        self.history.push((self.cache.points()[a].clone(), r));
        feed_window(&mut self.model, &self.history, self.window)?;
        Ok(r)
    }

    fn greedy_policy(&self) -> Result<[Action; YEARS]> {
        let mut cache = self.cache.clone();
        cache.sync(&self.model)?;
        let means: Vec<f64> = cache
            .standardized(&self.model)?
            .iter()
            .map(|p| p.mean)
            .collect();
        per_year([argmax(&means); YEARS])
    }

    fn state(&self) -> Value {
        json!({ "inputs": self.model.inputs(), "targets": self.model.targets() })
    }
}

struct CgpUcbLearner {
    model: GpModel,
    caches: Vec<CandidatePosterior>,
    beta: BetaSchedule,
    window: usize,
    refit_every: u64,
    history: Vec<(Vec<f64>, f64)>,
}

impl CgpUcbLearner {
    fn new(h: &Hyperparams) -> Result<Self> {
        let kernel = Kernel::product(
            Kernel::rbf(h.context_variance, h.context_length_scale)?,
            Kernel::matern52(h.gp_variance, h.gp_length_scale)?,
            1,
        );
        let grid = grid_units();
        let caches = YearState::all()
            .map(|s| {
                CandidatePosterior::new(
                    grid.iter()
                        .map(|a| context_point(&[s.encode()], a))
                        .collect(),
                )
            })
            .collect();
        Ok(CgpUcbLearner {
            model: GpModel::new(kernel, h.gp_noise)?.standardized(true),
            caches,
            beta: h.beta_schedule(2),
            window: h.gp_window,
            refit_every: h.cgp_refit_episodes,
            history: Vec::new(),
        })
    }
}

impl Learner for CgpUcbLearner {
    fn train_episode(
        &mut self,
        env: &mut SurrogateEnv,
        episode: u64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let beta = self.beta.value(episode).beta;
        for cache in &mut self.caches {
            cache.sync(&self.model)?;
        }
        let mut view = env.contextual();
        let mut total = 0.0;
        let mut year = Some(view.begin());
        while let Some(s) = year {
            let cache = &self.caches[s.index()];
            let a = ucb_argmax(&cache.standardized(&self.model)?, beta);
            let obs = view.act(grid_action(a)?)?;
            self.history.push((cache.points()[a].clone(), obs.reward));
            total += obs.reward;
            year = s.next();
        }
        if episode % self.refit_every == 0 {
            feed_window(&mut self.model, &self.history, self.window)?;
        }
        Ok(total)
    }

    fn greedy_policy(&self) -> Result<[Action; YEARS]> {
        let mut model = self.model.clone();
        feed_window(&mut model, &self.history, self.window)?;
        let mut picks = [0; YEARS];
        for (slot, cache) in picks.iter_mut().zip(&self.caches) {
            let means: Vec<f64> = cache
                .points()
                .iter()
                .map(|p| model.posterior(p).map(|q| q.mean))
                .collect::<Result<_>>()?;
            *slot = argmax(&means);
        }
        per_year(picks)
    }

    fn state(&self) -> Value {
        json!({ "inputs": self.model.inputs(), "targets": self.model.targets() })
    }
}

struct TdLearner {
    selection: Selection,
    q: QTable,
}

impl Learner for TdLearner {
    fn train_episode(
        &mut self,
        env: &mut SurrogateEnv,
        episode: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let mut view = env.mdp();
        let mut s = view.reset();
        let mut total = 0.0;
        loop {
            let a = match self.selection {
                Selection::EpsilonGreedy(schedule) => {
                    select_epsilon_greedy(self.q.values(s), schedule.value(episode - 1), rng)
                }
                Selection::Ucb(c) => select_td_cucb(&self.q, s, episode, c),
            };
            let tr = view.step(grid_action(a)?)?;
            q_learning_update(&mut self.q, s, a, tr.reward, tr.next_state)?;
            total += tr.reward;
            match tr.next_state {
                Some(next) => s = next,
                None => return Ok(total),
            }
        }
    }

    fn greedy_policy(&self) -> Result<[Action; YEARS]> {
        per_year(std::array::from_fn(|t| {
            self.q.greedy(YearState::from_index(t).expect("year"))
        }))
    }

    fn state(&self) -> Value {
        json!({ "q": self.q })
    }
}

struct ReinforceLearner {
    net: PolicyNetwork,
    baseline: ReturnTracker,
    discount: f64,
}

impl Learner for ReinforceLearner {
    fn train_episode(
        &mut self,
        env: &mut SurrogateEnv,
        _episode: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let mut played = Vec::with_capacity(YEARS);
        let net = &self.net;
        let trace = env.run_episode(|s| {
            let a = net.sample(s, rng);
            played.push(a);
            grid_action(a).expect("network outputs grid indices")
        })?;
        reinforce_update(
            &mut self.net,
            &trace,
            &played,
            &mut self.baseline,
            self.discount,
        )?;
        Ok(trace.episodic_reward)
    }

    fn greedy_policy(&self) -> Result<[Action; YEARS]> {
        per_year(std::array::from_fn(|t| {
            self.net.greedy(YearState::from_index(t).expect("year"))
        }))
    }

    fn state(&self) -> Value {
        json!({ "network": self.net, "baseline": self.baseline })
    }
}

/// Wraps an ask/tell optimizer. Once the optimizer stops proposing, the
/// remaining training episodes replay its best policy.
struct BlackBoxLearner<O> {
    space: PolicySpace,
    opt: O,
    extra: fn(&O) -> Value,
}

impl<O: BlackBox> Learner for BlackBoxLearner<O> {
    fn train_episode(
        &mut self,
        env: &mut SurrogateEnv,
        _episode: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let x =
            match self.opt.ask(rng) {
                Some(x) => x,
                None => self.opt.incumbent().vector().cloned().ok_or_else(|| {
                    Error::Config("optimizer stopped before any evaluation".into())
                })?,
            };
        let r = evaluate(&self.space, env, &x)?;
        self.opt.tell(&x, r);
        Ok(r)
    }

    fn greedy_policy(&self) -> Result<[Action; YEARS]> {
        let best = self
            .opt
            .incumbent()
            .vector()
            .ok_or_else(|| Error::Config("no policy has been evaluated".into()))?;
        self.space.decode(best)
    }

    fn state(&self) -> Value {
        let mut v = json!({ "best": self.opt.incumbent() });
        if let (Value::Object(m), Value::Object(extra)) = (&mut v, (self.extra)(&self.opt)) {
            m.extend(extra);
        }
        v
    }
}

fn no_extra<O>(_: &O) -> Value {
    json!({})
}

/// Constructs the learner for `config.algo`, drawing any random
/// initialization from `rng`.
pub fn build_learner(config: &ExperimentConfig, rng: &mut dyn RngCore) -> Result<Box<dyn Learner>> {
    config.algo.check(config.formulation)?;
    let h = &config.hyper;
    let f = config.formulation;
    let rows = if f == Formulation::ContextFree {
        1
    } else {
        YEARS
    };
    let space = |encoding| PolicySpace::new(f, encoding);
    let bo = |encoding| -> Result<Box<dyn Learner>> {
        let mut bo_config = config.bo;
        bo_config.n_calls = bo_config.n_calls.min(config.train_episodes);
        bo_config.n_initial = bo_config.n_initial.min(bo_config.n_calls.saturating_sub(1));
        let kernel = Kernel::matern52(h.gp_variance, h.gp_length_scale)?;
        let space = space(encoding)?;
        Ok(Box::new(BlackBoxLearner {
            space,
            opt: BayesOpt::new(bo_config, space, kernel, h.gp_noise)?,
            extra: |o: &BayesOpt| json!({ "hedge": o.hedge(), "fallbacks": o.fallbacks() }),
        }))
    };
    let ga = |encoding| -> Result<Box<dyn Learner>> {
        let space = space(encoding)?;
        Ok(Box::new(BlackBoxLearner {
            space,
            opt: GeneticAlgorithm::new(config.ga, space)?,
            extra: |o: &GeneticAlgorithm| json!({ "generation_best": o.generation_best() }),
        }))
    };
    Ok(match config.algo {
        Algorithm::Egreedy => Box::new(ValueBandit {
            formulation: f,
            selection: Selection::EpsilonGreedy(h.epsilon()),
            table: ValueTable::new(rows, NUM_ACTIONS, h.alpha)?,
        }),
        Algorithm::Ucb => Box::new(ValueBandit {
            formulation: f,
            selection: Selection::Ucb(h.ucb_c),
            table: ValueTable::new(rows, NUM_ACTIONS, h.alpha)?,
        }),
        Algorithm::GradientBandit => Box::new(GradientBandit {
            formulation: f,
            alpha: h.bandit_pg_alpha,
            tables: vec![PreferenceTable::new(NUM_ACTIONS); rows],
        }),
        Algorithm::GpUcb => Box::new(GpUcbLearner::new(h)?),
        Algorithm::CgpUcb => Box::new(CgpUcbLearner::new(h)?),
        Algorithm::Qlearning => Box::new(TdLearner {
            selection: Selection::EpsilonGreedy(h.epsilon()),
            q: QTable::new(h.alpha, h.discount)?,
        }),
        Algorithm::TdCucb => Box::new(TdLearner {
            selection: Selection::Ucb(h.ucb_c),
            q: QTable::new(h.alpha, h.discount)?,
        }),
        Algorithm::Reinforce => Box::new(ReinforceLearner {
            net: PolicyNetwork::new(h.hidden_units, NUM_ACTIONS, h.reinforce_alpha, rng),
            baseline: ReturnTracker::default(),
            discount: h.discount,
        }),
        Algorithm::Random => Box::new(BlackBoxLearner {
            space: space(Encoding::Continuous)?,
            opt: RandomSearch::new(space(Encoding::Continuous)?),
            extra: no_extra::<RandomSearch>,
        }),
        Algorithm::Ga => ga(Encoding::Continuous)?,
        Algorithm::GaDiscrete => ga(Encoding::Discrete)?,
        Algorithm::Bo => bo(Encoding::Continuous)?,
        Algorithm::BoDiscrete => bo(Encoding::Discrete)?,
    })
}
