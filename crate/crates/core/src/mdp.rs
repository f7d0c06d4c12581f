//! Learners for the sequential formulation: tabular Q-learning (with
//! ε-greedy or UCB action selection) and REINFORCE with a small soft-max
//! policy network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EpisodeTrace, YearState, NUM_ACTIONS, YEARS};
use crate::tabular::{argmax, sample_categorical, select_ucb, softmax, ValueTable};
use crate::{Error, Result};

/// State-action values over (year, action) with a discount factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub table: ValueTable,
    pub discount: f64,
}

impl QTable {
    pub fn new(alpha: f64, discount: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&discount) {
            return Err(Error::InvalidValue {
                name: "discount",
                value: discount,
            });
        }
        Ok(QTable {
            table: ValueTable::new(YEARS, NUM_ACTIONS, alpha)?,
            discount,
        })
    }

    pub fn values(&self, s: YearState) -> &[f64] {
        self.table.values(s.index())
    }

    pub fn counts(&self, s: YearState) -> &[u64] {
        self.table.counts(s.index())
    }

    pub fn greedy(&self, s: YearState) -> usize {
        self.table.greedy(s.index())
    }
}

/// One temporal-difference update. `next` is `None` on the terminal step,
/// in which case the target is the immediate reward alone.
pub fn q_learning_update(
    q: &mut QTable,
    s: YearState,
    action: usize,
    reward: f64,
    next: Option<YearState>,
) -> Result<()> {
    let target = match next {
        Some(n) => {
            let best_next = q
                .values(n)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            reward + q.discount * best_next
        }
        None => reward,
    };
    q.table.update(s.index(), action, target)
}

/// UCB over the state's row of the table, counting visits per (state, action).
pub fn select_td_cucb(q: &QTable, s: YearState, episode: u64, c: f64) -> usize {
    select_ucb(q.values(s), q.counts(s), episode, c)
}

/// Exact running mean and population variance of returns (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReturnTracker {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl ReturnTracker {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// z-score against the current statistics, sd floored at 1e-8.
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd().max(1e-8)
    }
}

/// Discounted returns `G_t = R_t + λ·G_{t+1}` for every step of an episode.
pub fn discounted_returns(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, &r) in out.iter_mut().zip(rewards).rev() {
        acc = r + discount * acc;
        *g = acc;
    }
    out
}

/// One-hot year → tanh hidden layer → soft-max over the discrete actions.
///
/// All weights live in one flat vector: hidden weights (hidden × years,
/// row-major), hidden biases, output weights (actions × hidden, row-major),
/// output biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNetwork {
    pub hidden: usize,
    pub actions: usize,
    pub alpha: f64,
    pub theta: Vec<f64>,
}

/// Activations kept from a forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

impl PolicyNetwork {
    /// Weights uniform in `[-0.1, 0.1]`, biases zero.
    pub fn new<R: Rng + ?Sized>(hidden: usize, actions: usize, alpha: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(hidden, actions, alpha);
        let (w1, w2) = (net.w1_range(), net.w2_range());
        for i in w1.chain(w2) {
            net.theta[i] = rng.random_range(-0.1..=0.1);
        }
        net
    }

    pub fn zeros(hidden: usize, actions: usize, alpha: f64) -> Self {
        let len = hidden * YEARS + hidden + actions * hidden + actions;
        PolicyNetwork {
            hidden,
            actions,
            alpha,
            theta: vec![0.0; len],
        }
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden * YEARS
    }

    fn b1_offset(&self) -> usize {
        self.hidden * YEARS
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let start = self.b1_offset() + self.hidden;
        start..start + self.actions * self.hidden
    }

    fn b2_offset(&self) -> usize {
        self.w2_range().end
    }

    pub fn forward(&self, s: YearState) -> Forward {
        let col = s.index();
        let b1 = self.b1_offset();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| (self.theta[j * YEARS + col] + self.theta[b1 + j]).tanh())
            .collect();
        let w2 = self.w2_range().start;
        let b2 = self.b2_offset();
        let logits: Vec<f64> = (0..self.actions)
            .map(|a| {
                let row = &self.theta[w2 + a * self.hidden..w2 + (a + 1) * self.hidden];
                row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + self.theta[b2 + a]
            })
            .collect();
        Forward {
            hidden,
            probs: softmax(&logits),
        }
    }

    /// Action probabilities for year `s`.
    pub fn policy_forward(&self, s: YearState) -> Vec<f64> {
        self.forward(s).probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: YearState, rng: &mut R) -> usize {
        sample_categorical(&self.policy_forward(s), rng)
    }

    pub fn greedy(&self, s: YearState) -> usize {
        argmax(&self.policy_forward(s))
    }

    /// `∇_θ log π(a | s)` by backpropagation, laid out like `theta`.
    pub fn grad_log_prob(&self, s: YearState, action: usize) -> Vec<f64> {
        let fwd = self.forward(s);
        let mut grad = vec![0.0; self.theta.len()];
        let w2 = self.w2_range().start;
        let b2 = self.b2_offset();
        let b1 = self.b1_offset();
        let mut back = vec![0.0; self.hidden];
        for a in 0..self.actions {
            let delta = if a == action { 1.0 } else { 0.0 } - fwd.probs[a];
            grad[b2 + a] = delta;
            for j in 0..self.hidden {
                grad[w2 + a * self.hidden + j] = delta * fwd.hidden[j];
                back[j] += delta * self.theta[w2 + a * self.hidden + j];
            }
        }
        for j in 0..self.hidden {
            let d = back[j] * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
            grad[j * YEARS + s.index()] = d;
            grad[b1 + j] = d;
        }
        grad
    }

    pub fn log_prob(&self, s: YearState, action: usize) -> f64 {
        self.policy_forward(s)[action].ln()
    }
}

/// Monte-Carlo policy-gradient update after a finished episode.
///
/// Each year's return is first added to that year's tracker, then
/// z-scored against it; the network moves along the sum of
/// `advantage_t · ∇ log π(a_t | s_t)`, all gradients taken at the
/// pre-update weights. `actions` are the discrete indices played.
pub fn reinforce_update(
    net: &mut PolicyNetwork,
    episode: &EpisodeTrace,
    actions: &[usize],
    tracker: &mut ReturnTracker,
    discount: f64,
) -> Result<()> {
    if episode.steps.len() != YEARS || actions.len() != YEARS {
        return Err(Error::DimensionMismatch {
            left: episode.steps.len(),
            right: YEARS,
        });
    }
    let returns = discounted_returns(&episode.rewards(), discount);
    let mut total = vec![0.0; net.theta.len()];
    // With fewer than two returns the sd is zero and the floored z-score
    // would be enormous, so the first episode only feeds the tracker.
    let warm = tracker.count >= 2;
    for ((step, &a), &g) in episode.steps.iter().zip(actions).zip(&returns) {
        if a >= net.actions {
            return Err(Error::IndexOutOfRange {
                index: a,
                len: net.actions,
            });
        }
        let advantage = if warm { tracker.normalize(g) } else { 0.0 };
        if advantage == 0.0 {
            continue;
        }
        for (t, d) in total.iter_mut().zip(net.grad_log_prob(step.state, a)) {
            *t += advantage * d;
        }
    }
    tracker.push(returns[0]);
    for (w, d) in net.theta.iter_mut().zip(total) {
        *w += net.alpha * d;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, Step};
    use crate::tabular::contextual_update;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn y(v: i64) -> YearState {
        YearState::new(v).unwrap()
    }

    #[test]
    fn terminal_update_uses_reward_only() {
        let mut q = QTable::new(0.9, 0.99).unwrap();
        q.table.set_value(0, 3, 1000.0).unwrap();
        q_learning_update(&mut q, y(5), 3, 100.0, None).unwrap();
        assert!((q.values(y(5))[3] - 90.0).abs() < 1e-12);
    }

    #[test]
    fn pure_bootstrap() {
        let mut q = QTable::new(1.0, 1.0).unwrap();
        q.table.set_value(2, 40, 50.0).unwrap();
        q_learning_update(&mut q, y(2), 7, 0.0, Some(y(3))).unwrap();
        assert_eq!(q.values(y(2))[7], 50.0);
        assert_eq!(q.counts(y(2))[7], 1);
    }

    #[test]
    fn invalid_discount() {
        assert!(QTable::new(0.9, 1.1).is_err());
    }

    #[test]
    fn td_cucb_fresh_and_per_state() {
        let mut q = QTable::new(0.9, 0.99).unwrap();
        assert_eq!(select_td_cucb(&q, y(1), 1, 2.0), 0);
        for (i, a) in (0..NUM_ACTIONS).enumerate() {
            assert_eq!(select_td_cucb(&q, y(1), i as u64 + 1, 2.0), a);
            q_learning_update(&mut q, y(1), a, 1.0, Some(y(2))).unwrap();
        }
        // state 2 still explores from the start
        assert_eq!(select_td_cucb(&q, y(2), 200, 2.0), 0);
    }

    #[test]
    fn td_cucb_bonus() {
        let mut q = QTable::new(0.9, 0.99).unwrap();
        let s = y(3);
        for a in 0..NUM_ACTIONS {
            q.table.update(s.index(), a, 0.0).unwrap();
        }
        for _ in 0..4 {
            for a in 1..NUM_ACTIONS {
                q.table.update(s.index(), a, 0.0).unwrap();
            }
        }
        // n = (1, 5, 5, ...), q = 0
        assert_eq!(select_td_cucb(&q, s, 10, 2.0), 0);
    }

    #[test]
    fn zero_weights_give_uniform_policy() {
        let net = PolicyNetwork::zeros(10, NUM_ACTIONS, 0.001);
        for s in YearState::all() {
            for p in net.policy_forward(s) {
                assert!((p - 1.0 / 121.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn output_bias_shift_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = PolicyNetwork::new(10, NUM_ACTIONS, 0.001, &mut rng);
        let mut shifted = net.clone();
        let b2 = shifted.b2_offset();
        for a in 0..NUM_ACTIONS {
            shifted.theta[b2 + a] += 3.7;
        }
        for s in YearState::all() {
            for (p, q) in net.policy_forward(s).iter().zip(shifted.policy_forward(s)) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_networks_give_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mut net = PolicyNetwork::zeros(10, NUM_ACTIONS, 0.001);
            for w in &mut net.theta {
                *w = rng.random_range(-5.0..5.0);
            }
            for s in YearState::all() {
                let p = net.policy_forward(s);
                assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-5;
        for _ in 0..5 {
            let mut net = PolicyNetwork::new(10, NUM_ACTIONS, 0.001, &mut rng);
            for w in &mut net.theta {
                *w = rng.random_range(-1.0..1.0);
            }
            let s = YearState::from_index(rng.random_range(0..YEARS)).unwrap();
            let a = rng.random_range(0..NUM_ACTIONS);
            let analytic = net.grad_log_prob(s, a);
            let numeric: Vec<f64> = (0..net.theta.len())
                .map(|i| {
                    let mut plus = net.clone();
                    plus.theta[i] += h;
                    let mut minus = net.clone();
                    minus.theta[i] -= h;
                    (plus.log_prob(s, a) - minus.log_prob(s, a)) / (2.0 * h)
                })
                .collect();
            let diff: f64 = analytic
                .iter()
                .zip(&numeric)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(diff / scale < 1e-4, "relative error {}", diff / scale);
        }
    }

    fn trace(rewards: [f64; 5]) -> EpisodeTrace {
        let steps = rewards
            .iter()
            .enumerate()
            .map(|(t, &r)| Step {
                state: YearState::from_index(t).unwrap(),
                action: Action { itn: 0.0, irs: 0.0 },
                reward: r,
            })
            .collect();
        EpisodeTrace {
            steps,
            episodic_reward: rewards.iter().sum(),
        }
    }

    #[test]
    fn undiscounted_first_return_is_episode_reward() {
        let t = trace([10.0, -3.0, 4.5, 8.0, 1.25]);
        let g = discounted_returns(&t.rewards(), 1.0);
        assert_eq!(g[0], t.episodic_reward);
    }

    #[test]
    fn zero_advantage_leaves_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut net = PolicyNetwork::new(10, NUM_ACTIONS, 0.001, &mut rng);
        let before = net.clone();
        // Undiscounted returns of this episode are all 50.
        let rewards = [0.0, 0.0, 0.0, 0.0, 50.0];
        let mut tracker = ReturnTracker::default();
        tracker.push(40.0);
        tracker.push(60.0);
        reinforce_update(
            &mut net,
            &trace(rewards),
            &[1, 2, 3, 4, 5],
            &mut tracker,
            1.0,
        )
        .unwrap();
        assert_eq!(net, before);
        assert_eq!(tracker.count, 3);
        assert_eq!(tracker.mean, 50.0);
    }

    #[test]
    fn first_episode_only_feeds_tracker() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = PolicyNetwork::new(10, NUM_ACTIONS, 0.001, &mut rng);
        let before = net.clone();
        let mut tracker = ReturnTracker::default();
        reinforce_update(
            &mut net,
            &trace([90.0, 0.0, 0.0, 0.0, 10.0]),
            &[0; 5],
            &mut tracker,
            1.0,
        )
        .unwrap();
        assert_eq!(net, before);
        assert_eq!(tracker.count, 1);
        assert_eq!(tracker.mean, 100.0);
    }

    #[test]
    fn reinforce_moves_toward_better_than_average_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut net = PolicyNetwork::new(10, NUM_ACTIONS, 0.05, &mut rng);
        let mut tracker = ReturnTracker::default();
        tracker.push(0.0);
        tracker.push(10.0);
        let s = y(1);
        let before = net.policy_forward(s)[7];
        reinforce_update(
            &mut net,
            &trace([100.0, 0.0, 0.0, 0.0, 0.0]),
            &[7, 0, 0, 0, 0],
            &mut tracker,
            1.0,
        )
        .unwrap();
        assert!(net.policy_forward(s)[7] > before);
    }

    #[test]
    fn welford_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..500).map(|_| rng.random_range(-300.0..600.0)).collect();
        let mut t = ReturnTracker::default();
        for &x in &xs {
            t.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((t.mean - mean).abs() < 1e-9);
        assert!((t.variance() - var).abs() < 1e-9 * var.max(1.0));
    }

    proptest! {
        #[test]
        fn returns_satisfy_recursion(
            rewards in prop::collection::vec(-200.0f64..200.0, 1..12),
            discount in 0.0f64..=1.0,
        ) {
            let g = discounted_returns(&rewards, discount);
            let n = rewards.len();
            prop_assert_eq!(g[n - 1], rewards[n - 1]);
            for t in 0..n - 1 {
                prop_assert!((g[t] - (rewards[t] + discount * g[t + 1])).abs() < 1e-9);
            }
        }

        #[test]
        fn zero_discount_equals_contextual_update(
            stream in prop::collection::vec((0usize..5, 0usize..NUM_ACTIONS, -100.0f64..100.0), 1..60),
        ) {
            let mut q = QTable::new(0.9, 0.0).unwrap();
            let mut c = ValueTable::contextual(0.9).unwrap();
            for (s, a, r) in stream {
                let state = YearState::from_index(s).unwrap();
                q_learning_update(&mut q, state, a, r, state.next()).unwrap();
                contextual_update(&mut c, state, a, r).unwrap();
            }
            prop_assert_eq!(&q.table, &c);
        }
    }
}
