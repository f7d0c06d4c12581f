//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use malaria_policy::blackbox::hedge_probabilities;
use malaria_policy::blackbox::{ga_run, Encoding, GaConfig, PolicySpace};
use malaria_policy::env::{
    Formulation, SurrogateEnv, SurrogateParams, YearState, NUM_ACTIONS, YEARS,
};
use malaria_policy::gp::{gp_posterior, GpModel, Kernel};
use malaria_policy::harness::{
    build_learner, run_experiment, run_repeat, seeded_streams, write_results, Algorithm,
    ExperimentConfig, RunResult,
};
use malaria_policy::mdp::{q_learning_update, PolicyNetwork, QTable};
use malaria_policy::oracle::OracleReport;
use malaria_policy::tabular::{contextual_update, softmax, ValueTable};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pop_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

fn eval_rewards(results: &[RunResult]) -> Vec<f64> {
    results.iter().map(|r| r.eval_reward()).collect()
}

fn ucb_visits_and_jump() -> Check {
    let config = ExperimentConfig::new(Algorithm::Ucb, Formulation::ContextFree);
    let mut worst_gap = f64::INFINITY;
    for repeat in 0..20u64 {
        let (env_rng, mut rng) = seeded_streams(config.seed + repeat);
        let mut env =
            SurrogateEnv::new(config.surrogate.clone(), env_rng).map_err(|e| e.to_string())?;
        let mut learner = build_learner(&config, &mut rng).map_err(|e| e.to_string())?;
        let mut rewards = Vec::new();
        for episode in 1..=160u64 {
            rewards.push(
                learner
                    .train_episode(&mut env, episode, &mut rng)
                    .map_err(|e| e.to_string())?,
            );
            if episode == 121 {
                let counts: Vec<u64> =
                    serde_json::from_value(learner.state()["table"]["n"].clone())
                        .map_err(|e| e.to_string())?;
                if counts.len() != NUM_ACTIONS || counts.iter().any(|&c| c != 1) {
                    return Err(format!(
                        "repeat {repeat}: visit counts after 121 episodes are not all 1"
                    ));
                }
            }
        }
        let gap = mean(&rewards[121..160]) - mean(&rewards[..121]);
        if gap <= 0.0 {
            return Err(format!(
                "repeat {repeat}: mean(122..160) - mean(1..121) = {gap:.3}"
            ));
        }
        worst_gap = worst_gap.min(gap);
    }
    Ok(format!(
        "all 121 actions visited once in 20/20 repeats; smallest reward jump {worst_gap:.2}"
    ))
}

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn matern(d: f64, l: f64, var: f64) -> f64 {
    let r = 5f64.sqrt() * d / l;
    var * (1.0 + r + r * r / 3.0) * (-r).exp()
}

fn gp_dense_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for dataset in 0..20 {
        let n = rng.random_range(1..=30);
        let (l, var, noise) = (rng.random_range(0.2..2.0), rng.random_range(0.5..3.0), 0.1);
        let xs: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let dist =
            |p: &[f64; 2], q: &[f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        let mut model = GpModel::new(Kernel::matern52(var, l).map_err(|e| e.to_string())?, noise)
            .map_err(|e| e.to_string())?;
        model
            .fit(xs.iter().map(|p| p.to_vec()).collect(), ys.clone())
            .map_err(|e| e.to_string())?;
        // The model's diagonal is K + (noise + jitter) I; jitter starts at 1e-10.
        let diag = noise + model.jitter();
        let k: Vec<Vec<f64>> = xs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                xs.iter()
                    .enumerate()
                    .map(|(j, q)| matern(dist(p, q), l, var) + if i == j { diag } else { 0.0 })
                    .collect()
            })
            .collect();
        let alpha = dense_solve(k.clone(), ys.clone());
        for _ in 0..10 {
            let q = [rng.random::<f64>(), rng.random::<f64>()];
            let ks: Vec<f64> = xs.iter().map(|p| matern(dist(p, &q), l, var)).collect();
            let mu: f64 = ks.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            let v = dense_solve(k.clone(), ks.clone());
            let sigma2 = (var - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
            let got = gp_posterior(&model, &q).map_err(|e| e.to_string())?;
            worst = worst
                .max((got.mean - mu).abs())
                .max((got.variance - sigma2).abs());
        }
        if worst > 1e-8 {
            return Err(format!(
                "dataset {dataset} (n = {n}): max abs error {worst:.3e}"
            ));
        }
    }
    Ok(format!(
        "20 datasets x 10 queries, max abs error {worst:.2e} <= 1e-8"
    ))
}

fn reinforce_gradient() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let mut net = PolicyNetwork::new(10, NUM_ACTIONS, 0.001, &mut rng);
        for w in net.theta.iter_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        let s = YearState::from_index(rng.random_range(0..YEARS)).unwrap();
        let a = rng.random_range(0..NUM_ACTIONS);
        let analytic = net.grad_log_prob(s, a);
        let mut num = vec![0.0; analytic.len()];
        for i in 0..analytic.len() {
            let orig = net.theta[i];
            net.theta[i] = orig + h;
            let up = net.log_prob(s, a);
            net.theta[i] = orig - h;
            let down = net.log_prob(s, a);
            net.theta[i] = orig;
            num[i] = (up - down) / (2.0 * h);
        }
        let diff: f64 = analytic
            .iter()
            .zip(&num)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(num.iter().map(|x| x * x).sum::<f64>().sqrt());
        let rel = diff / scale.max(1e-12);
        if rel >= 1e-4 {
            return Err(format!("case {case}: relative error {rel:.3e}"));
        }
        worst = worst.max(rel);
    }
    Ok(format!(
        "20 random (theta, s, a), worst relative error {worst:.2e} < 1e-4"
    ))
}

fn normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_sum: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for _ in 0..1000 {
        let prefs: Vec<f64> = (0..NUM_ACTIONS)
            .map(|_| rng.random_range(-50.0..50.0))
            .collect();
        let gains: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
        let eta = rng.random_range(0.0..3.0);
        let c = rng.random_range(-100.0..100.0);
        let shifted = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
        for (p, q) in [
            (softmax(&prefs), softmax(&shifted(&prefs))),
            (
                hedge_probabilities(&gains, eta),
                hedge_probabilities(&shifted(&gains), eta),
            ),
        ] {
            worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
            for (a, b) in p.iter().zip(&q) {
                worst_shift = worst_shift.max((a - b).abs());
            }
        }
        let mut net = PolicyNetwork::zeros(10, NUM_ACTIONS, 0.001);
        for w in net.theta.iter_mut() {
            *w = rng.random_range(-5.0..5.0);
        }
        let s = YearState::from_index(rng.random_range(0..YEARS)).unwrap();
        worst_sum = worst_sum.max((net.policy_forward(s).iter().sum::<f64>() - 1.0).abs());
    }
    ensure(
        worst_sum <= 1e-12 && worst_shift <= 1e-12,
        format!("1000 inputs: max |sum - 1| = {worst_sum:.1e}, max shift change = {worst_shift:.1e} (tol 1e-12)"),
    )
}

fn budget_and_determinism() -> Check {
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    let pairs = Algorithm::matrix();
    for (algo, formulation) in &pairs {
        let config = ExperimentConfig {
            repeats: 1,
            seed: 3,
            ..ExperimentConfig::new(*algo, *formulation)
        };
        let mut csvs = Vec::new();
        for dir in &dirs {
            let results = run_experiment(&config).map_err(|e| e.to_string())?;
            for r in &results {
                if r.env_steps != 2000 {
                    return Err(format!(
                        "{algo} on {formulation}: {} env steps",
                        r.env_steps
                    ));
                }
            }
            let out = dir.path().join(format!("{algo}_{formulation}"));
            write_results(&results, &out).map_err(|e| e.to_string())?;
            csvs.push(std::fs::read(out.join("results.csv")).map_err(|e| e.to_string())?);
        }
        if csvs[0] != csvs[1] {
            return Err(format!(
                "{algo} on {formulation}: results.csv differs between identical runs"
            ));
        }
    }
    Ok(format!(
        "{} pairs: 2000 steps per repeat, byte-identical results.csv",
        pairs.len()
    ))
}

fn ga_elitism() -> Check {
    let mut runs = 0;
    for encoding in [Encoding::Continuous, Encoding::Discrete] {
        let space =
            PolicySpace::new(Formulation::Contextual, encoding).map_err(|e| e.to_string())?;
        for seed in 0..20u64 {
            let (env_rng, mut rng) = seeded_streams(seed);
            let mut env = SurrogateEnv::new(SurrogateParams::default(), env_rng)
                .map_err(|e| e.to_string())?;
            let out = ga_run(GaConfig::default(), space, 399, &mut env, &mut rng)
                .map_err(|e| e.to_string())?;
            if out.generation_best.windows(2).any(|w| w[1] < w[0]) {
                return Err(format!(
                    "{encoding:?} seed {seed}: {:?}",
                    out.generation_best
                ));
            }
            runs += 1;
        }
    }
    Ok(format!(
        "{runs} runs, per-generation best fitness never decreased"
    ))
}

fn formulation_ordering() -> Check {
    let run = |algo, formulation| {
        run_experiment(&ExperimentConfig::new(algo, formulation))
            .map(|r| eval_rewards(&r))
            .map_err(|e| e.to_string())
    };
    let cf = run(Algorithm::Ucb, Formulation::ContextFree)?;
    let ctx = run(Algorithm::Ucb, Formulation::Contextual)?;
    let td = run(Algorithm::TdCucb, Formulation::Mdp)?;
    let effect =
        |a: &[f64], b: &[f64]| (mean(a) - mean(b)) / ((pop_var(a) + pop_var(b)) / 2.0).sqrt();
    let (d_hi, d_lo) = (effect(&td, &ctx), effect(&ctx, &cf));
    let oracle = OracleReport::compute(&SurrogateParams::noiseless());
    let detail = format!(
        "eval means td_cucb/mdp {:.2} > ucb/contextual {:.2} > ucb/context_free {:.2}; gaps {d_hi:.2} and {d_lo:.2} pooled sd (need > 0.25); oracle {:.2} < {:.2} <= {:.2}",
        mean(&td),
        mean(&ctx),
        mean(&cf),
        oracle.context_free.reward,
        oracle.greedy.reward,
        oracle.dp.reward
    );
    ensure(
        d_hi > 0.25 && d_lo > 0.25 && oracle.ordering_holds(),
        detail,
    )
}

fn bo_beats_random() -> Check {
    let mut wins = 0;
    for repeat in 0..20 {
        let bo = run_repeat(
            &ExperimentConfig::new(Algorithm::Bo, Formulation::Contextual),
            repeat,
        )
        .map_err(|e| e.to_string())?;
        let rs = run_repeat(
            &ExperimentConfig::new(Algorithm::Random, Formulation::Contextual),
            repeat,
        )
        .map_err(|e| e.to_string())?;
        if bo.eval_reward() > rs.eval_reward() {
            wins += 1;
        }
    }
    ensure(
        wins >= 16,
        format!("BO beat random search in {wins}/20 paired repeats (need >= 16)"),
    )
}

fn td_zero_matches_contextual() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for stream in 0..1000 {
        let alpha = rng.random_range(0.01..=1.0);
        let mut q = QTable::new(alpha, 0.0).map_err(|e| e.to_string())?;
        let mut table = ValueTable::contextual(alpha).map_err(|e| e.to_string())?;
        for _ in 0..rng.random_range(1..60) {
            let s = YearState::from_index(rng.random_range(0..YEARS)).unwrap();
            let a = rng.random_range(0..NUM_ACTIONS);
            let r = rng.random_range(-100.0..200.0);
            q_learning_update(&mut q, s, a, r, s.next()).map_err(|e| e.to_string())?;
            contextual_update(&mut table, s, a, r).map_err(|e| e.to_string())?;
        }
        for s in YearState::all() {
            let same_q = q
                .values(s)
                .iter()
                .zip(table.values(s.index()))
                .all(|(x, y)| x.to_bits() == y.to_bits());
            if !same_q || q.counts(s) != table.counts(s.index()) {
                return Err(format!(
                    "stream {stream}: tables diverge in year {}",
                    s.year()
                ));
            }
        }
    }
    Ok("1000 random streams, bitwise-identical values and counts".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        (
            "AC1 episode-121 jump for context-free UCB",
            ucb_visits_and_jump,
        ),
        ("AC2 GP posterior vs dense solve", gp_dense_oracle),
        (
            "AC3 REINFORCE gradient vs finite differences",
            reinforce_gradient,
        ),
        ("AC4 softmax and hedge normalization", normalization),
        ("AC5 step budget and determinism", budget_and_determinism),
        ("AC6 GA elitism", ga_elitism),
        ("AC7 formulation ordering", formulation_ordering),
        ("AC8 BO beats random search (contextual)", bo_beats_random),
        (
            "AC9 TD(lambda = 0) equals contextual update",
            td_zero_matches_contextual,
        ),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
