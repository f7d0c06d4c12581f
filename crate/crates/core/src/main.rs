use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use malaria_policy::env::{DiscreteActionSet, Formulation, SurrogateParams};
use malaria_policy::harness::{
    read_policy, replay_policy, run_experiment, sweep, write_results, Algorithm, ExperimentConfig,
};
use malaria_policy::oracle::{OracleReport, PlanValue};

#[derive(Parser)]
#[command(
    name = "malaria-policy",
    version,
    about = "Bandit, RL and black-box policy search on an intervention surrogate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm on one formulation over seeded repeats.
    Run(RunArgs),
    /// Run every supported algorithm/formulation pair.
    Sweep(CommonArgs),
    /// Replay a stored policy and print its episode reward.
    Eval(EvalArgs),
    /// Print the exhaustive noise-free reference optima.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Total episodes per repeat; the last one is the greedy evaluation.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Base seed; repeat r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat TOML file overriding the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Disable environment noise.
    #[arg(long)]
    no_noise: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    formulation: Option<Formulation>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Policy JSON written by `run` or `sweep`.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Config file supplying surrogate parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    no_noise: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accepted for symmetry with the other commands; oracles are always
    /// noise-free.
    #[arg(long)]
    no_noise: bool,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

fn load(config: Option<&PathBuf>) -> Result<ExperimentConfig> {
    Ok(match config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    })
}

fn apply(mut cfg: ExperimentConfig, args: &CommonArgs) -> ExperimentConfig {
    if let Some(n) = args.episodes {
        cfg = cfg.with_episodes(n);
    }
    if let Some(n) = args.repeats {
        cfg.repeats = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if args.no_noise {
        cfg.surrogate.noise_enabled = false;
    }
    cfg
}

fn surrogate(config: Option<&PathBuf>, no_noise: bool) -> Result<SurrogateParams> {
    let mut params = load(config)?.surrogate;
    if no_noise {
        params.noise_enabled = false;
    }
    Ok(params)
}

fn describe(label: &str, plan: &PlanValue) {
    let grid = DiscreteActionSet::default();
    let actions: Vec<String> = plan
        .actions
        .iter()
        .map(|&j| {
            let a = grid.action(j).expect("grid index");
            format!("{j}=({:.1},{:.1})", a.itn, a.irs)
        })
        .collect();
    println!("{label:<14} {:>10.4}  {}", plan.reward, actions.join(" "));
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let mut cfg = apply(load(args.common.config.as_ref())?, &args.common);
            if let Some(a) = args.algo {
                cfg.algo = a;
            }
            if let Some(f) = args.formulation {
                cfg.formulation = f;
            }
            cfg.validate()?;
            let results = run_experiment(&cfg)?;
            write_results(&results, &cfg.out)?;
            let mean = results.iter().map(|r| r.eval_reward()).sum::<f64>() / results.len() as f64;
            println!(
                "{} {}: {} repeats, mean eval reward {mean:.4}, results in {}",
                cfg.algo,
                cfg.formulation,
                results.len(),
                cfg.out.display()
            );
        }
        Command::Sweep(args) => {
            let cfg = apply(load(args.config.as_ref())?, &args);
            let results = sweep(&cfg)?;
            write_results(&results, &cfg.out)?;
            println!("{} runs written to {}", results.len(), cfg.out.display());
        }
        Command::Eval(args) => {
            let policy = read_policy(&args.policy)
                .with_context(|| format!("loading {}", args.policy.display()))?;
            let params = surrogate(args.config.as_ref(), args.no_noise)?;
            println!("{:.6}", replay_policy(&policy, &params, args.seed)?);
        }
        Command::Oracle(args) => {
            let mut params = surrogate(args.config.as_ref(), true)?;
            params.noise_enabled = false;
            let report = OracleReport::compute(&params);
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                describe("context_free", &report.context_free);
                describe("greedy", &report.greedy);
                describe("dp", &report.dp);
                println!("dp grid value  {:>10.4}", report.dp_grid_value);
                println!(
                    "ordering       {}",
                    if report.ordering_holds() {
                        "context_free < greedy <= dp"
                    } else {
                        "VIOLATED"
                    }
                );
            }
        }
    }
    Ok(())
}
