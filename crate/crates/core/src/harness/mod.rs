//! Experiment orchestration: the algorithm × formulation matrix, seeded
//! repeats with a fixed episode budget, greedy evaluation and result files.

mod config;
mod learners;
mod output;
mod run;

pub use config::{Algorithm, BetaKind, ExperimentConfig, Hyperparams};
pub use learners::{build_learner, Learner};
pub use output::{read_policy, write_results, GroupSummary, PolicyArtifact, Summary, CSV_HEADER};
pub use run::{replay_policy, run_experiment, run_repeat, seeded_streams, sweep, RunResult};
