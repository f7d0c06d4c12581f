//! Sequential-decision optimizers for intervention planning.
//!
//! The crate bundles an episodic environment with three problem
//! formulations (context-free bandit, contextual bandit, MDP), the learners
//! evaluated on them, black-box baselines, and an experiment harness that
//! runs seeded repeats and writes CSV/JSON results.

pub mod blackbox;
pub mod env;
mod error;
pub mod gp;
pub mod harness;
pub mod mdp;
pub mod oracle;
pub mod tabular;

pub use error::{Error, Result};
