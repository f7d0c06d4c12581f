//! Gaussian-process regression and the GP-UCB family of selectors.
//!
//! The model is an exact GP with fixed hyperparameters. A small jitter is
//! added to the diagonal and escalated (1e-10 up to 1e-6) only when the
//! Cholesky factorization fails.

mod cache;
mod kernel;
mod model;
mod ucb;

pub use cache::CandidatePosterior;
pub use kernel::Kernel;
pub use model::{gp_posterior, GpModel, Posterior, Standardization};
pub use ucb::{
    beta_value, cgp_ucb_select, context_point, gp_ucb_select, ucb_argmax, BetaSchedule, BetaValue,
    BETA_FLOOR,
};
