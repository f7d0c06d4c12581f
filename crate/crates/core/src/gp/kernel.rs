use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Stationary covariance functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Matern52 {
        variance: f64,
        length_scale: f64,
    },
    Rbf {
        variance: f64,
        length_scale: f64,
    },
    /// `context(p[..split], q[..split]) · action(p[split..], q[split..])`
    Product {
        context: Box<Kernel>,
        action: Box<Kernel>,
        context_dims: usize,
    },
}

fn sq_dist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl Kernel {
    pub fn matern52(variance: f64, length_scale: f64) -> Result<Self> {
        check_hyper(variance, length_scale)?;
        Ok(Kernel::Matern52 {
            variance,
            length_scale,
        })
    }

    pub fn rbf(variance: f64, length_scale: f64) -> Result<Self> {
        check_hyper(variance, length_scale)?;
        Ok(Kernel::Rbf {
            variance,
            length_scale,
        })
    }

    pub fn product(context: Kernel, action: Kernel, context_dims: usize) -> Self {
        Kernel::Product {
            context: Box::new(context),
            action: Box::new(action),
            context_dims,
        }
    }

    pub fn eval(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        if p.len() != q.len() {
            return Err(Error::DimensionMismatch {
                left: p.len(),
                right: q.len(),
            });
        }
        if let Kernel::Product { context_dims, .. } = self {
            if p.len() <= *context_dims {
                return Err(Error::DimensionMismatch {
                    left: p.len(),
                    right: context_dims + 1,
                });
            }
        }
        Ok(self.eval_unchecked(p, q))
    }

    /// Same as [`eval`](Self::eval) without the dimension checks.
    pub(crate) fn eval_unchecked(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            Kernel::Matern52 {
                variance,
                length_scale,
            } => {
                let r = 5f64.sqrt() * sq_dist(p, q).sqrt() / length_scale;
                variance * (1.0 + r + r * r / 3.0) * (-r).exp()
            }
            Kernel::Rbf {
                variance,
                length_scale,
            } => variance * (-sq_dist(p, q) / (2.0 * length_scale * length_scale)).exp(),
            Kernel::Product {
                context,
                action,
                context_dims,
            } => {
                let (pc, pa) = p.split_at(*context_dims);
                let (qc, qa) = q.split_at(*context_dims);
                context.eval_unchecked(pc, qc) * action.eval_unchecked(pa, qa)
            }
        }
    }

    /// `k(p, p)`; constant for these stationary kernels.
    pub fn prior_variance(&self) -> f64 {
        match self {
            Kernel::Matern52 { variance, .. } | Kernel::Rbf { variance, .. } => *variance,
            Kernel::Product {
                context, action, ..
            } => context.prior_variance() * action.prior_variance(),
        }
    }
}

fn check_hyper(variance: f64, length_scale: f64) -> Result<()> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::InvalidValue {
            name: "kernel variance",
            value: variance,
        });
    }
    if !(length_scale > 0.0 && length_scale.is_finite()) {
        return Err(Error::InvalidValue {
            name: "kernel length scale",
            value: length_scale,
        });
    }
    Ok(())
}
