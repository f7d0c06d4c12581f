use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::Kernel;
use crate::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Affine map between raw targets and the zero-mean, unit-sd scale the GP
/// is fitted on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub scale: f64,
}

impl Standardization {
    pub fn identity() -> Self {
        Standardization {
            mean: 0.0,
            scale: 1.0,
        }
    }

    /// Sample mean and population sd; a degenerate sd maps to 1.
    pub fn from_targets(y: &[f64]) -> Self {
        if y.is_empty() {
            return Self::identity();
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        Standardization {
            mean,
            scale: if sd > 1e-12 { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        self.mean + self.scale * z
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Exact GP regression with a cached Cholesky factor of `K + σ²I`.
///
/// Observations can be appended one at a time; the factor is extended in
/// `O(n²)` instead of being recomputed. With `standardize` on, targets are
/// z-scored before fitting and predictions are mapped back.
#[derive(Clone, Debug)]
pub struct GpModel {
    kernel: Kernel,
    noise: f64,
    standardize: bool,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    jitter: f64,
    generation: u64,
    scaling: Standardization,
    /// `L⁻¹ y`
    whitened: DVector<f64>,
    /// `(K + σ²I)⁻¹ y`
    weights: DVector<f64>,
}

impl GpModel {
    pub fn new(kernel: Kernel, noise: f64) -> Result<Self> {
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidValue {
                name: "observation noise",
                value: noise,
            });
        }
        Ok(GpModel {
            kernel,
            noise,
            standardize: false,
            inputs: Vec::new(),
            targets: Vec::new(),
            chol: None,
            jitter: JITTER_START,
            generation: 0,
            scaling: Standardization::identity(),
            whitened: DVector::zeros(0),
            weights: DVector::zeros(0),
        })
    }

    pub fn standardized(mut self, on: bool) -> Self {
        self.standardize = on;
        self
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn scaling(&self) -> Standardization {
        self.scaling
    }

    /// Bumped whenever the factor is rebuilt from scratch.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub(crate) fn factor(&self) -> Option<&DMatrix<f64>> {
        self.chol.as_ref().map(|c| c.l_dirty())
    }

    pub(crate) fn whitened(&self) -> &DVector<f64> {
        &self.whitened
    }

    fn check_dims(&self, x: &[f64]) -> Result<()> {
        if let Some(first) = self.inputs.first() {
            if first.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    left: x.len(),
                    right: first.len(),
                });
            }
        }
        Ok(())
    }

    /// Replaces all observations and refactorizes.
    pub fn fit(&mut self, inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<()> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                left: inputs.len(),
                right: targets.len(),
            });
        }
        if let Some(first) = inputs.first() {
            if let Some(bad) = inputs.iter().find(|x| x.len() != first.len()) {
                return Err(Error::DimensionMismatch {
                    left: bad.len(),
                    right: first.len(),
                });
            }
            // surfaces kernel-level shape errors (product split) once
            self.kernel.eval(first, first)?;
        }
        self.inputs = inputs;
        self.targets = targets;
        self.jitter = JITTER_START;
        self.factorize()?;
        self.refresh_targets();
        Ok(())
    }

    /// Appends one observation, extending the factor incrementally.
    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        self.check_dims(&x)?;
        self.kernel.eval(&x, &x)?;
        let n = self.inputs.len();
        let extended = self.chol.as_ref().and_then(|chol| {
            let mut col = DVector::zeros(n + 1);
            for (i, xi) in self.inputs.iter().enumerate() {
                col[i] = self.kernel.eval_unchecked(xi, &x);
            }
            col[n] = self.kernel.eval_unchecked(&x, &x) + self.noise + self.jitter;
            let next = chol.insert_column(n, col);
            let d = next.l_dirty()[(n, n)];
            (d.is_finite() && d > 0.0).then_some(next)
        });
        self.inputs.push(x);
        self.targets.push(y);
        match extended {
            Some(chol) => self.chol = Some(chol),
            None => {
                if let Err(e) = self.factorize() {
                    self.inputs.pop();
                    self.targets.pop();
                    self.factorize()?;
                    self.refresh_targets();
                    return Err(e);
                }
            }
        }
        self.refresh_targets();
        Ok(())
    }

    fn factorize(&mut self) -> Result<()> {
        let n = self.inputs.len();
        self.generation += 1;
        if n == 0 {
            self.chol = None;
            return Ok(());
        }
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.kernel.eval_unchecked(&self.inputs[i], &self.inputs[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let mut jitter = self.jitter.max(JITTER_START);
        loop {
            let mut a = k.clone();
            for i in 0..n {
                a[(i, i)] += self.noise + jitter;
            }
            if let Some(chol) = Cholesky::new(a) {
                self.chol = Some(chol);
                self.jitter = jitter;
                return Ok(());
            }
            if jitter >= JITTER_MAX {
                self.chol = None;
                return Err(Error::Factorization { jitter });
            }
            jitter = (jitter * 10.0).min(JITTER_MAX);
        }
    }

    fn refresh_targets(&mut self) {
        self.scaling = if self.standardize {
            Standardization::from_targets(&self.targets)
        } else {
            Standardization::identity()
        };
        let y = DVector::from_iterator(
            self.targets.len(),
            self.targets.iter().map(|&t| self.scaling.apply(t)),
        );
        match &self.chol {
            Some(chol) => {
                self.whitened = chol
                    .l_dirty()
                    .solve_lower_triangular(&y)
                    .expect("positive diagonal");
                self.weights = chol.solve(&y);
            }
            None => {
                self.whitened = DVector::zeros(0);
                self.weights = DVector::zeros(0);
            }
        }
    }

    /// Posterior on the fitted (standardized) scale.
    pub fn posterior_standardized(&self, p: &[f64]) -> Result<Posterior> {
        self.check_dims(p)?;
        let prior = self.kernel.eval(p, p)?;
        let Some(chol) = &self.chol else {
            return Ok(Posterior {
                mean: 0.0,
                variance: prior,
            });
        };
        let k = DVector::from_iterator(
            self.len(),
            self.inputs.iter().map(|x| self.kernel.eval_unchecked(x, p)),
        );
        let v = chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("positive diagonal");
        Ok(Posterior {
            mean: k.dot(&self.weights),
            variance: (prior - v.norm_squared()).max(0.0),
        })
    }

    /// Posterior mean and variance at `p` on the target scale.
    pub fn posterior(&self, p: &[f64]) -> Result<Posterior> {
        let z = self.posterior_standardized(p)?;
        let s = self.scaling;
        Ok(Posterior {
            mean: s.invert(z.mean),
            variance: s.scale * s.scale * z.variance,
        })
    }
}

/// Free-function form of [`GpModel::posterior`].
pub fn gp_posterior(model: &GpModel, p: &[f64]) -> Result<Posterior> {
    model.posterior(p)
}
