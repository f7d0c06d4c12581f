use super::model::{GpModel, Posterior};
use crate::{Error, Result};

/// Posterior over a fixed candidate set, kept in sync with a growing model.
///
/// Stores `V = L⁻¹ K(X, C)` row by row. Appending an observation adds one
/// row in `O(n·m)`; a model refit (new generation) rebuilds all rows.
#[derive(Clone, Debug)]
pub struct CandidatePosterior {
    points: Vec<Vec<f64>>,
    prior: Vec<f64>,
    rows: Vec<Vec<f64>>,
    sumsq: Vec<f64>,
    generation: u64,
}

impl CandidatePosterior {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        let m = points.len();
        CandidatePosterior {
            points,
            prior: Vec::new(),
            rows: Vec::new(),
            sumsq: vec![0.0; m],
            generation: u64::MAX,
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sync(&mut self, model: &GpModel) -> Result<()> {
        if let (Some(c), Some(x)) = (self.points.first(), model.inputs().first()) {
            if c.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    left: c.len(),
                    right: x.len(),
                });
            }
        }
        let kernel = model.kernel();
        if self.prior.len() != self.points.len() {
            self.prior = self
                .points
                .iter()
                .map(|c| kernel.eval_unchecked(c, c))
                .collect();
        }
        if self.generation != model.generation() || self.rows.len() > model.len() {
            self.rows.clear();
            self.sumsq.iter_mut().for_each(|s| *s = 0.0);
            self.generation = model.generation();
        }
        let Some(l) = model.factor() else {
            return Ok(());
        };
        for i in self.rows.len()..model.len() {
            let xi = &model.inputs()[i];
            let mut row: Vec<f64> = self
                .points
                .iter()
                .map(|c| kernel.eval_unchecked(xi, c))
                .collect();
            for (j, prev) in self.rows.iter().enumerate() {
                let lij = l[(i, j)];
                for (r, p) in row.iter_mut().zip(prev) {
                    *r -= lij * p;
                }
            }
            let lii = l[(i, i)];
            for (r, s) in row.iter_mut().zip(self.sumsq.iter_mut()) {
                *r /= lii;
                *s += *r * *r;
            }
            self.rows.push(row);
        }
        Ok(())
    }

    fn check_synced(&self, model: &GpModel) -> Result<()> {
        if self.generation != model.generation() || self.rows.len() != model.len() {
            return Err(Error::Config(
                "candidate posterior is out of sync with its model".into(),
            ));
        }
        Ok(())
    }

    /// Posterior at every candidate on the model's standardized scale.
    pub fn standardized(&self, model: &GpModel) -> Result<Vec<Posterior>> {
        if model.is_empty() {
            return Ok(self
                .prior
                .iter()
                .map(|&v| Posterior {
                    mean: 0.0,
                    variance: v,
                })
                .collect());
        }
        self.check_synced(model)?;
        let mut means = vec![0.0; self.points.len()];
        for (row, &w) in self.rows.iter().zip(model.whitened().iter()) {
            for (m, r) in means.iter_mut().zip(row) {
                *m += w * r;
            }
        }
        Ok(means
            .into_iter()
            .zip(self.prior.iter().zip(&self.sumsq))
            .map(|(mean, (p, s))| Posterior {
                mean,
                variance: (p - s).max(0.0),
            })
            .collect())
    }

    /// Posterior at every candidate on the target scale.
    pub fn predict(&self, model: &GpModel) -> Result<Vec<Posterior>> {
        let s = model.scaling();
        Ok(self
            .standardized(model)?
            .into_iter()
            .map(|z| Posterior {
                mean: s.invert(z.mean),
                variance: s.scale * s.scale * z.variance,
            })
            .collect())
    }
}
