//! Regularized least squares with rank-one updates and confidence coefficients.
//!
//! Observations are whitened by the assumed noise scale before they are
//! absorbed: `(x / sigma, y / sigma)`. The precision matrix is therefore
//! `V_s = sigma^-2 sum x x^T + I` and every unit-variance confidence formula
//! applies verbatim in these coordinates.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of rank-one updates between full refactorizations of the inverse.
const REFRESH_INTERVAL: u64 = 1024;

/// Choice of confidence coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BetaSpec {
    /// `(sqrt(2 log(1/delta) + log det V) + 1)^2`
    #[default]
    Logdet,
    /// `2 log t + d log log t`
    Simplified,
    Fixed { value: f64 },
}

impl BetaSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSpec::Fixed { value } if !(value > 0.0 && value.is_finite()) => {
                invalid(format!("fixed beta must be positive, got {value}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorState {
    dim: usize,
    step: u64,
    noise_scale: f64,
    precision: DMatrix<f64>,
    precision_inv: DMatrix<f64>,
    logdet: f64,
    data_sum: DVector<f64>,
    theta_hat: DVector<f64>,
}

impl EstimatorState {
    /// Fresh estimator for unit-variance observations.
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_noise_scale(dim, 1.0)
    }

    /// Fresh estimator that whitens observations by `noise_scale`.
    pub fn with_noise_scale(dim: usize, noise_scale: f64) -> Result<Self> {
        if dim == 0 {
            return invalid("estimator dimension must be >= 1");
        }
        if !(noise_scale > 0.0 && noise_scale.is_finite()) {
            return invalid(format!("noise scale must be positive, got {noise_scale}"));
        }
        Ok(Self {
            dim,
            step: 1,
            noise_scale,
            precision: DMatrix::identity(dim, dim),
            precision_inv: DMatrix::identity(dim, dim),
            logdet: 0.0,
            data_sum: DVector::zeros(dim),
            theta_hat: DVector::zeros(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One-based local time: number of absorbed observations plus one.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn precision_inv(&self) -> &DMatrix<f64> {
        &self.precision_inv
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn data_sum(&self) -> &DVector<f64> {
        &self.data_sum
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// Absorbs the observation `(x, y)`.
    ///
    /// The inverse is maintained by Sherman–Morrison and the estimate by the
    /// one-step correction `V^-1 x (y - <x, theta>) / (1 + |x|^2_{V^-1})`.
    pub fn update(&mut self, x: &DVector<f64>, y: f64) -> Result<()> {
        if x.len() != self.dim {
            return invalid(format!("update vector has dimension {} != {}", x.len(), self.dim));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return invalid("update data must be finite");
        }
        let xw = x / self.noise_scale;
        let yw = y / self.noise_scale;

        let vx = &self.precision_inv * &xw;
        let denom = 1.0 + xw.dot(&vx);
        if !(denom > 0.0) {
            return Err(Error::Numerical(format!(
                "rank-one update denominator {denom} is not positive"
            )));
        }
        let residual = yw - xw.dot(&self.theta_hat);

        self.precision.ger(1.0, &xw, &xw, 1.0);
        self.precision_inv.ger(-1.0 / denom, &vx, &vx, 1.0);
        symmetrize(&mut self.precision_inv);
        self.logdet += denom.ln();
        self.data_sum.axpy(yw, &xw, 1.0);
        self.theta_hat.axpy(residual / denom, &vx, 1.0);
        self.step += 1;

        if (self.step - 1) % REFRESH_INTERVAL == 0 {
            self.refactorize()?;
        }
        Ok(())
    }

    /// Recomputes inverse, log-determinant and estimate from the precision
    /// matrix and data sum.
    pub fn refactorize(&mut self) -> Result<()> {
        let chol = Cholesky::new(self.precision.clone())
            .ok_or_else(|| Error::Numerical("precision matrix lost definiteness".into()))?;
        self.logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        self.precision_inv = chol.inverse();
        symmetrize(&mut self.precision_inv);
        self.theta_hat = chol.solve(&self.data_sum);
        Ok(())
    }

    /// `sqrt(v^T V v)`, or `sqrt(v^T V^-1 v)` when `inverse` is set.
    pub fn weighted_norm(&self, v: &DVector<f64>, inverse: bool) -> Result<f64> {
        if v.len() != self.dim {
            return invalid(format!("vector has dimension {} != {}", v.len(), self.dim));
        }
        Ok(self.weighted_norm_sq_unchecked(v, inverse).sqrt())
    }

    pub(crate) fn weighted_norm_sq_unchecked(&self, v: &DVector<f64>, inverse: bool) -> f64 {
        let m = if inverse { &self.precision_inv } else { &self.precision };
        quad_form(m, v).max(0.0)
    }

    /// `|x|_{V^-1}` for a raw action vector.
    pub fn inv_norm(&self, x: &DVector<f64>) -> f64 {
        self.weighted_norm_sq_unchecked(x, true).sqrt()
    }

    /// Confidence coefficient in whitened units, scaled by `noise_std^2`.
    ///
    /// `global_t` is required by the simplified rate and clamped below at 3.
    pub fn beta(
        &self,
        spec: &BetaSpec,
        delta_inv: f64,
        noise_std: f64,
        global_t: Option<u64>,
    ) -> Result<f64> {
        if !(delta_inv >= 1.0) {
            return invalid(format!("delta_inv must be >= 1, got {delta_inv}"));
        }
        let var = noise_std * noise_std;
        match *spec {
            BetaSpec::Logdet => {
                let root = (2.0 * delta_inv.ln() + self.logdet.max(0.0)).sqrt() + 1.0;
                Ok(var * root * root)
            }
            BetaSpec::Simplified => {
                let Some(t) = global_t else {
                    return invalid("simplified beta requires the global time");
                };
                Ok(var * simplified_rate(t, self.dim))
            }
            BetaSpec::Fixed { value } => {
                spec.validate()?;
                Ok(value)
            }
        }
    }
}

/// `2 log t + d log log t` with `t` clamped to at least 3.
pub fn simplified_rate(t: u64, dim: usize) -> f64 {
    let t = t.max(3) as f64;
    2.0 * t.ln() + dim as f64 * t.ln().ln()
}

pub(crate) fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += m[(i, j)] * v[i];
        }
        acc += col * v[j];
    }
    acc
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
