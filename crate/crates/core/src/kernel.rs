//! Isotropic RBF covariance `k(x, x') = sf2 * exp(-|x - x'|^2 / (2 l^2))`.
//!
//! Hyperparameters are stored on log scale, so any real parameter vector is a
//! valid kernel.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    /// `log sf2`
    pub log_signal_variance: f64,
    /// `log l`
    pub log_lengthscale: f64,
    pub input_dim: usize,
}

impl RbfKernel {
    pub fn new(signal_variance: f64, lengthscale: f64, input_dim: usize) -> Result<Self> {
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(Error::Config(format!(
                "signal variance must be positive, got {signal_variance}"
            )));
        }
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::Config(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        Self::from_log_params([signal_variance.ln(), lengthscale.ln()], input_dim)
    }

    /// Builds a kernel from `[log sf2, log l]`.
    pub fn from_log_params(params: [f64; 2], input_dim: usize) -> Result<Self> {
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config(format!("non-finite kernel parameters {params:?}")));
        }
        Ok(Self {
            log_signal_variance: params[0],
            log_lengthscale: params[1],
            input_dim,
        })
    }

    pub fn log_params(&self) -> [f64; 2] {
        [self.log_signal_variance, self.log_lengthscale]
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    #[inline]
    pub(crate) fn from_sq_dist(&self, d2: f64) -> f64 {
        let l = self.lengthscale();
        self.signal_variance() * (-0.5 * d2 / (l * l)).exp()
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim || x2.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "kernel expects inputs of length {}, got {} and {}",
                self.input_dim,
                x.len(),
                x2.len()
            )));
        }
        let d2: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(self.from_sq_dist(d2))
    }

    fn check_cols(&self, x: MatRef<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::Shape(format!(
                "inputs have {} columns, kernel expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// `K(X, X)`.
    pub fn gram(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.check_cols(x)?;
        Ok(self.gram_from_sq_dists(&squared_distances(x)))
    }

    /// `K(X, X2)`.
    pub fn cross_gram(&self, x: MatRef<'_, f64>, x2: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.check_cols(x)?;
        self.check_cols(x2)?;
        Ok(self.gram_from_sq_dists(&cross_squared_distances(x, x2)))
    }

    /// Elementwise kernel over a precomputed squared-distance matrix.
    pub fn gram_from_sq_dists(&self, d2: &Mat<f64>) -> Mat<f64> {
        let sf2 = self.signal_variance();
        let l = self.lengthscale();
        let scale = -0.5 / (l * l);
        Mat::from_fn(d2.nrows(), d2.ncols(), |i, j| sf2 * (scale * d2[(i, j)]).exp())
    }

    /// `(dK/d log sf2, dK/d log l)`.
    pub fn gram_gradients(&self, x: MatRef<'_, f64>) -> Result<(Mat<f64>, Mat<f64>)> {
        self.check_cols(x)?;
        let d2 = squared_distances(x);
        let k = self.gram_from_sq_dists(&d2);
        let l2 = self.lengthscale().powi(2);
        let dl = Mat::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * d2[(i, j)] / l2);
        Ok((k, dl))
    }
}

/// Pairwise squared Euclidean distances between the rows of `x`.
pub fn squared_distances(x: MatRef<'_, f64>) -> Mat<f64> {
    let n = x.nrows();
    let mut out = Mat::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let mut s = 0.0;
            for p in 0..x.ncols() {
                let d = x[(i, p)] - x[(j, p)];
                s += d * d;
            }
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// Squared Euclidean distances between rows of `x` and rows of `x2`.
pub fn cross_squared_distances(x: MatRef<'_, f64>, x2: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(x.nrows(), x2.nrows(), |i, j| {
        let mut s = 0.0;
        for p in 0..x.ncols() {
            let d = x[(i, p)] - x2[(j, p)];
            s += d * d;
        }
        s
    })
}
