//! Small dense linear-algebra helpers on top of `faer`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// First jitter tried, relative to the signal variance.
pub const JITTER_START: f64 = 1e-8;
/// Largest relative jitter before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Cholesky factorization of a symmetric positive definite matrix, possibly
/// after adding a diagonal jitter.
#[derive(Debug, Clone)]
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes `a`; on failure retries with `jitter * scale` added to the
    /// diagonal, `jitter` growing tenfold from [`JITTER_START`] to
    /// [`JITTER_MAX`].
    pub fn new(a: &Mat<f64>, scale: f64) -> Result<Self> {
        if let Ok(llt) = a.llt(Side::Lower) {
            return Ok(Self { llt, jitter: 0.0 });
        }
        let mut rel = JITTER_START;
        let mut work = a.clone();
        let mut added = 0.0;
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let jitter = rel * scale;
            for i in 0..work.nrows() {
                work[(i, i)] += jitter - added;
            }
            added = jitter;
            if let Ok(llt) = work.llt(Side::Lower) {
                log::warn!("cholesky needed diagonal jitter {jitter:e}");
                return Ok(Self { llt, jitter });
            }
            rel *= 10.0;
        }
        Err(Error::NotPositiveDefinite { jitter: added })
    }

    pub fn l(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    /// Diagonal jitter that was added before the factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `A^-1 b`.
    pub fn solve(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(b)
    }

    /// `L^-1 b`.
    pub fn solve_lower(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let mut out = b.to_owned();
        self.llt.L().solve_lower_triangular_in_place(out.as_mut());
        out
    }

    /// `L^-T b`.
    pub fn solve_upper(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let mut out = b.to_owned();
        self.llt
            .L()
            .transpose()
            .solve_upper_triangular_in_place(out.as_mut());
        out
    }

    pub fn inverse(&self) -> Mat<f64> {
        self.llt.inverse()
    }
}

/// Column vector from a slice.
pub fn column(values: &[f64]) -> Mat<f64> {
    Mat::from_fn(values.len(), 1, |i, _| values[i])
}

/// Row `i` of `x` as an owned vector.
pub fn row(x: MatRef<'_, f64>, i: usize) -> Vec<f64> {
    (0..x.ncols()).map(|j| x[(i, j)]).collect()
}

/// Matrix from row-major nested vectors. All rows must have the same length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Shape("ragged rows".into()));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Rows of `x` selected by `idx`, in order.
pub fn select_rows(x: MatRef<'_, f64>, idx: &[usize]) -> Mat<f64> {
    Mat::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}
