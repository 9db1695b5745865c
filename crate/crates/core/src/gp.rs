//! Exact multi-output GP regression with independent outputs sharing one
//! kernel.
//!
//! Output coordinates whose noise columns are identical share one Cholesky
//! factorization of `K_N + diag(noise)`. With shared scalar noise that is a
//! single factorization for all `D` coordinates; with per-coordinate noise
//! (the Dirichlet baseline) it is one per distinct column.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::kernel::{squared_distances, RbfKernel};
use crate::linalg::Cholesky;
use crate::optim::{adam_ascent, OptConfig, OptOutcome};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Negative predictive variances above this are treated as round-off.
pub const VARIANCE_ROUNDOFF: f64 = 1e-10;

/// Observation noise variances of the pseudo-observations.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseVariance {
    /// One variance for every datum and coordinate.
    Shared(f64),
    /// One variance per datum, shared across coordinates.
    PerPoint(Vec<f64>),
    /// One column of per-datum variances for each output coordinate.
    PerEntry(Vec<Vec<f64>>),
}

/// Regression targets `Z` (`N x D`) with their noise variances.
#[derive(Debug, Clone)]
pub struct PseudoObservations {
    targets: Mat<f64>,
    noise: NoiseVariance,
}

impl PseudoObservations {
    pub fn new(targets: Mat<f64>, noise: NoiseVariance) -> Result<Self> {
        let (n, d) = (targets.nrows(), targets.ncols());
        if n == 0 || d == 0 {
            return Err(Error::InvalidDimension(format!(
                "pseudo-observations need N >= 1 and D >= 1, got {n} x {d}"
            )));
        }
        for i in 0..n {
            for j in 0..d {
                if !targets[(i, j)].is_finite() {
                    return Err(Error::Domain(format!("non-finite target at ({i}, {j})")));
                }
            }
        }
        let positive = |v: &f64| *v > 0.0 && v.is_finite();
        match &noise {
            NoiseVariance::Shared(s) => {
                if !positive(s) {
                    return Err(Error::Domain(format!("noise variance must be positive, got {s}")));
                }
            }
            NoiseVariance::PerPoint(v) => {
                if v.len() != n {
                    return Err(Error::Shape(format!("{} noise variances for {n} points", v.len())));
                }
                if !v.iter().all(positive) {
                    return Err(Error::Domain("noise variances must be positive".into()));
                }
            }
            NoiseVariance::PerEntry(cols) => {
                if cols.len() != d || cols.iter().any(|c| c.len() != n) {
                    return Err(Error::Shape(format!(
                        "per-entry noise must have {d} columns of length {n}"
                    )));
                }
                if !cols.iter().flatten().all(positive) {
                    return Err(Error::Domain("noise variances must be positive".into()));
                }
            }
        }
        Ok(Self { targets, noise })
    }

    pub fn targets(&self) -> MatRef<'_, f64> {
        self.targets.as_ref()
    }

    pub fn noise(&self) -> &NoiseVariance {
        &self.noise
    }

    pub fn len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.targets.ncols()
    }

    /// Scalar noise variance, if the noise is shared.
    pub fn shared_noise(&self) -> Option<f64> {
        match self.noise {
            NoiseVariance::Shared(s) => Some(s),
            _ => None,
        }
    }

    /// Noise variance of datum `i` in coordinate `d`.
    pub fn noise_at(&self, i: usize, d: usize) -> f64 {
        match &self.noise {
            NoiseVariance::Shared(s) => *s,
            NoiseVariance::PerPoint(v) => v[i],
            NoiseVariance::PerEntry(cols) => cols[d][i],
        }
    }

    /// Per-coordinate noise added to predictions of a new observation: the
    /// largest training variance in that coordinate.
    pub fn test_noise(&self) -> Vec<f64> {
        let d = self.dim();
        match &self.noise {
            NoiseVariance::Shared(s) => vec![*s; d],
            NoiseVariance::PerPoint(v) => vec![v.iter().copied().fold(0.0, f64::max); d],
            NoiseVariance::PerEntry(cols) => cols
                .iter()
                .map(|c| c.iter().copied().fold(0.0, f64::max))
                .collect(),
        }
    }

    /// Coordinates grouped by identical noise column, in first-seen order.
    pub(crate) fn noise_groups(&self) -> Vec<NoiseGroup> {
        let n = self.len();
        let d = self.dim();
        match &self.noise {
            NoiseVariance::Shared(s) => vec![NoiseGroup {
                diag: vec![*s; n],
                coords: (0..d).collect(),
            }],
            NoiseVariance::PerPoint(v) => vec![NoiseGroup {
                diag: v.clone(),
                coords: (0..d).collect(),
            }],
            NoiseVariance::PerEntry(cols) => {
                let mut groups: Vec<NoiseGroup> = Vec::new();
                for (c, col) in cols.iter().enumerate() {
                    match groups.iter_mut().find(|g| g.diag == *col) {
                        Some(g) => g.coords.push(c),
                        None => groups.push(NoiseGroup {
                            diag: col.clone(),
                            coords: vec![c],
                        }),
                    }
                }
                groups
            }
        }
    }

    /// Target columns listed in `coords`, as an `N x |coords|` matrix.
    pub(crate) fn target_columns(&self, coords: &[usize]) -> Mat<f64> {
        Mat::from_fn(self.len(), coords.len(), |i, j| self.targets[(i, coords[j])])
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NoiseGroup {
    pub diag: Vec<f64>,
    pub coords: Vec<usize>,
}

/// Gaussian predictive distribution over the `D` latent coordinates, with
/// independent coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPredictive {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl LatentPredictive {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Adds `extra[d]` to each coordinate's variance.
    pub fn with_added_variance(mut self, extra: &[f64]) -> Self {
        for (v, e) in self.variance.iter_mut().zip(extra) {
            *v += e;
        }
        self
    }
}

pub(crate) fn clamp_variance(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        if v < -VARIANCE_ROUNDOFF {
            log::warn!("predictive variance {v:e} clamped to zero");
        }
        0.0
    }
}

fn check_inputs(x: MatRef<'_, f64>, kernel: &RbfKernel, pseudo: &PseudoObservations) -> Result<()> {
    if x.nrows() != pseudo.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} pseudo-observations",
            x.nrows(),
            pseudo.len()
        )));
    }
    if x.ncols() != kernel.input_dim {
        return Err(Error::Shape(format!(
            "inputs have {} columns, kernel expects {}",
            x.ncols(),
            kernel.input_dim
        )));
    }
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if !x[(i, j)].is_finite() {
                return Err(Error::Domain(format!("non-finite input at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Everything about the training problem that does not depend on the
/// kernel hyperparameters.
struct Problem<'a> {
    sq_dists: Mat<f64>,
    groups: Vec<NoiseGroup>,
    group_targets: Vec<Mat<f64>>,
    pseudo: &'a PseudoObservations,
    input_dim: usize,
}

struct GroupSolve {
    chol: Cholesky,
    // (K + diag)^-1 Z_g
    alpha: Mat<f64>,
}

impl<'a> Problem<'a> {
    fn new(x: MatRef<'_, f64>, pseudo: &'a PseudoObservations) -> Self {
        let groups = pseudo.noise_groups();
        let group_targets = groups.iter().map(|g| pseudo.target_columns(&g.coords)).collect();
        Self {
            sq_dists: squared_distances(x),
            groups,
            group_targets,
            pseudo,
            input_dim: x.ncols(),
        }
    }

    fn kernel(&self, params: &[f64]) -> Result<RbfKernel> {
        RbfKernel::from_log_params([params[0], params[1]], self.input_dim)
    }

    fn solve_groups(&self, kernel: &RbfKernel, gram: &Mat<f64>) -> Result<Vec<GroupSolve>> {
        self.groups
            .iter()
            .zip(&self.group_targets)
            .map(|(g, z)| {
                let mut a = gram.clone();
                for (i, s) in g.diag.iter().enumerate() {
                    a[(i, i)] += s;
                }
                let chol = Cholesky::new(&a, kernel.signal_variance())?;
                let alpha = chol.solve(z.as_ref());
                Ok(GroupSolve { chol, alpha })
            })
            .collect()
    }

    fn mll_from_solves(&self, solves: &[GroupSolve]) -> f64 {
        let n = self.pseudo.len() as f64;
        let d = self.pseudo.dim() as f64;
        let mut value = -0.5 * n * d * LN_2PI;
        for ((g, s), z) in self.groups.iter().zip(solves).zip(&self.group_targets) {
            let mut quad = 0.0;
            for c in 0..z.ncols() {
                for i in 0..z.nrows() {
                    quad += z[(i, c)] * s.alpha[(i, c)];
                }
            }
            value -= 0.5 * quad + 0.5 * g.coords.len() as f64 * s.chol.log_det();
        }
        value
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        let kernel = self.kernel(params)?;
        let gram = kernel.gram_from_sq_dists(&self.sq_dists);
        let solves = self.solve_groups(&kernel, &gram)?;
        Ok(self.mll_from_solves(&solves))
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let kernel = self.kernel(params)?;
        let gram = kernel.gram_from_sq_dists(&self.sq_dists);
        let solves = self.solve_groups(&kernel, &gram)?;
        let value = self.mll_from_solves(&solves);
        let inv_l2 = 1.0 / kernel.lengthscale().powi(2);
        let n = gram.nrows();
        let mut grad_sf = 0.0;
        let mut grad_ell = 0.0;
        for (g, s) in self.groups.iter().zip(&solves) {
            let a_inv = s.chol.inverse();
            let aat = &s.alpha * s.alpha.transpose();
            let count = g.coords.len() as f64;
            for j in 0..n {
                for i in 0..n {
                    let w = aat[(i, j)] - count * a_inv[(i, j)];
                    let k = gram[(i, j)];
                    grad_sf += w * k;
                    grad_ell += w * k * self.sq_dists[(i, j)] * inv_l2;
                }
            }
        }
        Ok((value, vec![0.5 * grad_sf, 0.5 * grad_ell]))
    }
}

/// Log marginal likelihood `sum_d log N(z_d | 0, K_N + Sigma_d)`, including
/// the `-(N D / 2) log 2 pi` constant.
pub fn marginal_log_likelihood(
    kernel: &RbfKernel,
    x: MatRef<'_, f64>,
    pseudo: &PseudoObservations,
) -> Result<f64> {
    check_inputs(x, kernel, pseudo)?;
    Problem::new(x, pseudo).value(&kernel.log_params())
}

/// Gradient of [`marginal_log_likelihood`] with respect to
/// `[log sf2, log l]`.
pub fn mll_gradient(
    kernel: &RbfKernel,
    x: MatRef<'_, f64>,
    pseudo: &PseudoObservations,
) -> Result<[f64; 2]> {
    check_inputs(x, kernel, pseudo)?;
    let (_, g) = Problem::new(x, pseudo).value_and_gradient(&kernel.log_params())?;
    Ok([g[0], g[1]])
}

/// Initial kernel: signal variance from the spread of the targets,
/// lengthscale from the median pairwise input distance.
pub fn initial_kernel(x: MatRef<'_, f64>, pseudo: &PseudoObservations) -> Result<RbfKernel> {
    let z = pseudo.targets();
    let count = (z.nrows() * z.ncols()) as f64;
    let mut mean = 0.0;
    for j in 0..z.ncols() {
        for i in 0..z.nrows() {
            mean += z[(i, j)];
        }
    }
    mean /= count;
    let mut var = 0.0;
    for j in 0..z.ncols() {
        for i in 0..z.nrows() {
            var += (z[(i, j)] - mean).powi(2);
        }
    }
    var /= count;
    let sf2 = if var > 1e-12 { var } else { 1.0 };
    let ell = median_pairwise_distance(x);
    let ell = if ell > 1e-12 { ell } else { 1.0 };
    RbfKernel::new(sf2, ell, x.ncols())
}

/// Median Euclidean distance over pairs of rows; large inputs are thinned to
/// an evenly strided subset of 2000 rows.
pub fn median_pairwise_distance(x: MatRef<'_, f64>) -> f64 {
    const MAX_ROWS: usize = 2000;
    let n = x.nrows();
    if n < 2 {
        return 0.0;
    }
    let rows: Vec<usize> = if n > MAX_ROWS {
        (0..MAX_ROWS).map(|i| i * n / MAX_ROWS).collect()
    } else {
        (0..n).collect()
    };
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let s: f64 = (0..x.ncols()).map(|p| (x[(i, p)] - x[(j, p)]).powi(2)).sum();
            d.push(s.sqrt());
        }
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *m;
    if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

#[derive(Debug, Clone)]
struct GroupFactor {
    chol: Cholesky,
}

/// A GP conditioned on its training pseudo-observations.
#[derive(Debug, Clone)]
pub struct ExactGpModel {
    x_train: Mat<f64>,
    kernel: RbfKernel,
    pseudo: PseudoObservations,
    factors: Vec<GroupFactor>,
    // column d: (K_N + Sigma_d)^-1 z_d
    solves: Mat<f64>,
    coord_group: Vec<usize>,
    test_noise: Vec<f64>,
    log_marginal: f64,
    optimization: Option<OptOutcome>,
}

impl ExactGpModel {
    /// Conditions the GP on `pseudo` with fixed hyperparameters.
    pub fn new(x: Mat<f64>, kernel: RbfKernel, pseudo: PseudoObservations) -> Result<Self> {
        check_inputs(x.as_ref(), &kernel, &pseudo)?;
        let problem = Problem::new(x.as_ref(), &pseudo);
        let gram = kernel.gram_from_sq_dists(&problem.sq_dists);
        let solves = problem.solve_groups(&kernel, &gram)?;
        let log_marginal = problem.mll_from_solves(&solves);
        let d = pseudo.dim();
        let n = pseudo.len();
        let mut all = Mat::zeros(n, d);
        let mut coord_group = vec![0; d];
        for (gi, (g, s)) in problem.groups.iter().zip(&solves).enumerate() {
            for (c, &coord) in g.coords.iter().enumerate() {
                coord_group[coord] = gi;
                for i in 0..n {
                    all[(i, coord)] = s.alpha[(i, c)];
                }
            }
        }
        let factors = problem
            .groups
            .iter()
            .zip(solves)
            .map(|(_, s)| GroupFactor { chol: s.chol })
            .collect();
        let test_noise = pseudo.test_noise();
        Ok(Self {
            x_train: x,
            kernel,
            pseudo,
            factors,
            solves: all,
            coord_group,
            test_noise,
            log_marginal,
            optimization: None,
        })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn x_train(&self) -> MatRef<'_, f64> {
        self.x_train.as_ref()
    }

    pub fn pseudo(&self) -> &PseudoObservations {
        &self.pseudo
    }

    pub fn dim(&self) -> usize {
        self.pseudo.dim()
    }

    /// Log marginal likelihood at the model's hyperparameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    /// `(K_N + Sigma_d)^-1 z_d` for every coordinate, as columns.
    pub fn solves(&self) -> MatRef<'_, f64> {
        self.solves.as_ref()
    }

    /// Number of distinct factorizations held by the model.
    pub fn factorization_count(&self) -> usize {
        self.factors.len()
    }

    /// Lower Cholesky factor used for coordinate `d`.
    pub fn cholesky_factor(&self, d: usize) -> MatRef<'_, f64> {
        self.factors[self.coord_group[d]].chol.l()
    }

    /// Optimizer trace, when the model came from [`fit_exact`].
    pub fn optimization(&self) -> Option<&OptOutcome> {
        self.optimization.as_ref()
    }

    /// Noise variance per coordinate added by [`Self::predict_observation`].
    pub fn test_noise(&self) -> &[f64] {
        &self.test_noise
    }

    pub fn predict_latent(&self, x_star: &[f64]) -> Result<LatentPredictive> {
        let xs = Mat::from_fn(1, x_star.len(), |_, j| x_star[j]);
        Ok(self.predict_latent_batch(xs.as_ref())?.remove(0))
    }

    pub fn predict_observation(&self, x_star: &[f64]) -> Result<LatentPredictive> {
        Ok(self.predict_latent(x_star)?.with_added_variance(&self.test_noise))
    }

    /// Predictive latent distribution at every row of `x_star`.
    pub fn predict_latent_batch(&self, x_star: MatRef<'_, f64>) -> Result<Vec<LatentPredictive>> {
        const CHUNK: usize = 1024;
        let t = x_star.nrows();
        let mut out = Vec::with_capacity(t);
        let prior = self.kernel.signal_variance();
        let d = self.dim();
        let mut start = 0;
        while start < t {
            let end = (start + CHUNK).min(t);
            let chunk = x_star.subrows(start, end - start);
            let k_star = self.kernel.cross_gram(self.x_train.as_ref(), chunk)?;
            let means = k_star.transpose() * &self.solves;
            let mut group_var = Vec::with_capacity(self.factors.len());
            for f in &self.factors {
                let v = f.chol.solve_lower(k_star.as_ref());
                let vars: Vec<f64> = (0..v.ncols())
                    .map(|c| {
                        let q: f64 = (0..v.nrows()).map(|i| v[(i, c)] * v[(i, c)]).sum();
                        clamp_variance(prior - q)
                    })
                    .collect();
                group_var.push(vars);
            }
            for r in 0..(end - start) {
                out.push(LatentPredictive {
                    mean: (0..d).map(|c| means[(r, c)]).collect(),
                    variance: (0..d).map(|c| group_var[self.coord_group[c]][r]).collect(),
                });
            }
            start = end;
        }
        Ok(out)
    }

    /// Predictive distribution of a new noisy pseudo-observation.
    pub fn predict_observation_batch(&self, x_star: MatRef<'_, f64>) -> Result<Vec<LatentPredictive>> {
        Ok(self
            .predict_latent_batch(x_star)?
            .into_iter()
            .map(|p| p.with_added_variance(&self.test_noise))
            .collect())
    }
}

/// Fits kernel hyperparameters by maximizing the marginal likelihood, starting
/// from [`initial_kernel`].
pub fn fit_exact(x: Mat<f64>, pseudo: PseudoObservations, cfg: &OptConfig) -> Result<ExactGpModel> {
    let init = initial_kernel(x.as_ref(), &pseudo)?;
    fit_exact_from(x, pseudo, init, cfg)
}

/// As [`fit_exact`], starting from the given kernel.
pub fn fit_exact_from(
    x: Mat<f64>,
    pseudo: PseudoObservations,
    init: RbfKernel,
    cfg: &OptConfig,
) -> Result<ExactGpModel> {
    check_inputs(x.as_ref(), &init, &pseudo)?;
    if pseudo.len() < 2 {
        return Err(Error::InvalidDimension("fitting needs at least 2 points".into()));
    }
    let outcome = {
        let problem = Problem::new(x.as_ref(), &pseudo);
        adam_ascent(&init.log_params(), cfg, |p| problem.value_and_gradient(p))?
    };
    let kernel = RbfKernel::from_log_params([outcome.params[0], outcome.params[1]], x.ncols())?;
    let mut model = ExactGpModel::new(x, kernel, pseudo)?;
    model.optimization = Some(outcome);
    Ok(model)
}


#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize, hetero: bool) -> (Mat<f64>, PseudoObservations, RbfKernel) {
        let x = Mat::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
        let z = Mat::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let noise = if hetero {
            NoiseVariance::PerEntry(
                (0..d)
                    .map(|_| (0..n).map(|_| rng.random_range(0.05..1.0)).collect())
                    .collect(),
            )
        } else {
            NoiseVariance::Shared(rng.random_range(0.05..1.0))
        };
        let kernel = RbfKernel::new(rng.random_range(0.3..2.0), rng.random_range(0.4..2.0), 2).unwrap();
        (x, PseudoObservations::new(z, noise).unwrap(), kernel)
    }

    fn dense_cov(kernel: &RbfKernel, x: &Mat<f64>, pseudo: &PseudoObservations, d: usize) -> Vec<Vec<f64>> {
        let n = x.nrows();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let xi: Vec<f64> = (0..x.ncols()).map(|p| x[(i, p)]).collect();
                        let xj: Vec<f64> = (0..x.ncols()).map(|p| x[(j, p)]).collect();
                        let k = kernel.eval(&xi, &xj).unwrap();
                        if i == j {
                            k + pseudo.noise_at(i, d)
                        } else {
                            k
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn oracle_mll(kernel: &RbfKernel, x: &Mat<f64>, pseudo: &PseudoObservations) -> f64 {
        (0..pseudo.dim())
            .map(|d| {
                let z: Vec<f64> = (0..pseudo.len()).map(|i| pseudo.targets()[(i, d)]).collect();
                mvn_log_density(&z, &dense_cov(kernel, x, pseudo, d))
            })
            .sum()
    }

    #[test]
    fn one_point_mll() {
        let x = Mat::from_fn(1, 1, |_, _| 0.0);
        let pseudo = PseudoObservations::new(Mat::zeros(1, 1), NoiseVariance::Shared(1.0)).unwrap();
        let k = RbfKernel::new(1.0, 1.0, 1).unwrap();
        let v = marginal_log_likelihood(&k, x.as_ref(), &pseudo).unwrap();
        assert_abs_diff_eq!(v, -1.265_512_123_484_645_4, epsilon = 1e-12);
    }

    #[test]
    fn zero_targets_leave_only_log_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x, _, k) = random_problem(&mut rng, 5, 2, false);
        let pseudo = PseudoObservations::new(Mat::zeros(5, 2), NoiseVariance::Shared(0.3)).unwrap();
        let mut a = k.gram(x.as_ref()).unwrap();
        for i in 0..5 {
            a[(i, i)] += 0.3;
        }
        let log_det = Cholesky::new(&a, 1.0).unwrap().log_det();
        let want = -(2.0 / 2.0) * log_det - (5.0 * 2.0 / 2.0) * LN_2PI;
        assert_abs_diff_eq!(
            marginal_log_likelihood(&k, x.as_ref(), &pseudo).unwrap(),
            want,
            epsilon = 1e-12
        );
    }

    #[test]
    fn mll_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..30 {
            let n = 1 + trial % 8;
            let (x, pseudo, k) = random_problem(&mut rng, n, 1 + trial % 3, trial % 2 == 1);
            let got = marginal_log_likelihood(&k, x.as_ref(), &pseudo).unwrap();
            assert_abs_diff_eq!(got, oracle_mll(&k, &x, &pseudo), epsilon = 1e-8);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = 1e-5;
        for trial in 0..20 {
            let (x, pseudo, k) = random_problem(&mut rng, 6, 2, trial % 2 == 0);
            let g = mll_gradient(&k, x.as_ref(), &pseudo).unwrap();
            let p = k.log_params();
            for i in 0..2 {
                let mut plus = p;
                let mut minus = p;
                plus[i] += h;
                minus[i] -= h;
                let fp = marginal_log_likelihood(&RbfKernel::from_log_params(plus, 2).unwrap(), x.as_ref(), &pseudo).unwrap();
                let fm = marginal_log_likelihood(&RbfKernel::from_log_params(minus, 2).unwrap(), x.as_ref(), &pseudo).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1e-3);
                assert!(rel <= 1e-4, "param {i}: analytic {} vs fd {fd}", g[i]);
            }
        }
    }

    #[test]
    fn duplicated_columns_double_the_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (x, pseudo, k) = random_problem(&mut rng, 7, 1, false);
        let z = pseudo.targets();
        let doubled = PseudoObservations::new(
            Mat::from_fn(7, 2, |i, _| z[(i, 0)]),
            pseudo.noise().clone(),
        )
        .unwrap();
        let g1 = mll_gradient(&k, x.as_ref(), &pseudo).unwrap();
        let g2 = mll_gradient(&k, x.as_ref(), &doubled).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(g2[i], 2.0 * g1[i], epsilon = 1e-10 * g1[i].abs().max(1.0));
        }
    }

    #[test]
    fn predictions_match_conditional_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..20 {
            let d = 1 + trial % 3;
            let (x, pseudo, k) = random_problem(&mut rng, 6, d, trial % 2 == 0);
            let model = ExactGpModel::new(x.clone(), k, pseudo.clone()).unwrap();
            let xs = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let pred = model.predict_latent(&xs).unwrap();
            for c in 0..d {
                let k_star: Vec<f64> = (0..6)
                    .map(|i| k.eval(&[x[(i, 0)], x[(i, 1)]], &xs).unwrap())
                    .collect();
                let z: Vec<f64> = (0..6).map(|i| pseudo.targets()[(i, c)]).collect();
                let (m, v) = conditional(&k_star, k.signal_variance(), &dense_cov(&k, &x, &pseudo, c), &z);
                assert_abs_diff_eq!(pred.mean[c], m, epsilon = 1e-8);
                assert_abs_diff_eq!(pred.variance[c], v, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn interpolates_training_points_as_noise_vanishes() {
        let x = Mat::from_fn(3, 1, |i, _| i as f64);
        let z = Mat::from_fn(3, 2, |i, j| (i + 2 * j) as f64 - 1.5);
        let pseudo = PseudoObservations::new(z.clone(), NoiseVariance::Shared(1e-9)).unwrap();
        let model = ExactGpModel::new(x, RbfKernel::new(1.0, 1.0, 1).unwrap(), pseudo).unwrap();
        let p = model.predict_latent(&[1.0]).unwrap();
        assert_abs_diff_eq!(p.mean[0], z[(1, 0)], epsilon = 1e-6);
        assert_abs_diff_eq!(p.mean[1], z[(1, 1)], epsilon = 1e-6);
        assert!(p.variance[0] < 1e-6);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (x, pseudo, k) = random_problem(&mut rng, 6, 2, false);
        let model = ExactGpModel::new(x, k, pseudo).unwrap();
        let p = model.predict_latent(&[1e3, -1e3]).unwrap();
        for c in 0..2 {
            assert!(p.mean[c].abs() < 1e-12);
            assert_abs_diff_eq!(p.variance[c], k.signal_variance(), epsilon = 1e-12);
        }
    }

    #[test]
    fn observation_variance_adds_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (x, pseudo, k) = random_problem(&mut rng, 6, 2, false);
        let s = pseudo.shared_noise().unwrap();
        let model = ExactGpModel::new(x, k, pseudo).unwrap();
        let f = model.predict_latent(&[0.1, 0.2]).unwrap();
        let z = model.predict_observation(&[0.1, 0.2]).unwrap();
        assert_eq!(f.mean, z.mean);
        for c in 0..2 {
            assert_eq!(z.variance[c], f.variance[c] + s);
        }
    }

    #[test]
    fn variance_bounded_by_prior_plus_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let (x, pseudo, k) = random_problem(&mut rng, 8, 3, true);
        let model = ExactGpModel::new(x, k, pseudo).unwrap();
        let max_noise = model.test_noise().iter().copied().fold(0.0, f64::max);
        let xs = Mat::from_fn(50, 2, |_, _| rng.random_range(-3.0..3.0));
        for p in model.predict_observation_batch(xs.as_ref()).unwrap() {
            for v in p.variance {
                assert!(v >= 0.0 && v <= k.signal_variance() + max_noise + 1e-12);
            }
        }
    }

    #[test]
    fn equal_heteroscedastic_noise_is_bit_identical_to_shared() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (x, shared, k) = random_problem(&mut rng, 8, 3, false);
        let s = shared.shared_noise().unwrap();
        let hetero = PseudoObservations::new(
            shared.targets().to_owned(),
            NoiseVariance::PerEntry(vec![vec![s; 8]; 3]),
        )
        .unwrap();
        let a = marginal_log_likelihood(&k, x.as_ref(), &shared).unwrap();
        let b = marginal_log_likelihood(&k, x.as_ref(), &hetero).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let ga = mll_gradient(&k, x.as_ref(), &shared).unwrap();
        let gb = mll_gradient(&k, x.as_ref(), &hetero).unwrap();
        assert_eq!(ga, gb);
        let ma = ExactGpModel::new(x.clone(), k, shared).unwrap();
        let mb = ExactGpModel::new(x, k, hetero).unwrap();
        assert_eq!(mb.factorization_count(), 1);
        assert_eq!(ma.predict_observation(&[0.3, -0.2]).unwrap(), mb.predict_observation(&[0.3, -0.2]).unwrap());
    }

    #[test]
    fn per_point_noise_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let x = Mat::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let z = Mat::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let noise: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..0.5)).collect();
        let pseudo = PseudoObservations::new(z, NoiseVariance::PerPoint(noise)).unwrap();
        let k = RbfKernel::new(1.2, 0.8, 2).unwrap();
        let got = marginal_log_likelihood(&k, x.as_ref(), &pseudo).unwrap();
        assert_abs_diff_eq!(got, oracle_mll(&k, &x, &pseudo), epsilon = 1e-10);
    }

    #[test]
    fn pseudo_observation_validation() {
        assert!(PseudoObservations::new(Mat::zeros(0, 2), NoiseVariance::Shared(1.0)).is_err());
        assert!(PseudoObservations::new(Mat::zeros(2, 2), NoiseVariance::Shared(0.0)).is_err());
        assert!(PseudoObservations::new(Mat::zeros(2, 2), NoiseVariance::PerPoint(vec![1.0])).is_err());
        assert!(PseudoObservations::new(
            Mat::zeros(2, 2),
            NoiseVariance::PerEntry(vec![vec![1.0, 1.0], vec![1.0, -1.0]])
        )
        .is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let pseudo = PseudoObservations::new(Mat::zeros(3, 1), NoiseVariance::Shared(1.0)).unwrap();
        let k = RbfKernel::new(1.0, 1.0, 2).unwrap();
        assert!(matches!(
            marginal_log_likelihood(&k, Mat::zeros(4, 2).as_ref(), &pseudo),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            marginal_log_likelihood(&k, Mat::zeros(3, 1).as_ref(), &pseudo),
            Err(Error::Shape(_))
        ));
    }

    fn prior_sample(rng: &mut ChaCha8Rng, n: usize, sf2: f64, ell: f64, noise: f64) -> (Mat<f64>, PseudoObservations) {
        let x = Mat::from_fn(n, 1, |_, _| rng.random_range(-5.0..5.0));
        let k = RbfKernel::new(sf2, ell, 1).unwrap();
        let mut a = k.gram(x.as_ref()).unwrap();
        for i in 0..n {
            a[(i, i)] += noise;
        }
        let chol = Cholesky::new(&a, sf2).unwrap();
        let e = Mat::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = chol.l() * &e;
        (x, PseudoObservations::new(z, NoiseVariance::Shared(noise)).unwrap())
    }

    #[test]
    fn fit_recovers_lengthscale_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let (x, pseudo) = prior_sample(&mut rng, 200, 1.0, 0.7, 0.05);
        let cfg = OptConfig {
            max_iters: 1500,
            ..Default::default()
        };
        let model = fit_exact(x.clone(), pseudo.clone(), &cfg).unwrap();
        let ell = model.kernel().lengthscale();
        assert!(ell > 0.7 / 1.5 && ell < 0.7 * 1.5, "fitted lengthscale {ell}");
        let hist = &model.optimization().unwrap().history;
        assert!(hist.windows(2).all(|w| w[1] >= w[0]));

        let again = fit_exact(x, pseudo, &cfg).unwrap();
        assert_eq!(
            model.kernel().log_params().map(f64::to_bits),
            again.kernel().log_params().map(f64::to_bits)
        );
    }

    #[test]
    fn optimum_has_small_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let (x, pseudo) = prior_sample(&mut rng, 40, 1.5, 1.0, 0.1);
        let cfg = OptConfig {
            max_iters: 20_000,
            grad_tol: 1e-6,
            ..Default::default()
        };
        let model = fit_exact(x.clone(), pseudo.clone(), &cfg).unwrap();
        let g = mll_gradient(model.kernel(), x.as_ref(), &pseudo).unwrap();
        assert!(g[0].abs() <= 1e-4 && g[1].abs() <= 1e-4, "gradient {g:?}");
    }

    #[test]
    fn median_distance_small_case() {
        let x = Mat::from_fn(3, 1, |i, _| [0.0, 1.0, 3.0][i]);
        // pairwise distances 1, 3, 2
        assert_eq!(median_pairwise_distance(x.as_ref()), 2.0);
        let x = Mat::from_fn(4, 1, |i, _| i as f64);
        // 1,1,1,2,2,3 -> median 1.5
        assert_eq!(median_pairwise_distance(x.as_ref()), 1.5);
    }
}
