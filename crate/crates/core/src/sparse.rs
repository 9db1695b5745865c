//! Collapsed inducing-point approximation.
//!
//! With `L_M L_M^T = K_M`, `A = L_M^-1 K_MN` and noise `S = diag(s)`, the
//! Nyström covariance is `Q_N = A^T A` and every quantity is computed through
//! `B = I + A S^-1 A^T` (`M x M`), so nothing `N x N` is ever formed.
//! Diagonal noise is handled per noise group, exactly as in the exact GP.

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::{clamp_variance, initial_kernel, LatentPredictive, NoiseGroup, PseudoObservations};
use crate::kernel::RbfKernel;
use crate::linalg::{select_rows, Cholesky};
use crate::optim::{adam_ascent, OptConfig, OptOutcome};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Step for the central finite-difference gradient of the bound.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct InducingSet {
    xu: Mat<f64>,
    /// Rows of the training inputs the inducing points were copied from.
    indices: Vec<usize>,
}

impl InducingSet {
    pub fn from_points(xu: Mat<f64>) -> Result<Self> {
        if xu.nrows() == 0 {
            return Err(Error::InvalidDimension("inducing set is empty".into()));
        }
        for i in 0..xu.nrows() {
            for j in 0..xu.ncols() {
                if !xu[(i, j)].is_finite() {
                    return Err(Error::Domain(format!("non-finite inducing input at ({i}, {j})")));
                }
            }
        }
        Ok(Self { xu, indices: Vec::new() })
    }

    pub fn points(&self) -> MatRef<'_, f64> {
        self.xu.as_ref()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.xu.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.xu.nrows() == 0
    }
}

/// k-means++ seeding: the first center uniformly, then each next center with
/// probability proportional to its squared distance from the chosen ones.
pub fn kmeanspp_select(x: MatRef<'_, f64>, m: usize, seed: u64) -> Result<InducingSet> {
    let n = x.nrows();
    if m == 0 || m > n {
        return Err(Error::InvalidDimension(format!(
            "need 1 <= M <= N for inducing selection, got M = {m}, N = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sq = |i: usize, j: usize| -> f64 {
        (0..x.ncols()).map(|p| (x[(i, p)] - x[(j, p)]).powi(2)).sum()
    };
    let mut chosen = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(i, first)).collect();
    while chosen.len() < m {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in nearest.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > u {
                    pick = Some(i);
                    break;
                }
            }
            // round-off at the top end of the cumulative sum
            pick.unwrap_or_else(|| nearest.iter().rposition(|w| *w > 0.0).unwrap())
        } else {
            // only duplicates of chosen rows remain
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        taken[next] = true;
        nearest[next] = 0.0;
        for (i, d) in nearest.iter_mut().enumerate() {
            if !taken[i] {
                *d = d.min(sq(i, next));
            }
        }
    }
    Ok(InducingSet {
        xu: select_rows(x, &chosen),
        indices: chosen,
    })
}

struct SparseGroup {
    l_b: Cholesky,
    // L_B^-1 A S^-1 Z_g
    c: Mat<f64>,
}

/// Shared pieces of the bound and the predictive for one kernel.
struct SparseState {
    l_m: Cholesky,
    groups: Vec<SparseGroup>,
    bound: f64,
}

fn check_shapes(kernel: &RbfKernel, x: MatRef<'_, f64>, xu: MatRef<'_, f64>, pseudo: &PseudoObservations) -> Result<()> {
    if x.nrows() != pseudo.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} pseudo-observations",
            x.nrows(),
            pseudo.len()
        )));
    }
    if x.ncols() != kernel.input_dim || xu.ncols() != kernel.input_dim {
        return Err(Error::Shape(format!(
            "inputs have {} and inducing points {} columns, kernel expects {}",
            x.ncols(),
            xu.ncols(),
            kernel.input_dim
        )));
    }
    Ok(())
}

fn sparse_state(
    kernel: &RbfKernel,
    x: MatRef<'_, f64>,
    xu: MatRef<'_, f64>,
    pseudo: &PseudoObservations,
    groups: &[NoiseGroup],
) -> Result<SparseState> {
    let n = x.nrows();
    let m = xu.nrows();
    let sf2 = kernel.signal_variance();
    let l_m = Cholesky::new(&kernel.gram(xu)?, sf2)?;
    let a = l_m.solve_lower(kernel.cross_gram(xu, x)?.as_ref());
    // diag(K_N - Q_N)
    let resid: Vec<f64> = (0..n)
        .map(|i| {
            let q: f64 = (0..m).map(|r| a[(r, i)] * a[(r, i)]).sum();
            sf2 - q
        })
        .collect();

    let mut bound = -0.5 * (n * pseudo.dim()) as f64 * LN_2PI;
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let count = g.coords.len() as f64;
        let inv_s: Vec<f64> = g.diag.iter().map(|s| 1.0 / s).collect();
        let a_scaled = Mat::from_fn(m, n, |r, i| a[(r, i)] * inv_s[i].sqrt());
        let mut b = &a_scaled * a_scaled.transpose();
        for r in 0..m {
            b[(r, r)] += 1.0;
        }
        let l_b = Cholesky::new(&b, 1.0)?;
        let z = pseudo.target_columns(&g.coords);
        let z_scaled = Mat::from_fn(n, z.ncols(), |i, c| z[(i, c)] * inv_s[i]);
        let c = l_b.solve_lower((&a * &z_scaled).as_ref());

        let log_det = l_b.log_det() + g.diag.iter().map(|s| s.ln()).sum::<f64>();
        let mut quad = 0.0;
        for col in 0..z.ncols() {
            for i in 0..n {
                quad += z[(i, col)] * z_scaled[(i, col)];
            }
            for r in 0..m {
                quad -= c[(r, col)] * c[(r, col)];
            }
        }
        let trace: f64 = resid.iter().zip(&inv_s).map(|(r, is)| r * is).sum();
        bound -= 0.5 * quad + 0.5 * count * (log_det + trace);
        out.push(SparseGroup { l_b, c });
    }
    Ok(SparseState { l_m, groups: out, bound })
}

/// Collapsed lower bound on the log marginal likelihood:
/// `sum_d [log N(z_d | 0, Q_N + S_d) - tr(S_d^-1 (K_N - Q_N)) / 2]`.
pub fn collapsed_bound(
    kernel: &RbfKernel,
    x: MatRef<'_, f64>,
    xu: MatRef<'_, f64>,
    pseudo: &PseudoObservations,
) -> Result<f64> {
    check_shapes(kernel, x, xu, pseudo)?;
    Ok(sparse_state(kernel, x, xu, pseudo, &pseudo.noise_groups())?.bound)
}

/// GP conditioned through a fixed inducing set.
#[derive(Debug, Clone)]
pub struct CollapsedGpModel {
    x_train: Mat<f64>,
    inducing: InducingSet,
    kernel: RbfKernel,
    pseudo: PseudoObservations,
    l_m: Cholesky,
    l_b: Vec<Cholesky>,
    c: Vec<Mat<f64>>,
    coord_group: Vec<(usize, usize)>,
    test_noise: Vec<f64>,
    bound: f64,
    optimization: Option<OptOutcome>,
}

impl CollapsedGpModel {
    pub fn new(x: Mat<f64>, inducing: InducingSet, kernel: RbfKernel, pseudo: PseudoObservations) -> Result<Self> {
        check_shapes(&kernel, x.as_ref(), inducing.points(), &pseudo)?;
        let groups = pseudo.noise_groups();
        let state = sparse_state(&kernel, x.as_ref(), inducing.points(), &pseudo, &groups)?;
        let mut coord_group = vec![(0, 0); pseudo.dim()];
        for (gi, g) in groups.iter().enumerate() {
            for (c, &coord) in g.coords.iter().enumerate() {
                coord_group[coord] = (gi, c);
            }
        }
        let (l_b, c) = state.groups.into_iter().map(|g| (g.l_b, g.c)).unzip();
        let test_noise = pseudo.test_noise();
        Ok(Self {
            x_train: x,
            inducing,
            kernel,
            pseudo,
            l_m: state.l_m,
            l_b,
            c,
            coord_group,
            test_noise,
            bound: state.bound,
            optimization: None,
        })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn inducing(&self) -> &InducingSet {
        &self.inducing
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

    /// The collapsed bound at the model's hyperparameters.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn optimization(&self) -> Option<&OptOutcome> {
        self.optimization.as_ref()
    }

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

    pub fn predict_latent_batch(&self, x_star: MatRef<'_, f64>) -> Result<Vec<LatentPredictive>> {
        let k_star = self.kernel.cross_gram(self.inducing.points(), x_star)?;
        let a_star = self.l_m.solve_lower(k_star.as_ref());
        let m = a_star.nrows();
        let t = a_star.ncols();
        let prior = self.kernel.signal_variance();
        let nystrom: Vec<f64> = (0..t)
            .map(|j| (0..m).map(|r| a_star[(r, j)] * a_star[(r, j)]).sum())
            .collect();
        let mut means = Vec::with_capacity(self.l_b.len());
        let mut vars = Vec::with_capacity(self.l_b.len());
        for (l_b, c) in self.l_b.iter().zip(&self.c) {
            let b_star = l_b.solve_lower(a_star.as_ref());
            means.push(b_star.transpose() * c);
            vars.push(
                (0..t)
                    .map(|j| {
                        let extra: f64 = (0..m).map(|r| b_star[(r, j)] * b_star[(r, j)]).sum();
                        clamp_variance(prior - nystrom[j] + extra)
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        Ok((0..t)
            .map(|j| LatentPredictive {
                mean: self.coord_group.iter().map(|&(g, c)| means[g][(j, c)]).collect(),
                variance: self.coord_group.iter().map(|&(g, _)| vars[g][j]).collect(),
            })
            .collect())
    }

    pub fn predict_observation_batch(&self, x_star: MatRef<'_, f64>) -> Result<Vec<LatentPredictive>> {
        Ok(self
            .predict_latent_batch(x_star)?
            .into_iter()
            .map(|p| p.with_added_variance(&self.test_noise))
            .collect())
    }
}

/// Selects `m` inducing points by k-means++ and fits the kernel on the
/// collapsed bound with the inducing points held fixed.
pub fn fit_collapsed(
    x: Mat<f64>,
    pseudo: PseudoObservations,
    m: usize,
    seed: u64,
    cfg: &OptConfig,
) -> Result<CollapsedGpModel> {
    let inducing = kmeanspp_select(x.as_ref(), m, seed)?;
    let init = initial_kernel(x.as_ref(), &pseudo)?;
    fit_collapsed_with(x, pseudo, inducing, init, cfg)
}

/// As [`fit_collapsed`] with a given inducing set and starting kernel.
pub fn fit_collapsed_with(
    x: Mat<f64>,
    pseudo: PseudoObservations,
    inducing: InducingSet,
    init: RbfKernel,
    cfg: &OptConfig,
) -> Result<CollapsedGpModel> {
    check_shapes(&init, x.as_ref(), inducing.points(), &pseudo)?;
    let p = x.ncols();
    let groups = pseudo.noise_groups();
    let eval = |params: [f64; 2]| -> Result<f64> {
        let k = RbfKernel::from_log_params(params, p)?;
        Ok(sparse_state(&k, x.as_ref(), inducing.points(), &pseudo, &groups)?.bound)
    };
    let outcome = adam_ascent(&init.log_params(), cfg, |th| {
        let center = [th[0], th[1]];
        let value = eval(center)?;
        let mut grad = vec![0.0; 2];
        for (i, g) in grad.iter_mut().enumerate() {
            let mut plus = center;
            let mut minus = center;
            plus[i] += FD_STEP;
            minus[i] -= FD_STEP;
            *g = (eval(plus)? - eval(minus)?) / (2.0 * FD_STEP);
        }
        Ok((value, grad))
    })?;
    let kernel = RbfKernel::from_log_params([outcome.params[0], outcome.params[1]], p)?;
    let mut model = CollapsedGpModel::new(x, inducing, kernel, pseudo)?;
    model.optimization = Some(outcome);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::oracle::{inverse_and_log_det, mvn_log_density};
    use crate::gp::{fit_exact, marginal_log_likelihood, ExactGpModel, NoiseVariance};
    use approx::assert_abs_diff_eq;

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

    fn rows(x: &Mat<f64>) -> Vec<Vec<f64>> {
        (0..x.nrows()).map(|i| (0..x.ncols()).map(|j| x[(i, j)]).collect()).collect()
    }

    fn kmat(k: &RbfKernel, a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        a.iter().map(|u| b.iter().map(|v| k.eval(u, v).unwrap()).collect()).collect()
    }

    fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let inner = b.len();
        a.iter()
            .map(|r| (0..b[0].len()).map(|j| (0..inner).map(|k| r[k] * b[k][j]).sum()).collect())
            .collect()
    }

    fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
    }

    /// Bound with Q_N formed explicitly.
    fn dense_bound(k: &RbfKernel, x: &Mat<f64>, xu: &Mat<f64>, pseudo: &PseudoObservations) -> f64 {
        let (xr, ur) = (rows(x), rows(xu));
        let knm = kmat(k, &xr, &ur);
        let (km_inv, _) = inverse_and_log_det(&kmat(k, &ur, &ur));
        let q = matmul(&matmul(&knm, &km_inv), &transpose(&knm));
        let n = xr.len();
        (0..pseudo.dim())
            .map(|d| {
                let mut cov = q.clone();
                for i in 0..n {
                    cov[i][i] += pseudo.noise_at(i, d);
                }
                let z: Vec<f64> = (0..n).map(|i| pseudo.targets()[(i, d)]).collect();
                let trace: f64 = (0..n)
                    .map(|i| (k.signal_variance() - q[i][i]) / pseudo.noise_at(i, d))
                    .sum();
                mvn_log_density(&z, &cov) - 0.5 * trace
            })
            .sum()
    }

    #[test]
    fn bound_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for trial in 0..20 {
            let n = 5 + trial;
            let (x, pseudo, k) = random_problem(&mut rng, n, 1 + trial % 3, trial % 2 == 1);
            let xu = Mat::from_fn(1 + trial % 5, 2, |_, _| rng.random_range(-2.0..2.0));
            let got = collapsed_bound(&k, x.as_ref(), xu.as_ref(), &pseudo).unwrap();
            assert_abs_diff_eq!(got, dense_bound(&k, &x, &xu, &pseudo), epsilon = 1e-8);
        }
    }

    #[test]
    fn full_inducing_set_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..10 {
            let (x, pseudo, k) = random_problem(&mut rng, 8, 2, trial % 2 == 0);
            let bound = collapsed_bound(&k, x.as_ref(), x.as_ref(), &pseudo).unwrap();
            let mll = marginal_log_likelihood(&k, x.as_ref(), &pseudo).unwrap();
            assert_abs_diff_eq!(bound, mll, epsilon = 1e-6);

            let exact = ExactGpModel::new(x.clone(), k, pseudo.clone()).unwrap();
            let inducing = InducingSet::from_points(x.clone()).unwrap();
            let sparse = CollapsedGpModel::new(x, inducing, k, pseudo).unwrap();
            let xs = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let (a, b) = (exact.predict_latent(&xs).unwrap(), sparse.predict_latent(&xs).unwrap());
            for c in 0..2 {
                assert_abs_diff_eq!(a.mean[c], b.mean[c], epsilon = 1e-6);
                assert_abs_diff_eq!(a.variance[c], b.variance[c], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn bound_never_exceeds_marginal_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for trial in 0..100 {
            let (x, pseudo, k) = random_problem(&mut rng, 10, 2, trial % 3 == 0);
            let xu = Mat::from_fn(1 + trial % 6, 2, |_, _| rng.random_range(-2.5..2.5));
            let bound = collapsed_bound(&k, x.as_ref(), xu.as_ref(), &pseudo).unwrap();
            let mll = marginal_log_likelihood(&k, x.as_ref(), &pseudo).unwrap();
            assert!(bound <= mll + 1e-8, "bound {bound} > mll {mll}");
        }
    }

    #[test]
    fn nested_inducing_sets_tighten_the_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let (x, pseudo, k) = random_problem(&mut rng, 12, 2, false);
            let big = Mat::from_fn(6, 2, |_, _| rng.random_range(-2.0..2.0));
            let mut prev = f64::NEG_INFINITY;
            for m in 1..=6 {
                let b = collapsed_bound(&k, x.as_ref(), big.subrows(0, m), &pseudo).unwrap();
                assert!(b >= prev - 1e-8, "M = {m}: {b} < {prev}");
                prev = b;
            }
        }
    }

    #[test]
    fn predictive_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for trial in 0..10 {
            let (x, pseudo, k) = random_problem(&mut rng, 10, 2, trial % 2 == 0);
            let xu = Mat::from_fn(4, 2, |_, _| rng.random_range(-2.0..2.0));
            let model = CollapsedGpModel::new(x.clone(), InducingSet::from_points(xu.clone()).unwrap(), k, pseudo.clone()).unwrap();
            let xs = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let pred = model.predict_latent(&xs).unwrap();

            let (xr, ur) = (rows(&x), rows(&xu));
            let kmn = kmat(&k, &ur, &xr);
            let km = kmat(&k, &ur, &ur);
            let (km_inv, _) = inverse_and_log_det(&km);
            let ks: Vec<f64> = ur.iter().map(|u| k.eval(u, &xs).unwrap()).collect();
            for c in 0..2 {
                let s: Vec<f64> = (0..10).map(|i| pseudo.noise_at(i, c)).collect();
                let mut sigma = km.clone();
                for a in 0..4 {
                    for b in 0..4 {
                        sigma[a][b] += (0..10).map(|i| kmn[a][i] * kmn[b][i] / s[i]).sum::<f64>();
                    }
                }
                let (sigma_inv, _) = inverse_and_log_det(&sigma);
                let proj: Vec<f64> = (0..4)
                    .map(|a| (0..10).map(|i| kmn[a][i] * pseudo.targets()[(i, c)] / s[i]).sum())
                    .collect();
                let quad = |m: &[Vec<f64>], u: &[f64], v: &[f64]| -> f64 {
                    (0..4).map(|a| (0..4).map(|b| u[a] * m[a][b] * v[b]).sum::<f64>()).sum()
                };
                let mean = quad(&sigma_inv, &ks, &proj);
                let var = k.signal_variance() - quad(&km_inv, &ks, &ks) + quad(&sigma_inv, &ks, &ks);
                assert_abs_diff_eq!(pred.mean[c], mean, epsilon = 1e-8);
                assert_abs_diff_eq!(pred.variance[c], var, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn prior_reversion_far_away() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let (x, pseudo, k) = random_problem(&mut rng, 10, 2, false);
        let model = CollapsedGpModel::new(x.clone(), InducingSet::from_points(x.subrows(0, 3).to_owned()).unwrap(), k, pseudo).unwrap();
        let p = model.predict_latent(&[500.0, 500.0]).unwrap();
        for c in 0..2 {
            assert!(p.mean[c].abs() < 1e-12);
            assert_abs_diff_eq!(p.variance[c], k.signal_variance(), epsilon = 1e-12);
        }
    }

    #[test]
    fn kmeanspp_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let x = Mat::from_fn(15, 2, |_, _| rng.random_range(-1.0..1.0));
        let all = kmeanspp_select(x.as_ref(), 15, 3).unwrap();
        let mut idx = all.indices().to_vec();
        idx.sort();
        assert_eq!(idx, (0..15).collect::<Vec<_>>());
        let one = kmeanspp_select(x.as_ref(), 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert!(kmeanspp_select(x.as_ref(), 16, 3).is_err());
        assert!(kmeanspp_select(x.as_ref(), 0, 3).is_err());
        let a = kmeanspp_select(x.as_ref(), 5, 11).unwrap();
        let b = kmeanspp_select(x.as_ref(), 5, 11).unwrap();
        assert_eq!(a.indices(), b.indices());

        // duplicates: every row is still selectable
        let dup = Mat::from_fn(6, 1, |i, _| (i % 2) as f64);
        let mut idx = kmeanspp_select(dup.as_ref(), 6, 1).unwrap().indices().to_vec();
        idx.sort();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn kmeanspp_first_center_is_uniform() {
        let x = Mat::from_fn(4, 1, |i, _| i as f64);
        let mut counts = [0usize; 4];
        for seed in 0..4000 {
            counts[kmeanspp_select(x.as_ref(), 1, seed).unwrap().indices()[0]] += 1;
        }
        for c in counts {
            assert!((800..1200).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn kmeanspp_splits_two_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x = Mat::from_fn(100, 2, |i, _| {
            let centre = if i < 50 { -10.0 } else { 10.0 };
            centre + rng.random_range(-0.5..0.5)
        });
        let split = (0..1000u64)
            .filter(|&seed| {
                let idx = kmeanspp_select(x.as_ref(), 2, seed).unwrap().indices().to_vec();
                (idx[0] < 50) != (idx[1] < 50)
            })
            .count();
        assert!(split >= 990, "{split} of 1000 seeds split the clusters");
    }

    #[test]
    fn fit_with_all_points_matches_exact_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let x = Mat::from_fn(25, 1, |i, _| i as f64 * 0.4);
        let z = Mat::from_fn(25, 2, |i, c| (i as f64 * 0.4 + c as f64).sin() + 0.1 * rng.random_range(-1.0..1.0));
        let pseudo = PseudoObservations::new(z, NoiseVariance::Shared(0.05)).unwrap();
        let cfg = OptConfig {
            max_iters: 2000,
            ..Default::default()
        };
        let exact = fit_exact(x.clone(), pseudo.clone(), &cfg).unwrap();
        let sparse = fit_collapsed(x, pseudo, 25, 0, &cfg).unwrap();
        assert!((exact.log_marginal_likelihood() - sparse.bound()).abs() <= 1e-4,
            "exact {} vs collapsed {}", exact.log_marginal_likelihood(), sparse.bound());
        let hist = &sparse.optimization().unwrap().history;
        assert!(hist.windows(2).all(|w| w[1] >= w[0]));
    }
}
