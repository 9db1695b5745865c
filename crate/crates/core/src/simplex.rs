//! Aitchison geometry on the open probability simplex.
//!
//! The isometric log-ratio (ILR) map `phi(p) = H log p` sends the open simplex
//! with the Aitchison metric onto Euclidean `R^(K-1)`; its inverse is
//! `softmax(H^T z)`. `H` is the Helmert contrast matrix whose row `d`
//! (1-indexed) has `d` leading entries `1/sqrt(d(d+1))`, then `-d/sqrt(d(d+1))`,
//! then zeros.

use faer::Mat;

use crate::error::{Error, Result};

/// Tolerance on `|sum(p) - 1|` accepted by [`ProbVector::new`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Entries at or below this value are treated as lying on the simplex boundary.
pub const MIN_INTERIOR_ENTRY: f64 = 1e-300;

/// Largest `K` for which the dense Helmert matrix is materialized.
pub const DENSE_HELMERT_MAX_CLASSES: usize = 1024;

/// Default overlap tolerance for the noise-level rule.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// A point of the probability simplex: `K` nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidDimension(format!(
                "probability vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("invalid probability entry {v}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Domain(format!("entries sum to {sum}, not 1")));
        }
        Ok(Self(values))
    }

    pub fn uniform(classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / classes as f64; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// True when every entry is strictly inside the simplex.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&v| v > MIN_INTERIOR_ENTRY)
    }

    fn logs(&self) -> Result<Vec<f64>> {
        if !self.is_interior() {
            return Err(Error::Domain(
                "log-ratio map is undefined on the simplex boundary".into(),
            ));
        }
        Ok(self.0.iter().map(|v| v.ln()).collect())
    }
}

/// ILR coordinates: a finite vector in `R^(K-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension("empty latent vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("latent vector has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &LatentVector) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

/// Orthonormal `(K-1) x K` contrast basis defining the ILR coordinates.
///
/// The transform itself runs in `O(K)` using prefix/suffix sums; the dense
/// matrix is kept for `K <= 1024` as a reference.
#[derive(Debug, Clone)]
pub struct HelmertBasis {
    classes: usize,
    // 1 / sqrt(d (d + 1)) for d = 1..=D
    scales: Vec<f64>,
    dense: Option<Mat<f64>>,
}

impl HelmertBasis {
    pub fn new(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidDimension(format!(
                "Helmert basis needs K >= 2, got {classes}"
            )));
        }
        let dim = classes - 1;
        let scales: Vec<f64> = (1..=dim)
            .map(|d| 1.0 / ((d * (d + 1)) as f64).sqrt())
            .collect();
        let dense = (classes <= DENSE_HELMERT_MAX_CLASSES).then(|| {
            Mat::from_fn(dim, classes, |r, j| {
                let d = r + 1;
                if j < d {
                    scales[r]
                } else if j == d {
                    -(d as f64) * scales[r]
                } else {
                    0.0
                }
            })
        });
        Ok(Self {
            classes,
            scales,
            dense,
        })
    }

    /// Number of classes `K`.
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Latent dimension `D = K - 1`.
    pub fn dim(&self) -> usize {
        self.classes - 1
    }

    pub fn dense(&self) -> Option<&Mat<f64>> {
        self.dense.as_ref()
    }

    /// `H x` for a length-`K` vector, in `O(K)`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.classes);
        debug_assert_eq!(out.len(), self.dim());
        let mut prefix = 0.0;
        for (r, o) in out.iter_mut().enumerate() {
            let d = (r + 1) as f64;
            prefix += x[r];
            *o = (prefix - d * x[r + 1]) * self.scales[r];
        }
    }

    /// `H^T z` for a length-`D` vector, in `O(K)`.
    pub fn apply_transpose(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.dim());
        debug_assert_eq!(out.len(), self.classes);
        let dim = self.dim();
        // column j collects z_r * scale_r for every row r >= j
        let mut suffix = 0.0;
        for j in (0..self.classes).rev() {
            if j < dim {
                suffix += z[j] * self.scales[j];
            }
            let mut v = suffix;
            if j >= 1 {
                v -= j as f64 * z[j - 1] * self.scales[j - 1];
            }
            out[j] = v;
        }
    }

    /// Dense `H x`; `None` when the dense matrix was not materialized.
    pub fn apply_dense(&self, x: &[f64]) -> Option<Vec<f64>> {
        let h = self.dense.as_ref()?;
        Some(
            (0..h.nrows())
                .map(|r| (0..h.ncols()).map(|j| h[(r, j)] * x[j]).sum())
                .collect(),
        )
    }

    /// Dense `H^T z`; `None` when the dense matrix was not materialized.
    pub fn apply_transpose_dense(&self, z: &[f64]) -> Option<Vec<f64>> {
        let h = self.dense.as_ref()?;
        Some(
            (0..h.ncols())
                .map(|j| (0..h.nrows()).map(|r| h[(r, j)] * z[r]).sum())
                .collect(),
        )
    }

    /// Inverse ILR written into `out` (length `K`) without validation.
    pub fn inverse_into(&self, z: &[f64], out: &mut [f64]) {
        self.apply_transpose(z, out);
        softmax_in_place(out);
    }

    fn check_classes(&self, k: usize, what: &str) -> Result<()> {
        if k != self.classes {
            return Err(Error::Shape(format!(
                "{what} has {k} classes, basis has {}",
                self.classes
            )));
        }
        Ok(())
    }
}

/// The Helmert contrast basis for `K` classes.
pub fn helmert_basis(classes: usize) -> Result<HelmertBasis> {
    HelmertBasis::new(classes)
}

/// Label-smoothing setup: `mu^(k) = lambda e_k + (1 - lambda) / K`, plus the
/// overlap tolerance used to pick the latent noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    lambda: f64,
    classes: usize,
    epsilon: f64,
}

impl SmoothingConfig {
    pub fn new(lambda: f64, classes: usize, epsilon: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        if classes < 2 {
            return Err(Error::InvalidDimension(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        Ok(Self {
            lambda,
            classes,
            epsilon,
        })
    }

    pub fn with_default_epsilon(lambda: f64, classes: usize) -> Result<Self> {
        Self::new(lambda, classes, DEFAULT_EPSILON)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `L = log(1 + K lambda / (1 - lambda))`, the log-ratio between the
    /// large and small entries of a smoothed target.
    pub fn log_ratio(&self) -> f64 {
        let k = self.classes as f64;
        (k * self.lambda / (1.0 - self.lambda)).ln_1p()
    }
}

/// `phi(p) = H log p`.
pub fn ilr_forward(p: &ProbVector, basis: &HelmertBasis) -> Result<LatentVector> {
    basis.check_classes(p.len(), "probability vector")?;
    let logs = p.logs()?;
    let mut z = vec![0.0; basis.dim()];
    basis.apply(&logs, &mut z);
    Ok(LatentVector(z))
}

/// `phi^-1(z) = softmax(H^T z)`.
pub fn ilr_inverse(z: &LatentVector, basis: &HelmertBasis) -> Result<ProbVector> {
    if z.len() != basis.dim() {
        return Err(Error::Shape(format!(
            "latent vector has length {}, basis expects {}",
            z.len(),
            basis.dim()
        )));
    }
    let mut p = vec![0.0; basis.classes()];
    basis.inverse_into(&z.0, &mut p);
    Ok(ProbVector(p))
}

fn check_pair(x: &ProbVector, y: &ProbVector) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "compositions have {} and {} parts",
            x.len(),
            y.len()
        )));
    }
    Ok((x.logs()?, y.logs()?))
}

/// Aitchison inner product, evaluated as the double sum over log-ratios.
pub fn aitchison_inner(x: &ProbVector, y: &ProbVector) -> Result<f64> {
    let (lx, ly) = check_pair(x, y)?;
    let k = lx.len();
    let mut acc = 0.0;
    for i in 0..k {
        for j in 0..k {
            acc += (lx[i] - lx[j]) * (ly[i] - ly[j]);
        }
    }
    Ok(acc / (2.0 * k as f64))
}

/// Aitchison distance, evaluated as the double sum over log-ratios.
pub fn aitchison_distance(x: &ProbVector, y: &ProbVector) -> Result<f64> {
    let (lx, ly) = check_pair(x, y)?;
    let k = lx.len();
    let mut acc = 0.0;
    for i in 0..k {
        for j in 0..k {
            let diff = (lx[i] - lx[j]) - (ly[i] - ly[j]);
            acc += diff * diff;
        }
    }
    Ok((acc / (2.0 * k as f64)).sqrt())
}

/// Smoothed simplex target `mu^(k)` and its ILR image `m^(k)`. Classes are
/// 0-based.
pub fn class_target(
    class: usize,
    cfg: &SmoothingConfig,
    basis: &HelmertBasis,
) -> Result<(ProbVector, LatentVector)> {
    let k = cfg.classes();
    if class >= k {
        return Err(Error::ClassIndex {
            index: class,
            classes: k,
        });
    }
    basis.check_classes(k, "smoothing config")?;
    let base = (1.0 - cfg.lambda()) / k as f64;
    let mut mu = vec![base; k];
    mu[class] += cfg.lambda();
    let mu = ProbVector(mu);
    let m = ilr_forward(&mu, basis)?;
    Ok((mu, m))
}

/// ILR images of every class target, indexed by class.
pub fn class_targets(cfg: &SmoothingConfig, basis: &HelmertBasis) -> Result<Vec<LatentVector>> {
    (0..cfg.classes())
        .map(|c| class_target(c, cfg, basis).map(|(_, m)| m))
        .collect()
}

/// Class whose target is closest to `z` (the Voronoi cell containing `z`).
/// Ties go to the lowest index.
pub fn nearest_class(z: &[f64], targets: &[LatentVector]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, t) in targets.iter().enumerate() {
        let d: f64 = z.iter().zip(&t.0).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Common distance between any two distinct class targets,
/// `sqrt(2) log(1 + K lambda / (1 - lambda))`.
pub fn separation_delta(cfg: &SmoothingConfig) -> f64 {
    std::f64::consts::SQRT_2 * cfg.log_ratio()
}

/// Largest latent noise standard deviation for which a class-`k`
/// pseudo-observation leaves the Voronoi cell of `m^(k)` with probability at
/// most `epsilon`: `delta / (2 z_{1 - epsilon / D})`.
pub fn sigma_bound(cfg: &SmoothingConfig) -> f64 {
    let dim = (cfg.classes() - 1) as f64;
    // z_{1-q} = -z_q keeps precision for tiny tail masses
    let z = -normal_quantile(cfg.epsilon() / dim)
        .expect("epsilon / D lies in (0, 1) for a validated config");
    separation_delta(cfg) / (2.0 * z)
}

/// Inverse of the standard normal CDF.
///
/// Wichura's AS241 (PPND16) rational approximations; relative accuracy is
/// about 1e-16 over the whole open interval.
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile level {q} outside (0, 1)")));
    }
    let p = q - 0.5;
    if p.abs() <= 0.425 {
        let r = 0.180625 - p * p;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return Ok(p * num / den);
    }
    let tail = if p < 0.0 { q } else { 1.0 - q };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    Ok(if p < 0.0 { -value } else { value })
}

/// Numerically stable softmax, in place.
pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn random_interior(rng: &mut ChaCha8Rng, k: usize) -> ProbVector {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        ProbVector::new(raw.into_iter().map(|v| v / s).collect()).unwrap()
    }

    #[test]
    fn helmert_rows_for_small_k() {
        let h2 = helmert_basis(2).unwrap();
        let d = h2.dense().unwrap();
        assert_abs_diff_eq!(d[(0, 0)], 0.7071067811865476, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 1)], -0.7071067811865476, epsilon = 1e-15);

        let h3 = helmert_basis(3).unwrap();
        let d = h3.dense().unwrap();
        let expect = [
            [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0],
            [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()],
        ];
        for r in 0..2 {
            for c in 0..3 {
                assert_abs_diff_eq!(d[(r, c)], expect[r][c], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn helmert_is_orthonormal_contrast_basis() {
        for k in [2, 3, 4, 7, 26, 100, 512] {
            let h = helmert_basis(k).unwrap();
            let d = h.dense().unwrap();
            let dim = k - 1;
            for a in 0..dim {
                let row_sum: f64 = (0..k).map(|j| d[(a, j)]).sum();
                assert!(row_sum.abs() <= 1e-12, "K={k} row {a} sum {row_sum}");
                for b in 0..dim {
                    let dot: f64 = (0..k).map(|j| d[(a, j)] * d[(b, j)]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() <= 1e-12, "K={k} ({a},{b}) {dot}");
                }
            }
        }
    }

    #[test]
    fn helmert_rejects_single_class() {
        assert!(matches!(helmert_basis(1), Err(Error::InvalidDimension(_))));
        assert!(matches!(helmert_basis(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn structured_transform_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [2, 3, 5, 17, 64, 300] {
            let h = helmert_basis(k).unwrap();
            let x: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut fast = vec![0.0; k - 1];
            h.apply(&x, &mut fast);
            for (a, b) in fast.iter().zip(h.apply_dense(&x).unwrap()) {
                assert!((a - b).abs() <= 1e-12);
            }
            let z: Vec<f64> = (0..k - 1).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut fast_t = vec![0.0; k];
            h.apply_transpose(&z, &mut fast_t);
            for (a, b) in fast_t.iter().zip(h.apply_transpose_dense(&z).unwrap()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn dense_matrix_only_up_to_limit() {
        assert!(helmert_basis(1024).unwrap().dense().is_some());
        assert!(helmert_basis(1025).unwrap().dense().is_none());
    }

    #[test]
    fn forward_examples() {
        let h = helmert_basis(4).unwrap();
        let z = ilr_forward(&ProbVector::uniform(4).unwrap(), &h).unwrap();
        assert!(z.as_slice().iter().all(|v| v.abs() < 1e-15));

        let h2 = helmert_basis(2).unwrap();
        let p = ProbVector::new(vec![0.9, 0.1]).unwrap();
        let z = ilr_forward(&p, &h2).unwrap();
        assert_abs_diff_eq!(z.as_slice()[0], 1.553_672_398_424_186_4, epsilon = 1e-12);
    }

    #[test]
    fn forward_rejects_boundary() {
        let h = helmert_basis(3).unwrap();
        let p = ProbVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert!(matches!(ilr_forward(&p, &h), Err(Error::Domain(_))));
        let tiny = ProbVector::new(vec![0.5, 0.5, 1e-301]).unwrap();
        assert!(matches!(ilr_forward(&tiny, &h), Err(Error::Domain(_))));
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let h = helmert_basis(3).unwrap();
        let p = ProbVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(ilr_forward(&p, &h), Err(Error::Shape(_))));
    }

    #[test]
    fn inverse_examples() {
        let h = helmert_basis(5).unwrap();
        let p = ilr_inverse(&LatentVector::new(vec![0.0; 4]).unwrap(), &h).unwrap();
        for v in p.as_slice() {
            assert_abs_diff_eq!(*v, 0.2, epsilon = 1e-15);
        }

        let h2 = helmert_basis(2).unwrap();
        let z = LatentVector::new(vec![1.553_672_398_424_186_4]).unwrap();
        let p = ilr_inverse(&z, &h2).unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(p.as_slice()[1], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn inverse_saturates_towards_vertex() {
        let k = 4;
        let h = helmert_basis(k).unwrap();
        let cfg = SmoothingConfig::with_default_epsilon(0.9, k).unwrap();
        let (_, m) = class_target(2, &cfg, &h).unwrap();
        let mut last = 0.0;
        for scale in [1.0, 5.0, 20.0, 80.0] {
            let z = LatentVector::new(m.as_slice().iter().map(|v| v * scale).collect()).unwrap();
            let p = ilr_inverse(&z, &h).unwrap();
            assert!(p.as_slice()[2] >= last);
            last = p.as_slice()[2];
        }
        assert!(last > 1.0 - 1e-12);
    }

    #[test]
    fn non_finite_latent_is_rejected() {
        assert!(matches!(
            LatentVector::new(vec![0.0, f64::NAN]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.2, -0.2]).is_err());
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn aitchison_inner_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = ProbVector::uniform(5).unwrap();
        let h = helmert_basis(5).unwrap();
        for _ in 0..20 {
            let x = random_interior(&mut rng, 5);
            let y = random_interior(&mut rng, 5);
            assert!(aitchison_inner(&x, &u).unwrap().abs() < 1e-14);
            let zx = ilr_forward(&x, &h).unwrap();
            let zy = ilr_forward(&y, &h).unwrap();
            let dot: f64 = zx.as_slice().iter().zip(zy.as_slice()).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(aitchison_inner(&x, &y).unwrap(), dot, epsilon = 1e-10);
        }
    }

    #[test]
    fn target_inner_product_is_negative_l_squared_over_k() {
        for k in [2, 3, 7] {
            let cfg = SmoothingConfig::with_default_epsilon(0.8, k).unwrap();
            let h = helmert_basis(k).unwrap();
            let (mu0, _) = class_target(0, &cfg, &h).unwrap();
            let (mu1, _) = class_target(1, &cfg, &h).unwrap();
            let l = cfg.log_ratio();
            assert_abs_diff_eq!(
                aitchison_inner(&mu0, &mu1).unwrap(),
                -l * l / k as f64,
                epsilon = 1e-12
            );
            // squared norm of a target is (D / K) L^2
            assert_abs_diff_eq!(
                aitchison_inner(&mu0, &mu0).unwrap(),
                (k - 1) as f64 / k as f64 * l * l,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn distance_examples() {
        let x = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(aitchison_distance(&x, &x).unwrap(), 0.0);
        let cfg = SmoothingConfig::with_default_epsilon(0.9, 3).unwrap();
        let h = helmert_basis(3).unwrap();
        let (a, _) = class_target(0, &cfg, &h).unwrap();
        let (b, _) = class_target(2, &cfg, &h).unwrap();
        let want = 2f64.sqrt() * (1.0f64 + 3.0 * 0.9 / 0.1).ln();
        assert_abs_diff_eq!(aitchison_distance(&a, &b).unwrap(), want, epsilon = 1e-10);
    }

    #[test]
    fn boundary_inputs_rejected_by_aitchison_ops() {
        let x = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let y = ProbVector::uniform(2).unwrap();
        assert!(aitchison_inner(&x, &y).is_err());
        assert!(aitchison_distance(&y, &x).is_err());
    }

    #[test]
    fn class_target_examples() {
        let cfg = SmoothingConfig::with_default_epsilon(0.9, 3).unwrap();
        let h = helmert_basis(3).unwrap();
        let (mu, _) = class_target(0, &cfg, &h).unwrap();
        assert_abs_diff_eq!(mu.as_slice()[0], 0.9 + 0.1 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mu.as_slice()[1], 0.1 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mu.as_slice()[2], 0.1 / 3.0, epsilon = 1e-15);

        let small = SmoothingConfig::with_default_epsilon(1e-9, 3).unwrap();
        let (mu, m) = class_target(1, &small, &h).unwrap();
        assert!(mu.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-8));
        assert!(m.as_slice().iter().all(|v| v.abs() < 1e-8));

        assert!(matches!(
            class_target(3, &cfg, &h),
            Err(Error::ClassIndex { index: 3, classes: 3 })
        ));
    }

    #[test]
    fn target_pairwise_distances_are_equal() {
        for k in [3, 5, 12] {
            let cfg = SmoothingConfig::with_default_epsilon(0.95, k).unwrap();
            let h = helmert_basis(k).unwrap();
            let targets = class_targets(&cfg, &h).unwrap();
            let delta = separation_delta(&cfg);
            for a in 0..k {
                for b in 0..k {
                    if a != b {
                        assert_abs_diff_eq!(targets[a].distance(&targets[b]), delta, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn separation_delta_values() {
        let cfg = SmoothingConfig::with_default_epsilon(0.95, 3).unwrap();
        assert_abs_diff_eq!(separation_delta(&cfg), 5.742_333_574_757_786, epsilon = 1e-12);
        let cfg = SmoothingConfig::with_default_epsilon(0.9, 3).unwrap();
        assert_abs_diff_eq!(separation_delta(&cfg), 4.712_448_810_890_569, epsilon = 1e-12);
    }

    #[test]
    fn smoothing_config_validation() {
        assert!(SmoothingConfig::new(0.0, 3, 1e-6).is_err());
        assert!(SmoothingConfig::new(1.0, 3, 1e-6).is_err());
        assert!(SmoothingConfig::new(0.5, 3, 0.0).is_err());
        assert!(SmoothingConfig::new(0.5, 1, 0.1).is_err());
    }

    #[test]
    fn normal_quantile_reference_values() {
        // reference values from 40-digit arithmetic
        let cases = [
            (0.5, 0.0),
            (0.975, 1.959_963_984_540_054_2),
            (5e-7, -4.891_638_475_698_590_4),
            (0.999_999_5, 4.891_638_475_698_590_4),
            (1e-12, -7.034_483_825_301_132),
            (0.02, -2.053_748_910_631_823),
            (0.3, -0.524_400_512_708_040_8),
            (0.999, 3.090_232_306_167_813_5),
        ];
        for (q, want) in cases {
            let got = normal_quantile(q).unwrap();
            assert!((got - want).abs() <= 1e-9, "q={q}: {got} vs {want}");
        }
    }

    #[test]
    fn normal_quantile_round_trips_through_cdf() {
        let n = Normal::standard();
        let mut qs: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        qs.extend([1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1.0 - 1e-4, 1.0 - 1e-6, 1.0 - 1e-10]);
        for q in qs {
            let x = normal_quantile(q).unwrap();
            assert!((n.cdf(x) - q).abs() <= 1e-9, "q={q}");
        }
    }

    #[test]
    fn normal_quantile_domain() {
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(normal_quantile(q), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn sigma_bound_values_and_monotonicity() {
        let cfg = SmoothingConfig::new(0.9, 3, 1e-6).unwrap();
        assert_abs_diff_eq!(sigma_bound(&cfg), 0.481_684_085_434_949_24, epsilon = 1e-10);
        let cfg = SmoothingConfig::new(0.99, 10, 1e-6).unwrap();
        assert_abs_diff_eq!(sigma_bound(&cfg), 0.941_774_887_485_231, epsilon = 1e-10);

        let base = sigma_bound(&SmoothingConfig::new(0.9, 3, 1e-6).unwrap());
        assert!(sigma_bound(&SmoothingConfig::new(0.9, 3, 1e-8).unwrap()) < base);
        assert!(sigma_bound(&SmoothingConfig::new(0.95, 3, 1e-6).unwrap()) > base);
    }

    #[test]
    fn sigma_bound_controls_voronoi_escape() {
        use rand_distr::StandardNormal;
        let eps = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in [3, 5] {
            let cfg = SmoothingConfig::new(0.9, k, eps).unwrap();
            let h = helmert_basis(k).unwrap();
            let targets = class_targets(&cfg, &h).unwrap();
            let sigma = sigma_bound(&cfg);
            let n = 100_000;
            let mut escaped = 0usize;
            let mut z = vec![0.0; k - 1];
            for _ in 0..n {
                for (zi, mi) in z.iter_mut().zip(targets[0].as_slice()) {
                    let e: f64 = rng.sample(StandardNormal);
                    *zi = mi + sigma * e;
                }
                if nearest_class(&z, &targets) != 0 {
                    escaped += 1;
                }
            }
            let rate = escaped as f64 / n as f64;
            assert!(rate <= eps + 3.0 * (eps * (1.0 - eps) / n as f64).sqrt(), "K={k} rate={rate}");
        }
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut a = vec![1.0, 2.0, 3.0];
        let mut b = vec![1001.0, 1002.0, 1003.0];
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    fn interior_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::sample::select(vec![2usize, 3, 5, 10, 26])
            .prop_flat_map(|k| prop::collection::vec(0.001f64..1.0, k))
    }

    proptest! {
        #[test]
        fn ilr_is_an_isometry(a in interior_strategy(), seed in any::<u64>()) {
            let k = a.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sa: f64 = a.iter().sum();
            let x = ProbVector::new(a.iter().map(|v| v / sa).collect()).unwrap();
            let y = random_interior(&mut rng, k);
            let h = helmert_basis(k).unwrap();
            let d_a = aitchison_distance(&x, &y).unwrap();
            let d_e = ilr_forward(&x, &h).unwrap().distance(&ilr_forward(&y, &h).unwrap());
            prop_assert!((d_a - d_e).abs() <= 1e-9);
        }

        #[test]
        fn ilr_round_trips(a in interior_strategy()) {
            let k = a.len();
            let s: f64 = a.iter().sum();
            let p = ProbVector::new(a.iter().map(|v| v / s).collect()).unwrap();
            let h = helmert_basis(k).unwrap();
            let z = ilr_forward(&p, &h).unwrap();
            let back = ilr_inverse(&z, &h).unwrap();
            for (u, v) in p.as_slice().iter().zip(back.as_slice()) {
                prop_assert!((u - v).abs() <= 1e-10);
            }
            let z2 = ilr_forward(&back, &h).unwrap();
            for (u, v) in z.as_slice().iter().zip(z2.as_slice()) {
                prop_assert!((u - v).abs() <= 1e-10);
            }
        }
    }
}
