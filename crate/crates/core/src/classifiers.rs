//! ILR and Dirichlet-based (GPD) classifiers on top of the GP backends.
//!
//! Both turn labels into Gaussian pseudo-observations, fit one shared-kernel
//! GP over the latent coordinates and predict class probabilities by
//! averaging Monte-Carlo draws pushed through an inverse link: the inverse
//! ILR map for K-1 coordinates, a softmax for the GPD's K coordinates.

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::gen_overlap_toy;
use crate::error::{Error, Result};
use crate::gp::{fit_exact, ExactGpModel, LatentPredictive, NoiseVariance, PseudoObservations};
use crate::kernel::RbfKernel;
use crate::metrics::error_rate;
use crate::optim::OptConfig;
use crate::simplex::{class_targets, sigma_bound, softmax_in_place, HelmertBasis, LatentVector, SmoothingConfig};
use crate::sparse::{fit_collapsed, CollapsedGpModel};

pub const DEFAULT_MC_SAMPLES: usize = 1000;

/// Which predictive the Monte-Carlo draws come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PredictionMode {
    /// `p(f* | D)`, the latent function.
    #[default]
    #[serde(rename = "latent-f")]
    Latent,
    /// `p(z* | D)`, a new noisy pseudo-observation.
    #[serde(rename = "noisy-z")]
    Noisy,
}

impl std::str::FromStr for PredictionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent-f" | "latent" | "f" => Ok(Self::Latent),
            "noisy-z" | "noisy" | "z" => Ok(Self::Noisy),
            other => Err(Error::Config(format!("unknown prediction mode '{other}'"))),
        }
    }
}

impl PredictionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Latent => "latent-f",
            Self::Noisy => "noisy-z",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Backend {
    #[default]
    Exact,
    /// Collapsed bound with `inducing` k-means++ points chosen with `seed`.
    Collapsed { inducing: usize, seed: u64 },
}

/// A fitted GP from either backend.
#[derive(Debug, Clone)]
pub enum LatentGp {
    Exact(ExactGpModel),
    Collapsed(CollapsedGpModel),
}

impl LatentGp {
    pub fn fit(x: Mat<f64>, pseudo: PseudoObservations, backend: Backend, opt: &OptConfig) -> Result<Self> {
        Ok(match backend {
            Backend::Exact => Self::Exact(fit_exact(x, pseudo, opt)?),
            Backend::Collapsed { inducing, seed } => {
                Self::Collapsed(fit_collapsed(x, pseudo, inducing, seed, opt)?)
            }
        })
    }

    pub fn kernel(&self) -> &RbfKernel {
        match self {
            Self::Exact(m) => m.kernel(),
            Self::Collapsed(m) => m.kernel(),
        }
    }

    pub fn pseudo(&self) -> &PseudoObservations {
        match self {
            Self::Exact(m) => m.pseudo(),
            Self::Collapsed(m) => m.pseudo(),
        }
    }

    pub fn x_train(&self) -> MatRef<'_, f64> {
        match self {
            Self::Exact(m) => m.x_train(),
            Self::Collapsed(m) => m.x_train(),
        }
    }

    /// Training objective at the fitted hyperparameters.
    pub fn objective(&self) -> f64 {
        match self {
            Self::Exact(m) => m.log_marginal_likelihood(),
            Self::Collapsed(m) => m.bound(),
        }
    }

    pub fn predictive(&self, x_star: MatRef<'_, f64>, mode: PredictionMode) -> Result<Vec<LatentPredictive>> {
        match (self, mode) {
            (Self::Exact(m), PredictionMode::Latent) => m.predict_latent_batch(x_star),
            (Self::Exact(m), PredictionMode::Noisy) => m.predict_observation_batch(x_star),
            (Self::Collapsed(m), PredictionMode::Latent) => m.predict_latent_batch(x_star),
            (Self::Collapsed(m), PredictionMode::Noisy) => m.predict_observation_batch(x_star),
        }
    }
}

/// Averaged class probabilities for `T` test points with their argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub probs: Vec<Vec<f64>>,
    pub labels_hat: Vec<usize>,
}

/// Argmax with ties going to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Averages `link` over `samples` Gaussian draws per test point. Point `t`
/// draws from stream `t` of a generator seeded with `seed`, so results do not
/// depend on evaluation order.
pub fn monte_carlo_probs<L>(preds: &[LatentPredictive], classes: usize, samples: usize, seed: u64, link: L) -> PredictionSet
where
    L: Fn(&[f64], &mut [f64]),
{
    let mut probs = Vec::with_capacity(preds.len());
    let mut z = Vec::new();
    let mut out = vec![0.0; classes];
    for (t, pred) in preds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let sd: Vec<f64> = pred.variance.iter().map(|v| v.sqrt()).collect();
        z.resize(pred.dim(), 0.0);
        let mut acc = vec![0.0; classes];
        for _ in 0..samples {
            for d in 0..pred.dim() {
                let e: f64 = rng.sample(StandardNormal);
                z[d] = pred.mean[d] + sd[d] * e;
            }
            link(&z, &mut out);
            for (a, o) in acc.iter_mut().zip(&out) {
                *a += o;
            }
        }
        let total: f64 = acc.iter().sum();
        acc.iter_mut().for_each(|a| *a /= total);
        probs.push(acc);
    }
    let labels_hat = probs.iter().map(|p| argmax(p)).collect();
    PredictionSet { probs, labels_hat }
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::InvalidDimension("no labels".into()));
    }
    match labels.iter().find(|&&c| c >= classes) {
        Some(&bad) => Err(Error::ClassIndex { index: bad, classes }),
        None => Ok(()),
    }
}

fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(Error::Config("Monte-Carlo sample count must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlrClassifierConfig {
    pub smoothing: SmoothingConfig,
    /// Latent noise standard deviation; at most `sigma_bound(smoothing)`.
    pub noise_sigma: f64,
    pub mc_samples: usize,
    pub prediction_mode: PredictionMode,
    pub backend: Backend,
    pub opt: OptConfig,
}

impl IlrClassifierConfig {
    /// Noise set to the largest admissible value.
    pub fn new(smoothing: SmoothingConfig) -> Self {
        Self {
            noise_sigma: sigma_bound(&smoothing),
            smoothing,
            mc_samples: DEFAULT_MC_SAMPLES,
            prediction_mode: PredictionMode::default(),
            backend: Backend::default(),
            opt: OptConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_samples(self.mc_samples)?;
        let bound = sigma_bound(&self.smoothing);
        if !(self.noise_sigma > 0.0) || self.noise_sigma > bound {
            return Err(Error::Config(format!(
                "noise sigma must lie in (0, {bound}], got {}",
                self.noise_sigma
            )));
        }
        self.opt.validate()
    }
}

/// Pseudo-observations `m^(c_n)` with shared noise `noise_sigma^2`.
pub fn build_ilr_pseudo(labels: &[usize], cfg: &IlrClassifierConfig) -> Result<PseudoObservations> {
    let k = cfg.smoothing.classes();
    check_labels(labels, k)?;
    let basis = HelmertBasis::new(k)?;
    let targets = class_targets(&cfg.smoothing, &basis)?;
    let z = Mat::from_fn(labels.len(), k - 1, |i, d| targets[labels[i]].as_slice()[d]);
    PseudoObservations::new(z, NoiseVariance::Shared(cfg.noise_sigma * cfg.noise_sigma))
}

#[derive(Debug, Clone)]
pub struct IlrClassifier {
    cfg: IlrClassifierConfig,
    basis: HelmertBasis,
    targets: Vec<LatentVector>,
    gp: LatentGp,
}

impl IlrClassifier {
    pub fn fit(x: Mat<f64>, labels: &[usize], cfg: &IlrClassifierConfig) -> Result<Self> {
        cfg.validate()?;
        let pseudo = build_ilr_pseudo(labels, cfg)?;
        let gp = LatentGp::fit(x, pseudo, cfg.backend, &cfg.opt)?;
        Self::from_gp(gp, cfg.clone())
    }

    /// Wraps an already conditioned GP.
    pub fn from_gp(gp: LatentGp, cfg: IlrClassifierConfig) -> Result<Self> {
        cfg.validate()?;
        let basis = HelmertBasis::new(cfg.smoothing.classes())?;
        let targets = class_targets(&cfg.smoothing, &basis)?;
        if gp.pseudo().dim() != basis.dim() {
            return Err(Error::Shape(format!(
                "GP has {} outputs, ILR needs {}",
                gp.pseudo().dim(),
                basis.dim()
            )));
        }
        Ok(Self { cfg, basis, targets, gp })
    }

    pub fn config(&self) -> &IlrClassifierConfig {
        &self.cfg
    }

    pub fn gp(&self) -> &LatentGp {
        &self.gp
    }

    pub fn classes(&self) -> usize {
        self.basis.classes()
    }

    /// Class targets `m^(k)` in latent space.
    pub fn targets(&self) -> &[LatentVector] {
        &self.targets
    }

    pub fn predict_proba(&self, x_star: MatRef<'_, f64>, seed: u64) -> Result<PredictionSet> {
        self.predict_proba_with(x_star, self.cfg.prediction_mode, self.cfg.mc_samples, seed)
    }

    pub fn predict_proba_with(
        &self,
        x_star: MatRef<'_, f64>,
        mode: PredictionMode,
        samples: usize,
        seed: u64,
    ) -> Result<PredictionSet> {
        check_samples(samples)?;
        let preds = self.gp.predictive(x_star, mode)?;
        Ok(monte_carlo_probs(&preds, self.classes(), samples, seed, |z, out| {
            self.basis.inverse_into(z, out)
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpdClassifierConfig {
    pub classes: usize,
    pub alpha_eps: f64,
    pub mc_samples: usize,
    pub prediction_mode: PredictionMode,
    pub backend: Backend,
    pub opt: OptConfig,
}

impl GpdClassifierConfig {
    pub fn new(classes: usize, alpha_eps: f64) -> Self {
        Self {
            classes,
            alpha_eps,
            mc_samples: DEFAULT_MC_SAMPLES,
            prediction_mode: PredictionMode::default(),
            backend: Backend::default(),
            opt: OptConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_samples(self.mc_samples)?;
        if self.classes < 2 {
            return Err(Error::InvalidDimension(format!("need at least 2 classes, got {}", self.classes)));
        }
        if !(self.alpha_eps > 0.0 && self.alpha_eps.is_finite()) {
            return Err(Error::Config(format!("alpha_eps must be positive, got {}", self.alpha_eps)));
        }
        self.opt.validate()
    }
}

/// Lognormal moment match of a Gamma(alpha, 1) variable: returns
/// `(log alpha - s2 / 2, s2)` with `s2 = log(1 + 1 / alpha)`.
pub fn gpd_moments(alpha: f64) -> (f64, f64) {
    let s2 = (1.0 / alpha).ln_1p();
    (alpha.ln() - 0.5 * s2, s2)
}

/// K target columns from concentrations `1 + alpha_eps` (true class) and
/// `alpha_eps` (others), with per-entry noise.
pub fn build_gpd_pseudo(labels: &[usize], cfg: &GpdClassifierConfig) -> Result<PseudoObservations> {
    let k = cfg.classes;
    check_labels(labels, k)?;
    let (on_mean, on_var) = gpd_moments(1.0 + cfg.alpha_eps);
    let (off_mean, off_var) = gpd_moments(cfg.alpha_eps);
    let z = Mat::from_fn(labels.len(), k, |i, j| if labels[i] == j { on_mean } else { off_mean });
    let noise = (0..k)
        .map(|j| labels.iter().map(|&c| if c == j { on_var } else { off_var }).collect())
        .collect();
    PseudoObservations::new(z, NoiseVariance::PerEntry(noise))
}

#[derive(Debug, Clone)]
pub struct GpdClassifier {
    cfg: GpdClassifierConfig,
    gp: LatentGp,
}

impl GpdClassifier {
    pub fn fit(x: Mat<f64>, labels: &[usize], cfg: &GpdClassifierConfig) -> Result<Self> {
        cfg.validate()?;
        let pseudo = build_gpd_pseudo(labels, cfg)?;
        let gp = LatentGp::fit(x, pseudo, cfg.backend, &cfg.opt)?;
        Self::from_gp(gp, cfg.clone())
    }

    pub fn from_gp(gp: LatentGp, cfg: GpdClassifierConfig) -> Result<Self> {
        cfg.validate()?;
        if gp.pseudo().dim() != cfg.classes {
            return Err(Error::Shape(format!(
                "GP has {} outputs, GPD needs {}",
                gp.pseudo().dim(),
                cfg.classes
            )));
        }
        Ok(Self { cfg, gp })
    }

    pub fn config(&self) -> &GpdClassifierConfig {
        &self.cfg
    }

    pub fn gp(&self) -> &LatentGp {
        &self.gp
    }

    pub fn classes(&self) -> usize {
        self.cfg.classes
    }

    pub fn predict_proba(&self, x_star: MatRef<'_, f64>, seed: u64) -> Result<PredictionSet> {
        self.predict_proba_with(x_star, self.cfg.prediction_mode, self.cfg.mc_samples, seed)
    }

    pub fn predict_proba_with(
        &self,
        x_star: MatRef<'_, f64>,
        mode: PredictionMode,
        samples: usize,
        seed: u64,
    ) -> Result<PredictionSet> {
        check_samples(samples)?;
        let preds = self.gp.predictive(x_star, mode)?;
        Ok(monte_carlo_probs(&preds, self.classes(), samples, seed, |z, out| {
            out.copy_from_slice(z);
            softmax_in_place(out);
        }))
    }
}

/// Either classifier behind one interface.
#[derive(Debug, Clone)]
pub enum Classifier {
    Ilr(IlrClassifier),
    Gpd(GpdClassifier),
}

impl Classifier {
    pub fn classes(&self) -> usize {
        match self {
            Self::Ilr(c) => c.classes(),
            Self::Gpd(c) => c.classes(),
        }
    }

    pub fn gp(&self) -> &LatentGp {
        match self {
            Self::Ilr(c) => c.gp(),
            Self::Gpd(c) => c.gp(),
        }
    }

    pub fn predict_proba(&self, x_star: MatRef<'_, f64>, seed: u64) -> Result<PredictionSet> {
        match self {
            Self::Ilr(c) => c.predict_proba(x_star, seed),
            Self::Gpd(c) => c.predict_proba(x_star, seed),
        }
    }

    pub fn predict_proba_with(
        &self,
        x_star: MatRef<'_, f64>,
        mode: PredictionMode,
        samples: usize,
        seed: u64,
    ) -> Result<PredictionSet> {
        match self {
            Self::Ilr(c) => c.predict_proba_with(x_star, mode, samples, seed),
            Self::Gpd(c) => c.predict_proba_with(x_star, mode, samples, seed),
        }
    }
}

/// Stable seed for one (experiment, model, index) cell: FNV-1a over the tag,
/// then a splitmix64 round per extra part.
pub fn derive_seed(tag: &str, parts: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownConfig {
    pub s: f64,
    pub lambda: f64,
    pub alpha_eps: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: usize,
    pub mc_samples: usize,
    pub opt: OptConfig,
}

impl Default for BreakdownConfig {
    fn default() -> Self {
        Self {
            s: 0.1,
            lambda: 0.9,
            alpha_eps: 0.01,
            n_train: 1000,
            n_test: 1000,
            seeds: 5,
            mc_samples: 1,
            opt: OptConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRun {
    pub seed: usize,
    pub model: String,
    pub mode: PredictionMode,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownCell {
    pub model: String,
    pub mode: PredictionMode,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub runs: Vec<BreakdownRun>,
    pub cells: Vec<BreakdownCell>,
}

impl BreakdownReport {
    pub fn cell(&self, model: &str, mode: PredictionMode) -> Option<&BreakdownCell> {
        self.cells.iter().find(|c| c.model == model && c.mode == mode)
    }
}

/// Exact ILR and GPD on the separated three-class toy, scored with single
/// Monte-Carlo draws from both the latent and the noisy predictive.
pub fn breakdown_experiment(cfg: &BreakdownConfig) -> Result<BreakdownReport> {
    let modes = [PredictionMode::Latent, PredictionMode::Noisy];
    let mut runs = Vec::new();
    for seed in 0..cfg.seeds {
        let idx = seed as u64;
        let train = gen_overlap_toy(cfg.s, cfg.n_train, derive_seed("breakdown/train", &[idx]))?;
        let test = gen_overlap_toy(cfg.s, cfg.n_test, derive_seed("breakdown/test", &[idx]))?;

        let mut ilr_cfg = IlrClassifierConfig::new(SmoothingConfig::with_default_epsilon(cfg.lambda, 3)?);
        ilr_cfg.opt = cfg.opt;
        let ilr = IlrClassifier::fit(train.x.clone(), &train.labels, &ilr_cfg)?;
        let mut gpd_cfg = GpdClassifierConfig::new(3, cfg.alpha_eps);
        gpd_cfg.opt = cfg.opt;
        let gpd = GpdClassifier::fit(train.x.clone(), &train.labels, &gpd_cfg)?;

        for mode in modes {
            let s = derive_seed("breakdown/predict/ilr", &[idx]);
            let p = ilr.predict_proba_with(test.x.as_ref(), mode, cfg.mc_samples, s)?;
            runs.push(BreakdownRun {
                seed,
                model: "ilr".into(),
                mode,
                error: error_rate(&p.labels_hat, &test.labels)?,
            });
            let s = derive_seed("breakdown/predict/gpd", &[idx]);
            let p = gpd.predict_proba_with(test.x.as_ref(), mode, cfg.mc_samples, s)?;
            runs.push(BreakdownRun {
                seed,
                model: "gpd".into(),
                mode,
                error: error_rate(&p.labels_hat, &test.labels)?,
            });
        }
    }
    let mut cells = Vec::new();
    for model in ["ilr", "gpd"] {
        for mode in modes {
            let errs: Vec<f64> = runs
                .iter()
                .filter(|r| r.model == model && r.mode == mode)
                .map(|r| r.error)
                .collect();
            let (mean, sd) = mean_sd(&errs);
            cells.push(BreakdownCell {
                model: model.into(),
                mode,
                mean,
                sd,
            });
        }
    }
    Ok(BreakdownReport { runs, cells })
}

/// Fraction of draws from the GPD pseudo-observation distribution of a
/// class-0 label whose argmax is not class 0. No GP is involved.
pub fn gpd_label_recovery_error(classes: usize, alpha_eps: f64, samples: usize, seed: u64) -> Result<f64> {
    if classes < 2 {
        return Err(Error::InvalidDimension(format!("need at least 2 classes, got {classes}")));
    }
    if !(alpha_eps > 0.0 && alpha_eps.is_finite()) {
        return Err(Error::Config(format!("alpha_eps must be positive, got {alpha_eps}")));
    }
    check_samples(samples)?;
    let (on_mean, on_var) = gpd_moments(1.0 + alpha_eps);
    let (off_mean, off_var) = gpd_moments(alpha_eps);
    let (on_sd, off_sd) = (on_var.sqrt(), off_var.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wrong = 0usize;
    for _ in 0..samples {
        let true_z = on_mean + on_sd * rng.sample::<f64, _>(StandardNormal);
        let mut lost = false;
        for _ in 1..classes {
            // draw every coordinate so the stream layout does not depend on outcomes
            let z = off_mean + off_sd * rng.sample::<f64, _>(StandardNormal);
            lost |= z > true_z;
        }
        wrong += usize::from(lost);
    }
    Ok(wrong as f64 / samples as f64)
}
