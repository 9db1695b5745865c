//! Serializable model specifications, fitting and evaluation on datasets,
//! and validation sweeps over the smoothing grids.

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    Backend, Classifier, GpdClassifier, GpdClassifierConfig, IlrClassifier, IlrClassifierConfig, PredictionMode,
    DEFAULT_MC_SAMPLES,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::optim::OptConfig;
use crate::simplex::{SmoothingConfig, DEFAULT_EPSILON};

pub const LAMBDA_GRID: [f64; 4] = [0.95, 0.99, 0.999, 0.9999];
pub const ALPHA_EPS_GRID: [f64; 4] = [0.1, 0.01, 0.001, 0.0001];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Ilr,
    Gpd,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ilr" => Ok(Self::Ilr),
            "gpd" => Ok(Self::Gpd),
            other => Err(Error::Config(format!("unknown model '{other}' (expected ilr or gpd)"))),
        }
    }
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ilr => "ilr",
            Self::Gpd => "gpd",
        }
    }
}

/// Everything needed to fit either classifier, apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: ModelKind,
    pub classes: usize,
    pub lambda: f64,
    pub epsilon: f64,
    /// ILR latent noise sd; `None` uses the largest admissible value.
    pub noise_sigma: Option<f64>,
    pub alpha_eps: f64,
    pub mc_samples: usize,
    pub prediction_mode: PredictionMode,
    pub backend: Backend,
    pub opt: OptConfig,
}

impl ModelSpec {
    pub fn new(model: ModelKind, classes: usize) -> Self {
        Self {
            model,
            classes,
            lambda: 0.9,
            epsilon: DEFAULT_EPSILON,
            noise_sigma: None,
            alpha_eps: 0.01,
            mc_samples: DEFAULT_MC_SAMPLES,
            prediction_mode: PredictionMode::default(),
            backend: Backend::default(),
            opt: OptConfig::default(),
        }
    }

    pub fn ilr_config(&self) -> Result<IlrClassifierConfig> {
        let mut cfg = IlrClassifierConfig::new(SmoothingConfig::new(self.lambda, self.classes, self.epsilon)?);
        if let Some(s) = self.noise_sigma {
            cfg.noise_sigma = s;
        }
        cfg.mc_samples = self.mc_samples;
        cfg.prediction_mode = self.prediction_mode;
        cfg.backend = self.backend;
        cfg.opt = self.opt;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gpd_config(&self) -> Result<GpdClassifierConfig> {
        let mut cfg = GpdClassifierConfig::new(self.classes, self.alpha_eps);
        cfg.mc_samples = self.mc_samples;
        cfg.prediction_mode = self.prediction_mode;
        cfg.backend = self.backend;
        cfg.opt = self.opt;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.model {
            ModelKind::Ilr => self.ilr_config().map(|_| ()),
            ModelKind::Gpd => self.gpd_config().map(|_| ()),
        }
    }

    /// The grid value this spec takes: lambda for ILR, alpha_eps for GPD.
    pub fn setting(&self) -> f64 {
        match self.model {
            ModelKind::Ilr => self.lambda,
            ModelKind::Gpd => self.alpha_eps,
        }
    }

    pub fn with_setting(&self, value: f64) -> Self {
        let mut s = self.clone();
        match self.model {
            ModelKind::Ilr => s.lambda = value,
            ModelKind::Gpd => s.alpha_eps = value,
        }
        s
    }
}

pub fn fit_model(spec: &ModelSpec, train: &Dataset) -> Result<Classifier> {
    if train.classes != spec.classes {
        return Err(Error::Config(format!(
            "data has {} classes, model configured for {}",
            train.classes, spec.classes
        )));
    }
    Ok(match spec.model {
        ModelKind::Ilr => Classifier::Ilr(IlrClassifier::fit(train.x.clone(), &train.labels, &spec.ilr_config()?)?),
        ModelKind::Gpd => Classifier::Gpd(GpdClassifier::fit(train.x.clone(), &train.labels, &spec.gpd_config()?)?),
    })
}

pub fn evaluate(clf: &Classifier, ds: &Dataset, seed: u64) -> Result<EvalReport> {
    let p = clf.predict_proba(ds.x.as_ref(), seed)?;
    EvalReport::compute(&p.probs, &p.labels_hat, &ds.labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: f64,
    pub nll: f64,
    pub error: f64,
    pub ece: f64,
}

/// Fits one model per grid value on `train` and scores it on `score`.
/// Returns the rows and the index of the lowest NLL (first on ties).
pub fn sweep(spec: &ModelSpec, grid: &[f64], train: &Dataset, score: &Dataset, seed: u64) -> Result<(Vec<SweepRow>, usize)> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &value in grid {
        let clf = fit_model(&spec.with_setting(value), train)?;
        let r = evaluate(&clf, score, seed)?;
        rows.push(SweepRow {
            setting: value,
            nll: r.nll,
            error: r.error,
            ece: r.ece,
        });
    }
    Ok((rows.clone(), best_index(&rows)))
}

pub fn best_index(rows: &[SweepRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.nll < rows[best].nll {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_overlap_toy;

    #[test]
    fn spec_round_trips_through_json() {
        let mut spec = ModelSpec::new(ModelKind::Gpd, 4);
        spec.backend = Backend::Collapsed { inducing: 16, seed: 3 };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn spec_validation() {
        let mut spec = ModelSpec::new(ModelKind::Ilr, 3);
        assert!(spec.validate().is_ok());
        spec.lambda = 1.0;
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::new(ModelKind::Gpd, 3);
        spec.alpha_eps = 0.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sweep_selects_lowest_nll() {
        let train = gen_overlap_toy(0.1, 90, 1).unwrap();
        let val = gen_overlap_toy(0.1, 60, 2).unwrap();
        let mut spec = ModelSpec::new(ModelKind::Ilr, 3);
        spec.mc_samples = 50;
        spec.opt.max_iters = 100;
        let (rows, best) = sweep(&spec, &[0.9, 0.99], &train, &val, 0).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.nll >= rows[best].nll));
        assert!(fit_model(&ModelSpec::new(ModelKind::Ilr, 4), &train).is_err());
    }
}
