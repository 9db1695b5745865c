//! Self-describing JSON model files.
//!
//! Matrices are stored row-major as base64 of little-endian `f64` bytes, so a
//! saved model reloads bit-exactly. Loading re-conditions the GP on the stored
//! inputs, targets, noise and kernel, which reproduces the fitted model's
//! predictions exactly.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifiers::{Classifier, GpdClassifier, IlrClassifier, LatentGp};
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::gp::{ExactGpModel, NoiseVariance, PseudoObservations};
use crate::kernel::RbfKernel;
use crate::pipeline::{ModelKind, ModelSpec};
use crate::sparse::{CollapsedGpModel, InducingSet};

pub const FORMAT: &str = "ilrgp-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major little-endian f64, base64.
    pub data: String,
}

impl EncodedMatrix {
    pub fn encode(m: MatRef<'_, f64>) -> Self {
        let mut bytes = Vec::with_capacity(m.nrows() * m.ncols() * 8);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Mat<f64>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::ModelFormat(format!("bad base64 matrix: {e}")))?;
        if bytes.len() != self.rows * self.cols * 8 {
            return Err(Error::ModelFormat(format!(
                "matrix {}x{} needs {} bytes, found {}",
                self.rows,
                self.cols,
                self.rows * self.cols * 8,
                bytes.len()
            )));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Mat::from_fn(self.rows, self.cols, |i, j| vals[i * self.cols + j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EncodedNoise {
    Shared { variance: f64 },
    /// `N x 1`.
    PerPoint { variances: EncodedMatrix },
    /// `N x D`, one column per output coordinate.
    PerEntry { variances: EncodedMatrix },
}

impl EncodedNoise {
    fn encode(noise: &NoiseVariance, n: usize) -> Self {
        match noise {
            NoiseVariance::Shared(s) => Self::Shared { variance: *s },
            NoiseVariance::PerPoint(v) => Self::PerPoint {
                variances: EncodedMatrix::encode(Mat::from_fn(v.len(), 1, |i, _| v[i]).as_ref()),
            },
            NoiseVariance::PerEntry(cols) => Self::PerEntry {
                variances: EncodedMatrix::encode(Mat::from_fn(n, cols.len(), |i, j| cols[j][i]).as_ref()),
            },
        }
    }

    fn decode(&self) -> Result<NoiseVariance> {
        Ok(match self {
            Self::Shared { variance } => NoiseVariance::Shared(*variance),
            Self::PerPoint { variances } => {
                let m = variances.decode()?;
                NoiseVariance::PerPoint((0..m.nrows()).map(|i| m[(i, 0)]).collect())
            }
            Self::PerEntry { variances } => {
                let m = variances.decode()?;
                NoiseVariance::PerEntry(
                    (0..m.ncols())
                        .map(|j| (0..m.nrows()).map(|i| m[(i, j)]).collect())
                        .collect(),
                )
            }
        })
    }
}

/// On-disk representation of a [`TrainedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub normalization: NormStats,
    pub seed: u64,
    pub kernel: RbfKernel,
    /// Objective at the fitted kernel: marginal likelihood or collapsed bound.
    pub objective: f64,
    pub x_train: EncodedMatrix,
    pub targets: EncodedMatrix,
    pub noise: EncodedNoise,
    pub inducing: Option<EncodedMatrix>,
    /// Effective run configuration, echoed for provenance of the run.
    pub config: Value,
}

/// A fitted classifier with everything needed to apply it to raw features.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub classifier: Classifier,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    /// Applied to raw features before the GP sees them.
    pub normalization: NormStats,
    pub seed: u64,
    pub config: Value,
}

impl TrainedModel {
    pub fn to_file(&self) -> ModelFile {
        let gp = self.classifier.gp();
        let pseudo = gp.pseudo();
        let inducing = match gp {
            LatentGp::Exact(_) => None,
            LatentGp::Collapsed(m) => Some(EncodedMatrix::encode(m.inducing().points())),
        };
        ModelFile {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            spec: self.spec.clone(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
            normalization: self.normalization.clone(),
            seed: self.seed,
            kernel: gp.kernel().clone(),
            objective: gp.objective(),
            x_train: EncodedMatrix::encode(gp.x_train()),
            targets: EncodedMatrix::encode(pseudo.targets()),
            noise: EncodedNoise::encode(pseudo.noise(), pseudo.len()),
            inducing,
            config: self.config.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format != FORMAT {
            return Err(Error::ModelFormat(format!("not a model file (format '{}')", file.format)));
        }
        if file.version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported model file version {} (expected {FORMAT_VERSION})",
                file.version
            )));
        }
        if file.class_names.len() != file.spec.classes {
            return Err(Error::ModelFormat(format!(
                "{} class names for {} classes",
                file.class_names.len(),
                file.spec.classes
            )));
        }
        let x = file.x_train.decode()?;
        if file.feature_names.len() != x.ncols() || file.normalization.shift.len() != x.ncols() {
            return Err(Error::ModelFormat("feature names or normalization do not match x_train".into()));
        }
        let pseudo = PseudoObservations::new(file.targets.decode()?, file.noise.decode()?)?;
        let gp = match &file.inducing {
            None => LatentGp::Exact(ExactGpModel::new(x, file.kernel.clone(), pseudo)?),
            Some(xu) => LatentGp::Collapsed(CollapsedGpModel::new(
                x,
                InducingSet::from_points(xu.decode()?)?,
                file.kernel.clone(),
                pseudo,
            )?),
        };
        let classifier = match file.spec.model {
            ModelKind::Ilr => Classifier::Ilr(IlrClassifier::from_gp(gp, file.spec.ilr_config()?)?),
            ModelKind::Gpd => Classifier::Gpd(GpdClassifier::from_gp(gp, file.spec.gpd_config()?)?),
        };
        Ok(Self {
            spec: file.spec,
            classifier,
            class_names: file.class_names,
            feature_names: file.feature_names,
            normalization: file.normalization,
            seed: file.seed,
            config: file.config,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(format!("bad model file: {e}")))?;
        Self::from_file(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
