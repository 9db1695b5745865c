//! Synthetic generators, CSV ingestion, normalization and seeded splits.
//!
//! Class labels are 0-based indices into `class_names`.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::select_rows;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Mat<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Validates shapes, finiteness and label range.
    pub fn new(x: Mat<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let names = (0..classes).map(|k| k.to_string()).collect();
        let features = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, labels, names, features)
    }

    pub fn with_names(
        x: Mat<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let classes = class_names.len();
        if x.nrows() == 0 {
            return Err(Error::InvalidDimension("dataset has no rows".into()));
        }
        if classes < 2 {
            return Err(Error::InvalidDimension(format!("need at least 2 classes, got {classes}")));
        }
        if labels.len() != x.nrows() {
            return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), x.nrows())));
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.ncols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
            return Err(Error::ClassIndex { index: bad, classes });
        }
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                if !x[(i, j)].is_finite() {
                    return Err(Error::Domain(format!("non-finite feature at row {i}, column {j}")));
                }
            }
        }
        Ok(Self {
            x,
            labels,
            classes,
            class_names,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: select_rows(self.x.as_ref(), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Center of class `k` of `classes` on the unit circle.
pub fn circle_center(k: usize, classes: usize) -> [f64; 2] {
    let angle = 2.0 * std::f64::consts::PI * k as f64 / classes as f64;
    [angle.cos(), angle.sin()]
}

/// Default component spread for the circle mixture: half the chord between
/// adjacent centers.
pub fn default_mix_sd(classes: usize) -> f64 {
    (std::f64::consts::PI / classes as f64).sin()
}

/// `n` points from `classes` isotropic Gaussians centered evenly on the unit
/// circle. Classes get `n / classes` points each, the remainder going to the
/// lowest classes; rows are shuffled.
pub fn gen_circle_mixture(classes: usize, n: usize, mix_sd: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidDimension(format!("need at least 2 classes, got {classes}")));
    }
    if n < classes {
        return Err(Error::InvalidDimension(format!("need N >= K, got N = {n}, K = {classes}")));
    }
    if !(mix_sd >= 0.0 && mix_sd.is_finite()) {
        return Err(Error::Config(format!("mixture sd must be non-negative, got {mix_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = n / classes;
    let extra = n % classes;
    let mut labels: Vec<usize> = (0..classes)
        .flat_map(|k| std::iter::repeat_n(k, base + usize::from(k < extra)))
        .collect();
    labels.shuffle(&mut rng);
    let mut x = Mat::zeros(n, 2);
    for (i, &k) in labels.iter().enumerate() {
        let c = circle_center(k, classes);
        for (j, cj) in c.iter().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            x[(i, j)] = cj + mix_sd * e;
        }
    }
    Dataset::new(x, labels, classes)
}

/// The three-class overlap toy: the circle mixture with component sd `s`.
pub fn gen_overlap_toy(s: f64, n: usize, seed: u64) -> Result<Dataset> {
    if !(s > 0.0) {
        return Err(Error::Config(format!("toy sd must be positive, got {s}")));
    }
    gen_circle_mixture(3, n, s, seed)
}

/// Predicts the class whose circle center is closest.
pub fn nearest_center_labels(x: MatRef<'_, f64>, classes: usize) -> Vec<usize> {
    let centers: Vec<[f64; 2]> = (0..classes).map(|k| circle_center(k, classes)).collect();
    (0..x.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let d = (x[(i, 0)] - c[0]).powi(2) + (x[(i, 1)] - c[1]).powi(2);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Reads a comma-separated file with a header row. Every column except
/// `label_column` must be numeric. Classes are the distinct label strings,
/// ordered numerically when they are all integers and lexically otherwise.
pub fn load_table(path: &Path, label_column: &str) -> Result<Dataset> {
    load_table_inner(path, label_column, None)
}

/// As [`load_table`], mapping labels onto an existing class list.
pub fn load_table_with_classes(path: &Path, label_column: &str, class_names: &[String]) -> Result<Dataset> {
    load_table_inner(path, label_column, Some(class_names))
}

fn load_table_inner(path: &Path, label_column: &str, known: Option<&[String]>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(File::open(path)?);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = headers.iter().position(|h| h == label_column).ok_or_else(|| {
        Error::Config(format!("label column '{label_column}' not found in {}", path.display()))
    })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // data rows start on line 2 of the file
        let row = r + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: record.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                raw_labels.push(cell.trim().to_string());
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("non-numeric value '{cell}' in column '{}'", headers[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("non-finite value '{cell}'"),
                });
            }
            values.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::InvalidDimension(format!("{} has no data rows", path.display())));
    }

    let class_names: Vec<String> = match known {
        Some(names) => names.to_vec(),
        None => sorted_classes(&raw_labels),
    };
    let mut labels = Vec::with_capacity(raw_labels.len());
    for (r, l) in raw_labels.iter().enumerate() {
        let k = class_names.iter().position(|c| c == l).ok_or_else(|| Error::Parse {
            row: r + 2,
            column: label_idx + 1,
            message: format!("unknown class label '{l}'"),
        })?;
        labels.push(k);
    }
    let p = feature_names.len();
    let x = Mat::from_fn(labels.len(), p, |i, j| values[i * p + j]);
    Dataset::with_names(x, labels, class_names, feature_names)
}

/// Reads the named feature columns of a comma-separated file, in the given
/// order. Other columns, including any label column, are ignored.
pub fn load_features(path: &Path, feature_names: &[String]) -> Result<Mat<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(File::open(path)?);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let cols: Vec<usize> = feature_names
        .iter()
        .map(|f| {
            headers
                .iter()
                .position(|h| h == f)
                .ok_or_else(|| Error::Config(format!("feature column '{f}' not found in {}", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        for &j in &cols {
            let cell = record.get(j).ok_or_else(|| Error::Parse {
                row: r + 2,
                column: j + 1,
                message: "missing field".into(),
            })?;
            let v: f64 = cell.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Parse {
                row: r + 2,
                column: j + 1,
                message: format!("invalid value '{cell}' in column '{}'", headers[j]),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidDimension(format!("{} has no data rows", path.display())));
    }
    let p = cols.len();
    Ok(Mat::from_fn(rows, p, |i, j| values[i * p + j]))
}

fn sorted_classes(raw: &[String]) -> Vec<String> {
    let unique: BTreeSet<&String> = raw.iter().collect();
    let mut names: Vec<String> = unique.into_iter().cloned().collect();
    let ints: Option<Vec<i64>> = names.iter().map(|s| s.parse().ok()).collect();
    if let Some(mut ints) = ints {
        ints.sort();
        names = ints.iter().map(|i| i.to_string()).collect();
    }
    names
}

/// Writes features then a `label` column holding class names.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = ds.feature_names.clone();
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = (0..ds.features()).map(|j| format!("{:?}", ds.x[(i, j)])).collect();
        rec.push(ds.class_names[ds.labels[i]].clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    #[default]
    None,
    Zscore,
    Minmax11,
}

impl std::str::FromStr for NormMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "zscore" => Ok(Self::Zscore),
            "minmax11" => Ok(Self::Minmax11),
            other => Err(Error::Config(format!("unknown normalization '{other}'"))),
        }
    }
}

/// Per-feature affine normalization fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mode: NormMode,
    /// Mean (zscore) or minimum (minmax11).
    pub shift: Vec<f64>,
    /// Population sd (zscore) or range (minmax11); zero marks a constant
    /// feature.
    pub scale: Vec<f64>,
}

impl NormStats {
    pub fn fit(x: MatRef<'_, f64>, mode: NormMode) -> Self {
        let n = x.nrows() as f64;
        let p = x.ncols();
        let mut shift = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 0..p {
            let col = (0..x.nrows()).map(|i| x[(i, j)]);
            match mode {
                NormMode::None => {}
                NormMode::Zscore => {
                    let mean = col.clone().sum::<f64>() / n;
                    let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    shift[j] = mean;
                    scale[j] = var.sqrt();
                }
                NormMode::Minmax11 => {
                    let lo = col.clone().fold(f64::INFINITY, f64::min);
                    let hi = col.fold(f64::NEG_INFINITY, f64::max);
                    shift[j] = lo;
                    scale[j] = hi - lo;
                }
            }
            if mode != NormMode::None && scale[j] == 0.0 {
                log::warn!("feature {j} is constant on the training split");
            }
        }
        Self { mode, shift, scale }
    }

    pub fn apply(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if x.ncols() != self.shift.len() {
            return Err(Error::Shape(format!(
                "normalization fitted on {} features, got {}",
                self.shift.len(),
                x.ncols()
            )));
        }
        Ok(Mat::from_fn(x.nrows(), x.ncols(), |i, j| {
            let v = x[(i, j)];
            let (a, s) = (self.shift[j], self.scale[j]);
            match self.mode {
                NormMode::None => v,
                NormMode::Zscore if s == 0.0 => 0.0,
                NormMode::Zscore => (v - a) / s,
                NormMode::Minmax11 if s == 0.0 => -1.0,
                NormMode::Minmax11 => 2.0 * (v - a) / s - 1.0,
            }
        }))
    }

    pub fn apply_dataset(&self, ds: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            x: self.apply(ds.x.as_ref())?,
            ..ds.clone()
        })
    }
}

/// Fits normalization on `train` and applies it to every given dataset.
pub fn normalize(train: &Dataset, others: &[&Dataset], mode: NormMode) -> Result<(NormStats, Vec<Dataset>)> {
    let stats = NormStats::fit(train.x.as_ref(), mode);
    let mut out = vec![stats.apply_dataset(train)?];
    for d in others {
        out.push(stats.apply_dataset(d)?);
    }
    Ok((stats, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let all = [train, val, test];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) || ((train + val + test) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must lie in [0, 1] and sum to 1, got {train}/{val}/{test}"
            )));
        }
        Ok(Self { train, val, test, seed })
    }

    /// Train and val sizes are rounded; test takes the rest.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let tr = ((n as f64) * self.train).round() as usize;
        let va = (((n as f64) * self.val).round() as usize).min(n - tr.min(n));
        let tr = tr.min(n);
        (tr, va, n - tr - va)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into train/val/test.
pub fn split_indices(n: usize, spec: &SplitSpec) -> SplitIndices {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (tr, va, _) = spec.sizes(n);
    let test = idx.split_off(tr + va);
    let val = idx.split_off(tr);
    SplitIndices { train: idx, val, test }
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> (Dataset, Dataset, Dataset, SplitIndices) {
    let idx = split_indices(ds.len(), spec);
    (ds.subset(&idx.train), ds.subset(&idx.val), ds.subset(&idx.test), idx)
}

/// Metadata written next to a CSV dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub classes: usize,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub label_column: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normalization: Option<NormStats>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub splits: Option<SplitIndices>,
}

impl Sidecar {
    pub fn for_dataset(ds: &Dataset) -> Self {
        Self {
            classes: ds.classes,
            class_names: ds.class_names.clone(),
            feature_names: ds.feature_names.clone(),
            label_column: "label".into(),
            normalization: None,
            splits: None,
        }
    }
}

/// Writes `<path>` and `<path>.json`.
pub fn write_with_sidecar(ds: &Dataset, path: &Path, sidecar: &Sidecar) -> Result<()> {
    write_csv(ds, path)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    std::fs::write(side, serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}
