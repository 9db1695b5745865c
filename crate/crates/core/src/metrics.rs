//! Error rate, categorical NLL and expected calibration error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are floored at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean confidence in the bin; 0 when empty.
    pub confidence: f64,
    /// Empirical accuracy in the bin; 0 when empty.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub error: f64,
    pub nll: f64,
    pub ece: f64,
    pub bins: Vec<CalibrationBin>,
}

impl EvalReport {
    pub fn compute(probs: &[Vec<f64>], labels_hat: &[usize], labels: &[usize]) -> Result<Self> {
        let (ece, bins) = ece(probs, labels, DEFAULT_BINS)?;
        Ok(Self {
            error: error_rate(labels_hat, labels)?,
            nll: nll(probs, labels)?,
            ece,
            bins,
        })
    }
}

fn check(probs: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!("{} probability rows for {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Err(Error::InvalidDimension("no predictions to evaluate".into()));
    }
    let k = probs[0].len();
    for (row, &c) in probs.iter().zip(labels) {
        if row.len() != k {
            return Err(Error::Shape("probability rows have different lengths".into()));
        }
        if c >= k {
            return Err(Error::ClassIndex { index: c, classes: k });
        }
    }
    Ok(())
}

/// Mean negative log probability of the true class.
pub fn nll(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check(probs, labels)?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &c)| -p[c].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / probs.len() as f64)
}

pub fn error_rate(labels_hat: &[usize], labels: &[usize]) -> Result<f64> {
    if labels_hat.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", labels_hat.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::InvalidDimension("no predictions to evaluate".into()));
    }
    let wrong = labels_hat.iter().zip(labels).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Expected calibration error over `bins` equal-width confidence bins.
///
/// Confidence is the top-label probability, except for two classes where it
/// is the probability of class 1 and "accuracy" is the frequency of class 1.
/// Bins are `[(m-1)/M, m/M)`, the last one closed at 1.
pub fn ece(probs: &[Vec<f64>], labels: &[usize], bins: usize) -> Result<(f64, Vec<CalibrationBin>)> {
    check(probs, labels)?;
    if bins == 0 {
        return Err(Error::Config("ECE needs at least one bin".into()));
    }
    let binary = probs[0].len() == 2;
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hit_sum = vec![0.0; bins];
    for (p, &c) in probs.iter().zip(labels) {
        let (conf, hit) = if binary {
            (p[1], c == 1)
        } else {
            let (arg, &max) = p
                .iter()
                .enumerate()
                .fold((0, &p[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
            (max, arg == c)
        };
        let b = ((conf * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        count[b] += 1;
        conf_sum[b] += conf;
        hit_sum[b] += if hit { 1.0 } else { 0.0 };
    }
    let t = probs.len() as f64;
    let mut total = 0.0;
    let records = (0..bins)
        .map(|b| {
            let (confidence, accuracy) = if count[b] > 0 {
                (conf_sum[b] / count[b] as f64, hit_sum[b] / count[b] as f64)
            } else {
                (0.0, 0.0)
            };
            total += count[b] as f64 / t * (accuracy - confidence).abs();
            CalibrationBin {
                lower: b as f64 / bins as f64,
                upper: (b + 1) as f64 / bins as f64,
                count: count[b],
                confidence,
                accuracy,
            }
        })
        .collect();
    Ok((total, records))
}

/// ECE recomputed from bin records.
pub fn ece_from_bins(bins: &[CalibrationBin]) -> f64 {
    let t: usize = bins.iter().map(|b| b.count).sum();
    bins.iter()
        .map(|b| b.count as f64 / t as f64 * (b.accuracy - b.confidence).abs())
        .sum()
}
