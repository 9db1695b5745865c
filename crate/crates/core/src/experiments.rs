//! Named, seed-deterministic experiments with tidy CSV and JSON outputs.
//!
//! Output layout under an output directory:
//!
//! ```text
//! <out>/<experiment>.csv                 one row per run
//! <out>/runs/<experiment>/<seed>/rows.csv
//! <out>/runs/<experiment>/<seed>/run.json  effective config + that seed's rows
//! <out>/summary.json                     per-experiment config and summary
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::classifiers::{
    breakdown_experiment, derive_seed, gpd_label_recovery_error, mean_sd, BreakdownConfig, BreakdownRun,
};
use crate::data::{default_mix_sd, gen_circle_mixture, gen_overlap_toy, nearest_center_labels, split, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::error_rate;
use crate::optim::OptConfig;
use crate::pipeline::{evaluate, fit_model, sweep, ModelKind, ModelSpec, ALPHA_EPS_GRID, LAMBDA_GRID};
use crate::simplex::{separation_delta, sigma_bound, SmoothingConfig, DEFAULT_EPSILON};

pub const EXPERIMENTS: [&str; 5] = ["overlap-lambda", "scaling-k", "breakdown", "gpd-recovery", "sigma-bound-table"];

/// A row that belongs to one seed's run directory.
pub trait SeededRow: Serialize {
    fn seed(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport<R> {
    pub name: String,
    pub config: Value,
    pub rows: Vec<R>,
    pub summary: Value,
}

fn parse_config<C: DeserializeOwned + Serialize>(params: &Map<String, Value>) -> Result<(C, Value)> {
    let cfg: C = serde_json::from_value(Value::Object(params.clone()))
        .map_err(|e| Error::Config(format!("bad experiment parameters: {e}")))?;
    let echo = serde_json::to_value(&cfg)?;
    Ok((cfg, echo))
}

fn opt(learning_rate: f64, max_iters: usize) -> OptConfig {
    OptConfig {
        learning_rate,
        max_iters,
        ..Default::default()
    }
}

// overlap-lambda

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapLambdaConfig {
    pub s_values: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub seeds: usize,
    pub n: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub mc_samples: usize,
    pub learning_rate: f64,
    pub max_iters: usize,
}

impl Default for OverlapLambdaConfig {
    fn default() -> Self {
        Self {
            s_values: vec![0.1, 0.3, 0.5, 0.7],
            lambdas: vec![0.9, 0.95, 0.99, 0.999, 0.9999],
            seeds: 3,
            n: 1000,
            train_frac: 0.6,
            val_frac: 0.2,
            mc_samples: 1000,
            learning_rate: 1e-2,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub s: f64,
    pub seed: usize,
    pub lambda: f64,
    pub split: String,
    pub error: f64,
    pub nll: f64,
    pub ece: f64,
}

impl SeededRow for OverlapRow {
    fn seed(&self) -> usize {
        self.seed
    }
}

/// Lambda with the lowest mean validation NLL for one `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSelection {
    pub s: f64,
    pub lambda: f64,
    pub mean_val_nll: Vec<f64>,
}

pub fn overlap_lambda(cfg: &OverlapLambdaConfig) -> Result<(Vec<OverlapRow>, Vec<OverlapSelection>)> {
    let spec_split = |seed: u64| SplitSpec::new(cfg.train_frac, cfg.val_frac, 1.0 - cfg.train_frac - cfg.val_frac, seed);
    let mut rows = Vec::new();
    let mut selections = Vec::new();
    for &s in &cfg.s_values {
        let mut val_nll = vec![0.0; cfg.lambdas.len()];
        for seed in 0..cfg.seeds {
            let key = [seed as u64, s.to_bits()];
            let ds = gen_overlap_toy(s, cfg.n, derive_seed("overlap-lambda/data", &key))?;
            let (train, val, test, _) = split(&ds, &spec_split(derive_seed("overlap-lambda/split", &key))?);
            let mut spec = ModelSpec::new(ModelKind::Ilr, 3);
            spec.mc_samples = cfg.mc_samples;
            spec.opt = opt(cfg.learning_rate, cfg.max_iters);
            let mc = derive_seed("overlap-lambda/predict", &key);
            for (li, &lambda) in cfg.lambdas.iter().enumerate() {
                let clf = fit_model(&spec.with_setting(lambda), &train)?;
                for (name, part) in [("val", &val), ("test", &test)] {
                    let r = evaluate(&clf, part, mc)?;
                    if name == "val" {
                        val_nll[li] += r.nll / cfg.seeds as f64;
                    }
                    rows.push(OverlapRow {
                        s,
                        seed,
                        lambda,
                        split: name.into(),
                        error: r.error,
                        nll: r.nll,
                        ece: r.ece,
                    });
                }
            }
        }
        let best = (0..val_nll.len()).fold(0, |b, i| if val_nll[i] < val_nll[b] { i } else { b });
        selections.push(OverlapSelection {
            s,
            lambda: cfg.lambdas[best],
            mean_val_nll: val_nll,
        });
    }
    Ok((rows, selections))
}

fn summarize<R, K: Ord + Serialize>(rows: &[R], key: impl Fn(&R) -> K, metrics: &[(&str, fn(&R) -> f64)]) -> Value {
    let mut groups: BTreeMap<String, (K, Vec<&R>)> = BTreeMap::new();
    for r in rows {
        let k = key(r);
        let label = serde_json::to_string(&k).unwrap_or_default();
        groups.entry(label).or_insert_with(|| (k, Vec::new())).1.push(r);
    }
    let mut cells = Vec::new();
    for (_, (k, members)) in groups {
        let mut cell = Map::new();
        cell.insert("key".into(), serde_json::to_value(&k).unwrap_or(Value::Null));
        cell.insert("runs".into(), json!(members.len()));
        for (name, f) in metrics {
            let vals: Vec<f64> = members.iter().map(|r| f(r)).collect();
            let (m, sd) = mean_sd(&vals);
            cell.insert(format!("{name}_mean"), json!(m));
            cell.insert(format!("{name}_sd"), json!(sd));
        }
        cells.push(Value::Object(cell));
    }
    Value::Array(cells)
}

pub fn run_overlap_lambda(params: &Map<String, Value>) -> Result<ExperimentReport<OverlapRow>> {
    let (cfg, config) = parse_config::<OverlapLambdaConfig>(params)?;
    let (rows, selections) = overlap_lambda(&cfg)?;
    let cells = summarize(
        &rows,
        |r| (r.s.to_string(), r.lambda.to_string(), r.split.clone()),
        &[("error", |r| r.error), ("nll", |r| r.nll), ("ece", |r| r.ece)],
    );
    Ok(ExperimentReport {
        name: "overlap-lambda".into(),
        config,
        rows,
        summary: json!({ "selected": selections, "cells": cells }),
    })
}

// scaling-k

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub classes: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    /// Component sd; `None` uses half the chord between adjacent centers.
    pub mix_sd: Option<f64>,
    pub models: Vec<ModelKind>,
    pub lambdas: Vec<f64>,
    pub alpha_eps: Vec<f64>,
    pub seeds: usize,
    pub mc_samples: usize,
    pub learning_rate: f64,
    pub max_iters: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            classes: vec![2, 4, 8, 16, 32, 64],
            n_train: 1000,
            n_test: 1000,
            mix_sd: None,
            models: vec![ModelKind::Ilr],
            lambdas: LAMBDA_GRID.to_vec(),
            alpha_eps: ALPHA_EPS_GRID.to_vec(),
            seeds: 1,
            mc_samples: 1000,
            learning_rate: 1e-2,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub classes: usize,
    pub seed: usize,
    pub model: String,
    /// Grid value chosen by training NLL.
    pub setting: f64,
    pub error: f64,
    pub nll: f64,
    pub ece: f64,
    pub nearest_center_error: f64,
}

impl SeededRow for ScalingRow {
    fn seed(&self) -> usize {
        self.seed
    }
}

pub fn scaling_k(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for &k in &cfg.classes {
        let sd = cfg.mix_sd.unwrap_or_else(|| default_mix_sd(k));
        for seed in 0..cfg.seeds {
            let key = [seed as u64, k as u64];
            let train = gen_circle_mixture(k, cfg.n_train, sd, derive_seed("scaling-k/train", &key))?;
            let test = gen_circle_mixture(k, cfg.n_test, sd, derive_seed("scaling-k/test", &key))?;
            let baseline = error_rate(&nearest_center_labels(test.x.as_ref(), k), &test.labels)?;
            for &model in &cfg.models {
                let mut spec = ModelSpec::new(model, k);
                spec.mc_samples = cfg.mc_samples;
                spec.opt = opt(cfg.learning_rate, cfg.max_iters);
                let grid = match model {
                    ModelKind::Ilr => &cfg.lambdas,
                    ModelKind::Gpd => &cfg.alpha_eps,
                };
                let mc = derive_seed(&format!("scaling-k/predict/{}", model.as_str()), &key);
                let (sweep_rows, best) = sweep(&spec, grid, &train, &train, mc)?;
                let chosen = spec.with_setting(sweep_rows[best].setting);
                let r = evaluate(&fit_model(&chosen, &train)?, &test, mc)?;
                rows.push(ScalingRow {
                    classes: k,
                    seed,
                    model: model.as_str().into(),
                    setting: chosen.setting(),
                    error: r.error,
                    nll: r.nll,
                    ece: r.ece,
                    nearest_center_error: baseline,
                });
            }
        }
    }
    Ok(rows)
}

pub fn run_scaling_k(params: &Map<String, Value>) -> Result<ExperimentReport<ScalingRow>> {
    let (cfg, config) = parse_config::<ScalingConfig>(params)?;
    let rows = scaling_k(&cfg)?;
    let cells = summarize(
        &rows,
        |r| (r.classes, r.model.clone()),
        &[
            ("error", |r| r.error),
            ("nll", |r| r.nll),
            ("ece", |r| r.ece),
            ("nearest_center_error", |r| r.nearest_center_error),
        ],
    );
    Ok(ExperimentReport {
        name: "scaling-k".into(),
        config,
        rows,
        summary: json!({ "cells": cells }),
    })
}

// breakdown

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreakdownParams {
    pub s: f64,
    pub lambda: f64,
    pub alpha_eps: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: usize,
    pub mc_samples: usize,
    pub learning_rate: f64,
    pub max_iters: usize,
}

impl Default for BreakdownParams {
    fn default() -> Self {
        let d = BreakdownConfig::default();
        Self {
            s: d.s,
            lambda: d.lambda,
            alpha_eps: d.alpha_eps,
            n_train: d.n_train,
            n_test: d.n_test,
            seeds: d.seeds,
            mc_samples: d.mc_samples,
            learning_rate: d.opt.learning_rate,
            max_iters: d.opt.max_iters,
        }
    }
}

impl SeededRow for BreakdownRun {
    fn seed(&self) -> usize {
        self.seed
    }
}

pub fn run_breakdown(params: &Map<String, Value>) -> Result<ExperimentReport<BreakdownRun>> {
    let (p, config) = parse_config::<BreakdownParams>(params)?;
    let cfg = BreakdownConfig {
        s: p.s,
        lambda: p.lambda,
        alpha_eps: p.alpha_eps,
        n_train: p.n_train,
        n_test: p.n_test,
        seeds: p.seeds,
        mc_samples: p.mc_samples,
        opt: opt(p.learning_rate, p.max_iters),
    };
    let report = breakdown_experiment(&cfg)?;
    Ok(ExperimentReport {
        name: "breakdown".into(),
        config,
        rows: report.runs,
        summary: json!({ "cells": report.cells }),
    })
}

// gpd-recovery

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub classes: Vec<usize>,
    pub alpha_eps: Vec<f64>,
    pub samples: usize,
    pub seed: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            classes: (1..=8).map(|e| 1usize << e).collect(),
            alpha_eps: ALPHA_EPS_GRID.to_vec(),
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub classes: usize,
    pub alpha_eps: f64,
    pub seed: usize,
    pub error: f64,
}

impl SeededRow for RecoveryRow {
    fn seed(&self) -> usize {
        self.seed
    }
}

pub fn gpd_recovery(cfg: &RecoveryConfig) -> Result<Vec<RecoveryRow>> {
    let mut rows = Vec::new();
    for &k in &cfg.classes {
        for &a in &cfg.alpha_eps {
            let s = derive_seed("gpd-recovery", &[cfg.seed as u64, k as u64, a.to_bits()]);
            rows.push(RecoveryRow {
                classes: k,
                alpha_eps: a,
                seed: cfg.seed,
                error: gpd_label_recovery_error(k, a, cfg.samples, s)?,
            });
        }
    }
    Ok(rows)
}

fn strictly_monotone(values: &[f64], increasing: bool) -> bool {
    values.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
}

pub fn run_gpd_recovery(params: &Map<String, Value>) -> Result<ExperimentReport<RecoveryRow>> {
    let (cfg, config) = parse_config::<RecoveryConfig>(params)?;
    let rows = gpd_recovery(&cfg)?;
    let lookup = |k: usize, a: f64| rows.iter().find(|r| r.classes == k && r.alpha_eps == a).map(|r| r.error);
    let increasing_in_k: Vec<Value> = cfg
        .alpha_eps
        .iter()
        .map(|&a| {
            let e: Vec<f64> = cfg.classes.iter().filter_map(|&k| lookup(k, a)).collect();
            json!({ "alpha_eps": a, "strictly_increasing": strictly_monotone(&e, true) })
        })
        .collect();
    let decreasing_in_alpha: Vec<Value> = cfg
        .classes
        .iter()
        .map(|&k| {
            let e: Vec<f64> = cfg.alpha_eps.iter().filter_map(|&a| lookup(k, a)).collect();
            json!({ "classes": k, "strictly_decreasing": strictly_monotone(&e, false) })
        })
        .collect();
    Ok(ExperimentReport {
        name: "gpd-recovery".into(),
        config,
        rows,
        summary: json!({ "increasing_in_classes": increasing_in_k, "decreasing_along_alpha_grid": decreasing_in_alpha }),
    })
}

// sigma-bound-table

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaTableConfig {
    pub lambdas: Vec<f64>,
    pub classes: Vec<usize>,
    pub epsilon: f64,
}

impl Default for SigmaTableConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.9, 0.95, 0.99, 0.999, 0.9999],
            classes: vec![2, 3, 4, 8, 16, 32, 64, 128, 256],
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub lambda: f64,
    pub classes: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
}

impl SeededRow for SigmaRow {
    fn seed(&self) -> usize {
        0
    }
}

pub fn sigma_table(cfg: &SigmaTableConfig) -> Result<Vec<SigmaRow>> {
    let mut rows = Vec::new();
    for &lambda in &cfg.lambdas {
        for &k in &cfg.classes {
            let s = SmoothingConfig::new(lambda, k, cfg.epsilon)?;
            rows.push(SigmaRow {
                lambda,
                classes: k,
                epsilon: cfg.epsilon,
                delta: separation_delta(&s),
                sigma: sigma_bound(&s),
            });
        }
    }
    Ok(rows)
}

pub fn run_sigma_table(params: &Map<String, Value>) -> Result<ExperimentReport<SigmaRow>> {
    let (cfg, config) = parse_config::<SigmaTableConfig>(params)?;
    let rows = sigma_table(&cfg)?;
    Ok(ExperimentReport {
        name: "sigma-bound-table".into(),
        config,
        summary: json!({ "rows": rows.len() }),
        rows,
    })
}

// output

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Writes the report into `out`, merging its entry into `out/summary.json`.
pub fn write_report<R: SeededRow>(out: &Path, report: &ExperimentReport<R>) -> Result<()> {
    let base = out.join("runs").join(&report.name);
    let mut by_seed: BTreeMap<usize, Vec<&R>> = BTreeMap::new();
    for r in &report.rows {
        by_seed.entry(r.seed()).or_default().push(r);
    }
    for (seed, rows) in &by_seed {
        let dir = base.join(seed.to_string());
        std::fs::create_dir_all(&dir)?;
        write_csv(&dir.join("rows.csv"), rows)?;
        write_json(
            &dir.join("run.json"),
            &json!({ "experiment": report.name, "seed": seed, "config": report.config, "rows": rows }),
        )?;
    }
    std::fs::create_dir_all(out)?;
    write_csv(&out.join(format!("{}.csv", report.name)), &report.rows)?;

    let summary_path = out.join("summary.json");
    let mut all = match std::fs::read_to_string(&summary_path) {
        Ok(text) => match serde_json::from_str::<Value>(&text)? {
            Value::Object(m) => m,
            _ => Map::new(),
        },
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Map::new(),
        Err(e) => return Err(e.into()),
    };
    all.insert(
        report.name.clone(),
        json!({ "config": report.config, "summary": report.summary }),
    );
    write_json(&summary_path, &Value::Object(all))
}

/// Runs experiment `name` with flat `params`, writes its outputs into `out`
/// and returns its summary.
pub fn run_named(name: &str, params: &Map<String, Value>, out: &Path) -> Result<Value> {
    fn go<R: SeededRow>(out: &Path, r: ExperimentReport<R>) -> Result<Value> {
        write_report(out, &r)?;
        Ok(json!({ "experiment": r.name, "config": r.config, "summary": r.summary }))
    }
    match name {
        "overlap-lambda" => go(out, run_overlap_lambda(params)?),
        "scaling-k" => go(out, run_scaling_k(params)?),
        "breakdown" => go(out, run_breakdown(params)?),
        "gpd-recovery" => go(out, run_gpd_recovery(params)?),
        "sigma-bound-table" => go(out, run_sigma_table(params)?),
        other => Err(Error::Config(format!(
            "unknown experiment '{other}' (expected one of {})",
            EXPERIMENTS.join(", ")
        ))),
    }
}
