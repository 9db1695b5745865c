//! Command-line front end.
//!
//! Every command reads a flat JSON config (`--config`), then applies its
//! dedicated flags and finally any `--param key=value` pairs, each overriding
//! the matching config key. The effective config is echoed into every output.
//!
//! Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::classifiers::{derive_seed, Backend, PredictionMode, DEFAULT_MC_SAMPLES};
use crate::data::{
    default_mix_sd, gen_circle_mixture, gen_overlap_toy, load_features, load_table, load_table_with_classes, split,
    Dataset, NormMode, NormStats, SplitSpec,
};
use crate::error::Error;
use crate::experiments::{run_named, write_csv};
use crate::model_io::TrainedModel;
use crate::optim::OptConfig;
use crate::pipeline::{evaluate, fit_model, sweep, ModelKind, ModelSpec, ALPHA_EPS_GRID, LAMBDA_GRID};
use crate::simplex::{separation_delta, sigma_bound, SmoothingConfig, DEFAULT_EPSILON};

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parse { .. } | Error::ModelFormat(_) => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ilrgp", version, about = "GP classification through the isometric log-ratio map")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct ConfigArgs {
    /// Flat JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key; VALUE is parsed as JSON, else taken as a string.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

/// Data source and seed; shared by fit, eval and sweep.
#[derive(Debug, Args, Default)]
struct DataFlags {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// CSV file with a header row.
    #[arg(long)]
    data: Option<String>,
    /// Synthetic data instead of a file: overlap-toy or circle-mixture.
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
struct ModelFlags {
    /// ilr or gpd.
    #[arg(long)]
    model: Option<String>,
    /// exact or collapsed.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha_eps: Option<f64>,
    /// none, zscore or minmax11.
    #[arg(long)]
    normalization: Option<String>,
    #[arg(long)]
    mc_samples: Option<usize>,
    /// latent-f or noisy-z.
    #[arg(long)]
    prediction_mode: Option<String>,
}

fn put(m: &mut Map<String, Value>, key: &str, v: Option<Value>) {
    if let Some(v) = v {
        m.insert(key.into(), v);
    }
}

impl DataFlags {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        put(&mut m, "data", self.data.clone().map(Value::from));
        put(&mut m, "generator", self.generator.clone().map(Value::from));
        put(&mut m, "seed", self.seed.map(Value::from));
        m
    }
}

impl ModelFlags {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        put(&mut m, "model", self.model.clone().map(Value::from));
        put(&mut m, "backend", self.backend.clone().map(Value::from));
        put(&mut m, "lambda", self.lambda.map(Value::from));
        put(&mut m, "alpha_eps", self.alpha_eps.map(Value::from));
        put(&mut m, "normalization", self.normalization.clone().map(Value::from));
        put(&mut m, "mc_samples", self.mc_samples.map(Value::from));
        put(&mut m, "prediction_mode", self.prediction_mode.clone().map(Value::from));
        m
    }
}

#[derive(Debug, Args, Default)]
struct RunFlags {
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SplitChoice {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a classifier on the training split and save it as JSON.
    Fit {
        #[command(flatten)]
        run: RunFlags,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Report error, NLL and ECE of a saved model as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        run: DataFlags,
        /// Which part of the data to score, using the stored split settings.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitChoice,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write class probabilities for a CSV of features.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV to write; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select lambda (ILR) or alpha_eps (GPD) by validation NLL.
    Sweep {
        #[command(flatten)]
        run: RunFlags,
        /// Directory for sweep.csv and sweep.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named experiment and write its CSV and JSON outputs.
    Experiment {
        /// overlap-lambda, scaling-k, breakdown, gpd-recovery or sigma-bound-table.
        name: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the separation and the largest admissible latent noise sd.
    SigmaBound {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        classes: usize,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Exact,
    Collapsed,
}

/// Flat configuration shared by fit, eval and sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<String>,
    pub label_column: String,
    pub generator: Option<String>,
    /// Generator size, overlap scale and class count.
    pub n: usize,
    pub s: f64,
    pub classes: usize,
    pub mix_sd: Option<f64>,
    pub model: ModelKind,
    pub backend: BackendKind,
    pub inducing: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub noise_sigma: Option<f64>,
    pub alpha_eps: f64,
    pub mc_samples: usize,
    pub prediction_mode: PredictionMode,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub normalization: NormMode,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    /// Sweep grid; defaults to the lambda or alpha_eps grid of the model.
    pub grid: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptConfig::default();
        Self {
            data: None,
            label_column: "label".into(),
            generator: None,
            n: 1000,
            s: 0.1,
            classes: 3,
            mix_sd: None,
            model: ModelKind::Ilr,
            backend: BackendKind::Exact,
            inducing: 100,
            lambda: 0.9,
            epsilon: DEFAULT_EPSILON,
            noise_sigma: None,
            alpha_eps: 0.01,
            mc_samples: DEFAULT_MC_SAMPLES,
            prediction_mode: PredictionMode::default(),
            learning_rate: opt.learning_rate,
            max_iters: opt.max_iters,
            seed: 0,
            normalization: NormMode::None,
            train_frac: 0.72,
            val_frac: 0.08,
            test_frac: 0.20,
            grid: None,
        }
    }
}

impl RunConfig {
    pub fn model_spec(&self, classes: usize) -> ModelSpec {
        let mut spec = ModelSpec::new(self.model, classes);
        spec.lambda = self.lambda;
        spec.epsilon = self.epsilon;
        spec.noise_sigma = self.noise_sigma;
        spec.alpha_eps = self.alpha_eps;
        spec.mc_samples = self.mc_samples;
        spec.prediction_mode = self.prediction_mode;
        spec.backend = match self.backend {
            BackendKind::Exact => Backend::Exact,
            BackendKind::Collapsed => Backend::Collapsed {
                inducing: self.inducing,
                seed: derive_seed("cli/inducing", &[self.seed]),
            },
        };
        spec.opt = OptConfig {
            learning_rate: self.learning_rate,
            max_iters: self.max_iters,
            ..OptConfig::default()
        };
        spec
    }

    fn split_spec(&self) -> CliResult<SplitSpec> {
        Ok(SplitSpec::new(
            self.train_frac,
            self.val_frac,
            self.test_frac,
            derive_seed("cli/split", &[self.seed]),
        )?)
    }

    pub fn predict_seed(&self) -> u64 {
        derive_seed("cli/predict", &[self.seed])
    }
}

fn parse_param(kv: &str) -> CliResult<(String, Value)> {
    let (k, v) = kv
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("--param expects KEY=VALUE, got '{kv}'")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Config file, then `flags`, then `--param` pairs.
fn merged_params(base: Map<String, Value>, cfg: &ConfigArgs, flags: Map<String, Value>) -> CliResult<Map<String, Value>> {
    let mut m = base;
    if let Some(path) = &cfg.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(file)) => m.extend(file),
            Ok(_) => return Err(CliError::usage("config file must hold a JSON object")),
            Err(e) => return Err(CliError::usage(format!("bad config {}: {e}", path.display()))),
        }
    }
    m.extend(flags);
    for kv in &cfg.params {
        let (k, v) = parse_param(kv)?;
        m.insert(k, v);
    }
    Ok(m)
}

fn run_config(base: Map<String, Value>, data: &DataFlags, model: Option<&ModelFlags>) -> CliResult<RunConfig> {
    let mut flags = data.overrides();
    if let Some(mf) = model {
        flags.extend(mf.overrides());
    }
    let m = merged_params(base, &data.cfg, flags)?;
    serde_json::from_value(Value::Object(m)).map_err(|e| CliError::usage(format!("bad configuration: {e}")))
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} not found: {}", path.display())))
    }
}

/// Loads the configured dataset. With `classes`, labels are mapped onto that
/// class list.
fn load_data(cfg: &RunConfig, classes: Option<&[String]>) -> CliResult<Dataset> {
    let data_seed = derive_seed("cli/data", &[cfg.seed]);
    match (&cfg.data, &cfg.generator) {
        (Some(_), Some(_)) => Err(CliError::usage("give either data or generator, not both")),
        (Some(path), None) => {
            let path = Path::new(path);
            require_file(path, "data file")?;
            Ok(match classes {
                Some(names) => load_table_with_classes(path, &cfg.label_column, names)?,
                None => load_table(path, &cfg.label_column)?,
            })
        }
        (None, Some(generator)) => Ok(match generator.as_str() {
            "overlap-toy" => gen_overlap_toy(cfg.s, cfg.n, data_seed)?,
            "circle-mixture" => {
                let sd = cfg.mix_sd.unwrap_or_else(|| default_mix_sd(cfg.classes));
                gen_circle_mixture(cfg.classes, cfg.n, sd, data_seed)?
            }
            other => {
                return Err(CliError::usage(format!(
                    "unknown generator '{other}' (expected overlap-toy or circle-mixture)"
                )))
            }
        }),
        (None, None) => Err(CliError::usage("no data: set data (a CSV path) or generator")),
    }
}

fn print_json(out: &mut dyn Write, v: &Value) -> CliResult<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v).map_err(Error::from)?)?;
    Ok(())
}

fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn cmd_fit(run: &RunFlags, out_path: &Path, out: &mut dyn Write) -> CliResult<()> {
    let cfg = run_config(Map::new(), &run.data, Some(&run.model))?;
    let ds = load_data(&cfg, None)?;
    let spec = cfg.model_spec(ds.classes);
    spec.validate()?;
    let (train, _, _, _) = split(&ds, &cfg.split_spec()?);
    if train.is_empty() {
        return Err(CliError::usage("training split is empty"));
    }
    let normalization = NormStats::fit(train.x.as_ref(), cfg.normalization);
    let train = normalization.apply_dataset(&train)?;
    log::info!("fitting {} on {} points", spec.model.as_str(), train.len());
    let classifier = fit_model(&spec, &train)?;
    let model = TrainedModel {
        spec,
        classifier,
        class_names: ds.class_names.clone(),
        feature_names: ds.feature_names.clone(),
        normalization,
        seed: cfg.seed,
        config: serde_json::to_value(&cfg).map_err(Error::from)?,
    };
    write_atomic(out_path, &model.to_json()?)?;
    let gp = model.classifier.gp();
    print_json(
        out,
        &json!({
            "model": out_path.display().to_string(),
            "train_size": train.len(),
            "objective": gp.objective(),
            "kernel": gp.kernel(),
            "config": model.config,
        }),
    )
}

fn load_model(path: &Path) -> CliResult<TrainedModel> {
    require_file(path, "model file")?;
    Ok(TrainedModel::load(path)?)
}

fn stored_config(model: &TrainedModel) -> Map<String, Value> {
    match &model.config {
        Value::Object(m) => m.clone(),
        _ => Map::new(),
    }
}

fn cmd_eval(
    model_path: &Path,
    run: &DataFlags,
    which: SplitChoice,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let model = load_model(model_path)?;
    let mut base = stored_config(&model);
    // a new data source replaces the stored one
    if run.data.is_some() {
        base.remove("generator");
    }
    if run.generator.is_some() {
        base.remove("data");
    }
    let cfg = run_config(base, run, None)?;
    let ds = load_data(&cfg, Some(&model.class_names))?;
    if ds.feature_names != model.feature_names {
        return Err(CliError::usage(format!(
            "data features {:?} do not match the model's {:?}",
            ds.feature_names, model.feature_names
        )));
    }
    let (train, val, test, _) = split(&ds, &cfg.split_spec()?);
    let part = match which {
        SplitChoice::All => ds,
        SplitChoice::Train => train,
        SplitChoice::Val => val,
        SplitChoice::Test => test,
    };
    if part.is_empty() {
        return Err(CliError::usage("selected split is empty"));
    }
    let part = model.normalization.apply_dataset(&part)?;
    let report = evaluate(&model.classifier, &part, cfg.predict_seed())?;
    let split_name = match which {
        SplitChoice::All => "all",
        SplitChoice::Train => "train",
        SplitChoice::Val => "val",
        SplitChoice::Test => "test",
    };
    let v = json!({
        "split": split_name,
        "size": part.len(),
        "error": report.error,
        "nll": report.nll,
        "ece": report.ece,
        "bins": report.bins,
        "config": cfg,
    });
    if let Some(p) = out_path {
        write_atomic(p, &(serde_json::to_string_pretty(&v).map_err(Error::from)? + "\n"))?;
    }
    print_json(out, &v)
}

fn cmd_predict(model_path: &Path, data: &Path, seed: Option<u64>, out_path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let model = load_model(model_path)?;
    require_file(data, "data file")?;
    let x = load_features(data, &model.feature_names)?;
    let x = model.normalization.apply(x.as_ref())?;
    let mut cfg: RunConfig = serde_json::from_value(model.config.clone()).unwrap_or_default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let pred = model.classifier.predict_proba(x.as_ref(), cfg.predict_seed())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string(), "predicted".to_string()];
    header.extend(model.class_names.iter().map(|c| format!("p_{c}")));
    w.write_record(&header).map_err(Error::from)?;
    for (i, (p, &k)) in pred.probs.iter().zip(&pred.labels_hat).enumerate() {
        let mut rec = vec![i.to_string(), model.class_names[k].clone()];
        rec.extend(p.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError { code: 1, message: e.to_string() })?;
    let text = String::from_utf8(bytes).map_err(|e| CliError { code: 1, message: e.to_string() })?;
    match out_path {
        Some(p) => write_atomic(p, &text),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

#[derive(Serialize)]
struct GridRow {
    setting: f64,
    val_nll: f64,
    val_error: f64,
    val_ece: f64,
}

fn cmd_sweep(run: &RunFlags, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let cfg = run_config(Map::new(), &run.data, Some(&run.model))?;
    if cfg.val_frac <= 0.0 {
        return Err(CliError::usage("sweep needs a validation split (val_frac > 0)"));
    }
    let ds = load_data(&cfg, None)?;
    let spec = cfg.model_spec(ds.classes);
    let grid = cfg.grid.clone().unwrap_or_else(|| match cfg.model {
        ModelKind::Ilr => LAMBDA_GRID.to_vec(),
        ModelKind::Gpd => ALPHA_EPS_GRID.to_vec(),
    });
    for &g in &grid {
        spec.with_setting(g).validate()?;
    }
    let (train, val, _, _) = split(&ds, &cfg.split_spec()?);
    if train.is_empty() || val.is_empty() {
        return Err(CliError::usage("train or validation split is empty"));
    }
    let stats = NormStats::fit(train.x.as_ref(), cfg.normalization);
    let train = stats.apply_dataset(&train)?;
    let val = stats.apply_dataset(&val)?;
    let (rows, best) = sweep(&spec, &grid, &train, &val, cfg.predict_seed())?;
    let table: Vec<GridRow> = rows
        .iter()
        .map(|r| GridRow {
            setting: r.setting,
            val_nll: r.nll,
            val_error: r.error,
            val_ece: r.ece,
        })
        .collect();
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("sweep.csv"), &table)?;
    let parameter = match cfg.model {
        ModelKind::Ilr => "lambda",
        ModelKind::Gpd => "alpha_eps",
    };
    let v = json!({
        "parameter": parameter,
        "selected": rows[best].setting,
        "grid": table,
        "config": cfg,
    });
    write_atomic(&dir.join("sweep.json"), &(serde_json::to_string_pretty(&v).map_err(Error::from)? + "\n"))?;
    print_json(out, &v)
}

fn cmd_experiment(name: &str, cfg: &ConfigArgs, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let params = merged_params(Map::new(), cfg, Map::new())?;
    let summary = run_named(name, &params, dir)?;
    print_json(out, &summary)
}

fn cmd_sigma_bound(lambda: f64, classes: usize, epsilon: f64, out: &mut dyn Write) -> CliResult<()> {
    let s = SmoothingConfig::new(lambda, classes, epsilon).map_err(|e| CliError::usage(e.to_string()))?;
    print_json(
        out,
        &json!({
            "lambda": lambda,
            "classes": classes,
            "epsilon": epsilon,
            "delta": separation_delta(&s),
            "sigma": sigma_bound(&s),
        }),
    )
}

/// Parses `args` (including the program name) and runs the command, writing
/// reports to `out`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                write!(out, "{e}")?;
                return Ok(());
            }
            return Err(CliError { code, message: e.to_string() });
        }
    };
    match &cli.command {
        Command::Fit { run, out: path } => cmd_fit(run, path, out),
        Command::Eval { model, run, split, out: path } => cmd_eval(model, run, *split, path.as_deref(), out),
        Command::Predict { model, data, seed, out: path } => cmd_predict(model, data, *seed, path.as_deref(), out),
        Command::Sweep { run, out: dir } => cmd_sweep(run, dir, out),
        Command::Experiment { name, cfg, out: dir } => cmd_experiment(name, cfg, dir, out),
        Command::SigmaBound { lambda, classes, epsilon } => cmd_sigma_bound(*lambda, *classes, *epsilon, out),
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run_with(args, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message.trim_end());
            e.code
        }
    }
}
