//! Trial execution and aggregation.
//!
//! One experiment = a method list x an epsilon grid x `trials` repetitions.
//! Every trial regenerates (or re-splits) the dataset from a stream keyed by
//! the trial index alone, so all methods and budgets see the same data within
//! a trial; each fit draws from a stream keyed by (method, eps, trial). That
//! keying makes the whole result table a pure function of the config.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::PrivacyBudget;
use crate::error::{Error, Result};
use crate::harness::data::{
    load_csv, load_csv_binary, normalize_binary_train_test, normalize_train_test, split_shuffle,
    split_shuffle_binary, synth_gaussian_subspace, synth_mlp, synth_two_gaussian, synth_uniform,
};
use crate::logistic::{
    accuracy, count_margin_violations, fit_quadratic_surrogate, logistic_mixing,
    objective_perturbation, BinaryLabeledDataset, SURROGATE_GRID_POINTS,
};
use crate::regression::{
    adassp, empirical_loss, linear_mixing, ridge, sheffet, LabeledDataset, Method, SheffetVariant,
};
use crate::rng::RngStream;

/// Ridge knob for the non-private baseline.
pub const RIDGE_NU: f64 = 1e-6;

/// Failure probability handed to the adaptive baseline's regularizer.
pub const ADASSP_RHO_FAIL: f64 = 0.05;

/// Sketch size, either fixed or as a multiple of the feature dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSpec {
    Absolute(usize),
    PerDim(usize),
}

impl KSpec {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            KSpec::Absolute(k) => k,
            KSpec::PerDim(m) => m * d,
        }
    }
}

impl FromStr for KSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("sketch size must look like \"256\" or \"4d\", got {s:?}"));
        if let Some(prefix) = s.strip_suffix('d') {
            let m = if prefix.is_empty() { 1 } else { prefix.parse().map_err(|_| bad())? };
            if m == 0 {
                return Err(bad());
            }
            Ok(KSpec::PerDim(m))
        } else {
            let k = s.parse().map_err(|_| bad())?;
            if k == 0 {
                return Err(bad());
            }
            Ok(KSpec::Absolute(k))
        }
    }
}

impl std::fmt::Display for KSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KSpec::Absolute(k) => write!(f, "{k}"),
            KSpec::PerDim(m) => write!(f, "{m}d"),
        }
    }
}

/// What data the trials run on. Synthetic kinds regenerate per trial; a CSV
/// is loaded once and re-split per trial.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    GaussianSubspace { n: usize, d: usize, q: usize, noise_std: f64 },
    Mlp { n: usize, d: usize, noise_std: f64 },
    Uniform { n: usize, d: usize, noise_std: f64 },
    TwoGaussian { n: usize, d: usize, separation: f64 },
    Csv { path: PathBuf },
}

impl DatasetSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            DatasetSpec::GaussianSubspace { .. } => "gaussian",
            DatasetSpec::Mlp { .. } => "mlp",
            DatasetSpec::Uniform { .. } => "uniform",
            DatasetSpec::TwoGaussian { .. } => "two_gaussian",
            DatasetSpec::Csv { .. } => "csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("format must be csv or json, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub eps: Vec<f64>,
    pub delta: f64,
    pub k: KSpec,
    pub trials: usize,
    pub base_seed: u64,
    pub dataset: DatasetSpec,
    pub train_fraction: f64,
    /// Half-width of the logistic surrogate's validity interval.
    pub surrogate_q: f64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![
                Method::Ridge,
                Method::LinearMixing,
                Method::AdaSsp,
                Method::Sheffet,
                Method::SheffetNewAnalysis,
            ],
            eps: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            delta: 1e-5,
            k: KSpec::PerDim(4),
            trials: 50,
            base_seed: 0,
            dataset: DatasetSpec::GaussianSubspace { n: 2048, d: 64, q: 4, noise_std: 0.1 },
            train_fraction: 0.8,
            surrogate_q: 4.0,
            output: None,
            format: OutputFormat::Csv,
        }
    }
}

fn is_classification(method: Method) -> bool {
    matches!(method, Method::LogisticMixing | Method::ObjectivePerturbation)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("need at least one method".into()));
        }
        if self.eps.is_empty() {
            return Err(Error::Config("need a nonempty eps grid".into()));
        }
        for pair in self.eps.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::Config(format!(
                    "eps grid must be strictly ascending, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if !(self.eps[0] > 0.0) {
            return Err(Error::Config(format!("eps values must be positive, got {}", self.eps[0])));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must be in (0,1), got {}", self.delta)));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0,1), got {}",
                self.train_fraction
            )));
        }
        if !(self.surrogate_q > 0.0) {
            return Err(Error::Config(format!(
                "surrogate_q must be positive, got {}",
                self.surrogate_q
            )));
        }
        let classification = self.methods.iter().any(|m| is_classification(*m));
        let regression = self.methods.iter().any(|m| !is_classification(*m));
        if classification && regression {
            return Err(Error::Config(
                "cannot mix classification and regression methods in one run".into(),
            ));
        }
        let binary_data = matches!(self.dataset, DatasetSpec::TwoGaussian { .. });
        if classification && !binary_data && !matches!(self.dataset, DatasetSpec::Csv { .. }) {
            return Err(Error::Config(format!(
                "classification methods need a binary dataset, got {}",
                self.dataset.kind()
            )));
        }
        if regression && binary_data {
            return Err(Error::Config(
                "regression methods cannot run on the two_gaussian dataset".into(),
            ));
        }
        Ok(())
    }

    fn is_classification_run(&self) -> bool {
        self.methods.iter().all(|m| is_classification(*m))
    }
}

/// Parse the flat key=value config format. Blank lines and `#` comments are
/// skipped; unknown keys are an error. Recognized keys: methods, eps, delta,
/// k, trials, base_seed, dataset, n, d, q, noise_std, sep, csv_path,
/// train_fraction, surrogate_q, output, format, full.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut keys: HashMap<&str, String> = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected key=value, got {line:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        const KNOWN: &[&str] = &[
            "methods", "eps", "delta", "k", "trials", "base_seed", "dataset", "n", "d", "q",
            "noise_std", "sep", "csv_path", "train_fraction", "surrogate_q", "output", "format",
            "full",
        ];
        let Some(canonical) = KNOWN.iter().find(|k| **k == key) else {
            return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1)));
        };
        keys.insert(canonical, value.to_string());
    }

    let mut config = ExperimentConfig::default();

    let parse_f64 = |keys: &HashMap<&str, String>, key: &str| -> Result<Option<f64>> {
        keys.get(key)
            .map(|v| v.parse().map_err(|_| Error::Config(format!("{key} must be a number, got {v:?}"))))
            .transpose()
    };
    let parse_usize = |keys: &HashMap<&str, String>, key: &str| -> Result<Option<usize>> {
        keys.get(key)
            .map(|v| v.parse().map_err(|_| Error::Config(format!("{key} must be a positive integer, got {v:?}"))))
            .transpose()
    };

    if let Some(methods) = keys.get("methods") {
        config.methods = methods
            .split(',')
            .map(|m| Method::parse(m.trim()))
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(eps) = keys.get("eps") {
        config.eps = eps
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("eps entry {v:?} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(delta) = parse_f64(&keys, "delta")? {
        config.delta = delta;
    }
    if let Some(k) = keys.get("k") {
        config.k = k.parse()?;
    }
    if let Some(trials) = parse_usize(&keys, "trials")? {
        config.trials = trials;
    }
    if let Some(seed) = keys.get("base_seed") {
        config.base_seed = seed
            .parse()
            .map_err(|_| Error::Config(format!("base_seed must be a 64-bit integer, got {seed:?}")))?;
    }
    if let Some(fraction) = parse_f64(&keys, "train_fraction")? {
        config.train_fraction = fraction;
    }
    if let Some(q) = parse_f64(&keys, "surrogate_q")? {
        config.surrogate_q = q;
    }
    if let Some(output) = keys.get("output") {
        config.output = Some(PathBuf::from(output));
    }
    if let Some(format) = keys.get("format") {
        config.format = format.parse()?;
    }

    let full = match keys.get("full").map(String::as_str) {
        None => false,
        Some("true") => true,
        Some("false") => false,
        Some(other) => {
            return Err(Error::Config(format!("full must be true or false, got {other:?}")))
        }
    };
    let kind = keys.get("dataset").map(String::as_str).unwrap_or("gaussian");
    let is_binary_kind = kind == "two_gaussian";
    let default_n = if is_binary_kind {
        4000
    } else if full {
        8192
    } else {
        2048
    };
    let default_d = if is_binary_kind {
        32
    } else if full {
        512
    } else {
        64
    };
    let n = parse_usize(&keys, "n")?.unwrap_or(default_n);
    let d = parse_usize(&keys, "d")?.unwrap_or(default_d);
    let q = parse_usize(&keys, "q")?.unwrap_or(4);
    let noise_std = parse_f64(&keys, "noise_std")?.unwrap_or(0.1);
    let sep = parse_f64(&keys, "sep")?.unwrap_or(1.0);
    config.dataset = match kind {
        "gaussian" => DatasetSpec::GaussianSubspace { n, d, q, noise_std },
        "mlp" => DatasetSpec::Mlp { n, d, noise_std },
        "uniform" => DatasetSpec::Uniform { n, d, noise_std },
        "two_gaussian" => DatasetSpec::TwoGaussian { n, d, separation: sep },
        "csv" => {
            let path = keys
                .get("csv_path")
                .ok_or_else(|| Error::Config("dataset=csv requires csv_path".into()))?;
            DatasetSpec::Csv { path: PathBuf::from(path) }
        }
        other => return Err(Error::Config(format!("unknown dataset kind {other:?}"))),
    };

    config.validate()?;
    Ok(config)
}

/// One aggregated line of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub eps: f64,
    #[serde(rename = "mean")]
    pub mean_metric: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    #[serde(rename = "runtime_s")]
    pub mean_runtime_s: f64,
    pub trials: usize,
    pub seed: u64,
}

/// One individual fit, for the --fits JSON stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub method: String,
    pub eps: f64,
    pub delta: f64,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub gamma_used: Option<f64>,
    pub branch: Option<String>,
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub surrogate_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate_violations: Option<usize>,
}

/// Train/test material for one trial, already normalized.
pub enum TrialData {
    Regression { train: LabeledDataset, test: LabeledDataset },
    Binary { train: BinaryLabeledDataset, test: BinaryLabeledDataset },
}

/// A CSV dataset loaded once, before the trial loop re-splits it.
pub enum LoadedBase {
    Regression(LabeledDataset),
    Binary(BinaryLabeledDataset),
}

/// Preload the dataset when the config points at a file; synthetic kinds
/// return None and are generated inside each trial.
pub fn load_base(config: &ExperimentConfig) -> Result<Option<LoadedBase>> {
    match &config.dataset {
        DatasetSpec::Csv { path } => {
            if config.is_classification_run() {
                Ok(Some(LoadedBase::Binary(load_csv_binary(path)?)))
            } else {
                Ok(Some(LoadedBase::Regression(load_csv(path)?)))
            }
        }
        _ => Ok(None),
    }
}

/// Build the per-trial dataset: synthesize or re-split, then normalize so
/// train rows fit the unit ball. Streams are keyed by the trial index alone.
pub fn materialize_trial(
    config: &ExperimentConfig,
    base: Option<&LoadedBase>,
    trial: usize,
) -> Result<TrialData> {
    let stream = RngStream::new(config.base_seed, trial as u64);
    let regression_full = match &config.dataset {
        DatasetSpec::GaussianSubspace { n, d, q, noise_std } => {
            Some(synth_gaussian_subspace(*n, *d, *q, *noise_std, stream)?)
        }
        DatasetSpec::Mlp { n, d, noise_std } => Some(synth_mlp(*n, *d, *noise_std, stream)?),
        DatasetSpec::Uniform { n, d, noise_std } => Some(synth_uniform(*n, *d, *noise_std, stream)?),
        DatasetSpec::TwoGaussian { n, d, separation } => {
            let full = synth_two_gaussian(*n, *d, *separation, stream)?;
            let (train, test) = split_shuffle_binary(&full, config.train_fraction, stream)?;
            let (train, test, _) = normalize_binary_train_test(&train, &test)?;
            return Ok(TrialData::Binary { train, test });
        }
        DatasetSpec::Csv { .. } => None,
    };
    let full = match (regression_full, base) {
        (Some(data), _) => data,
        (None, Some(LoadedBase::Regression(data))) => data.clone(),
        (None, Some(LoadedBase::Binary(data))) => {
            let (train, test) = split_shuffle_binary(data, config.train_fraction, stream)?;
            let (train, test, _) = normalize_binary_train_test(&train, &test)?;
            return Ok(TrialData::Binary { train, test });
        }
        (None, None) => return Err(Error::Config("csv dataset was not preloaded".into())),
    };
    let (train, test) = split_shuffle(&full, config.train_fraction, stream)?;
    let (train, test, _) = normalize_train_test(&train, &test)?;
    Ok(TrialData::Regression { train, test })
}

/// A fit plus everything the aggregation needs.
pub struct SingleFit {
    pub record: FitRecord,
    pub metric: f64,
    pub runtime_s: f64,
}

/// Run one method at one budget on one trial's data.
pub fn fit_once(
    data: &TrialData,
    method: Method,
    eps: f64,
    delta: f64,
    k_spec: KSpec,
    surrogate_q: f64,
    stream: RngStream,
    trial: usize,
) -> Result<SingleFit> {
    match data {
        TrialData::Regression { train, test } => {
            if is_classification(method) {
                return Err(Error::Config(format!(
                    "{method} cannot run on a regression dataset"
                )));
            }
            let k = k_spec.resolve(train.ncols());
            let start = Instant::now();
            let fit = match method {
                Method::Ridge => ridge(train, RIDGE_NU)?,
                Method::LinearMixing => {
                    linear_mixing(train, PrivacyBudget::new(eps, delta)?, k, stream)?
                }
                Method::AdaSsp => {
                    adassp(train, PrivacyBudget::new(eps, delta)?, ADASSP_RHO_FAIL, stream)?
                }
                Method::Sheffet => {
                    sheffet(train, PrivacyBudget::new(eps, delta)?, k, SheffetVariant::Legacy, stream)?
                }
                Method::SheffetNewAnalysis => sheffet(
                    train,
                    PrivacyBudget::new(eps, delta)?,
                    k,
                    SheffetVariant::NewAnalysis,
                    stream,
                )?,
                Method::LogisticMixing | Method::ObjectivePerturbation => unreachable!(),
            };
            let runtime_s = start.elapsed().as_secs_f64();
            let test_mse = empirical_loss(test, &fit.theta)? / test.nrows() as f64;
            let record = FitRecord {
                method: method.as_str().to_string(),
                eps,
                delta,
                k,
                trial,
                seed: stream.seed(),
                gamma_used: fit.gamma_used,
                branch: fit.branch.map(|b| b.as_str().to_string()),
                train_loss: fit.empirical_loss,
                test_mse: Some(test_mse),
                test_accuracy: None,
                surrogate_q: None,
                b0: None,
                b1: None,
                b2: None,
                q_bound: None,
                surrogate_violations: None,
            };
            Ok(SingleFit { record, metric: test_mse, runtime_s })
        }
        TrialData::Binary { train, test } => {
            if !is_classification(method) {
                return Err(Error::Config(format!("{method} cannot run on a binary dataset")));
            }
            let k = k_spec.resolve(train.ncols());
            let budget = PrivacyBudget::new(eps, delta)?;
            let start = Instant::now();
            let fit = match method {
                Method::LogisticMixing => logistic_mixing(train, budget, k, surrogate_q, stream)?,
                Method::ObjectivePerturbation => objective_perturbation(train, budget, stream)?,
                _ => unreachable!(),
            };
            let runtime_s = start.elapsed().as_secs_f64();
            let test_accuracy = accuracy(test, &fit.theta)?;
            let surrogate = if method == Method::LogisticMixing {
                Some(fit_quadratic_surrogate(surrogate_q, SURROGATE_GRID_POINTS)?)
            } else {
                None
            };
            let violations = if method == Method::LogisticMixing {
                Some(count_margin_violations(train, &fit.theta, surrogate_q)?)
            } else {
                None
            };
            let record = FitRecord {
                method: method.as_str().to_string(),
                eps,
                delta,
                k,
                trial,
                seed: stream.seed(),
                gamma_used: fit.gamma_used,
                branch: fit.branch.map(|b| b.as_str().to_string()),
                train_loss: fit.empirical_loss,
                test_mse: None,
                test_accuracy: Some(test_accuracy),
                surrogate_q: surrogate.map(|s| s.interval_q),
                b0: surrogate.map(|s| s.b0),
                b1: surrogate.map(|s| s.b1),
                b2: surrogate.map(|s| s.b2),
                q_bound: surrogate.map(|s| s.q_bound),
                surrogate_violations: violations,
            };
            Ok(SingleFit { record, metric: test_accuracy, runtime_s })
        }
    }
}

fn trial_stream(base_seed: u64, method_idx: usize, eps_idx: usize, trial: usize) -> RngStream {
    let id = ((method_idx as u64) << 40) | ((eps_idx as u64) << 24) | trial as u64;
    RngStream::new(base_seed, id)
}

fn run_trial(
    config: &ExperimentConfig,
    base: Option<&LoadedBase>,
    trial: usize,
) -> Result<Vec<Option<SingleFit>>> {
    let data = materialize_trial(config, base, trial)?;
    let mut cells = Vec::with_capacity(config.methods.len() * config.eps.len());
    for (mi, method) in config.methods.iter().enumerate() {
        for (ei, eps) in config.eps.iter().enumerate() {
            let stream = trial_stream(config.base_seed, mi, ei, trial);
            match fit_once(&data, *method, *eps, config.delta, config.k, config.surrogate_q, stream, trial)
            {
                Ok(fit) => cells.push(Some(fit)),
                Err(e) => {
                    eprintln!("warning: trial {trial} {method} eps={eps} failed: {e}");
                    cells.push(None);
                }
            }
        }
    }
    Ok(cells)
}

/// Run the whole table. Returns the aggregated rows (sorted by method name,
/// then eps) and every individual fit record. Trials run in parallel; both
/// outputs are deterministic functions of the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(Vec<ResultRow>, Vec<FitRecord>)> {
    config.validate()?;
    if config.trials >= 1 << 24 {
        return Err(Error::Config(format!(
            "trial count {} exceeds the stream keying limit",
            config.trials
        )));
    }
    let base = load_base(config)?;
    let trials: Vec<Vec<Option<SingleFit>>> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, base.as_ref(), t))
        .collect::<Result<Vec<_>>>()?;

    let n_eps = config.eps.len();
    let mut rows = Vec::new();
    for (mi, method) in config.methods.iter().enumerate() {
        for (ei, eps) in config.eps.iter().enumerate() {
            let cell: Vec<&SingleFit> =
                trials.iter().filter_map(|t| t[mi * n_eps + ei].as_ref()).collect();
            if cell.is_empty() {
                eprintln!("warning: every trial failed for {method} eps={eps}; row omitted");
                continue;
            }
            let m = cell.len() as f64;
            let mean = cell.iter().map(|f| f.metric).sum::<f64>() / m;
            let stderr = if cell.len() > 1 {
                let var = cell.iter().map(|f| (f.metric - mean).powi(2)).sum::<f64>() / (m - 1.0);
                (var / m).sqrt()
            } else {
                0.0
            };
            let mean_runtime_s = cell.iter().map(|f| f.runtime_s).sum::<f64>() / m;
            rows.push(ResultRow {
                method: method.as_str().to_string(),
                eps: *eps,
                mean_metric: mean,
                ci_low: mean - 1.96 * stderr,
                ci_high: mean + 1.96 * stderr,
                mean_runtime_s,
                trials: cell.len(),
                seed: config.base_seed,
            });
        }
    }
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.eps.total_cmp(&b.eps)));

    let mut records: Vec<FitRecord> =
        trials.into_iter().flatten().flatten().map(|f| f.record).collect();
    records.sort_by(|a, b| {
        a.method.cmp(&b.method).then(a.eps.total_cmp(&b.eps)).then(a.trial.cmp(&b.trial))
    });
    Ok((rows, records))
}

fn csv_to_string(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv output not utf-8: {e}")))
}

/// Serialize rows as CSV with the fixed header
/// method,eps,mean,ci_low,ci_high,runtime_s,trials,seed.
pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Config(format!("csv serialize failed: {e}")))?;
    }
    csv_to_string(writer)
}

/// Parse rows back from [`rows_to_csv`] output.
pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (idx, record) in reader.deserialize::<ResultRow>().enumerate() {
        rows.push(record.map_err(|e| Error::Parse {
            row: idx + 2,
            col: 0,
            msg: format!("bad result row: {e}"),
        })?);
    }
    Ok(rows)
}

pub fn rows_to_json(rows: &[ResultRow]) -> Result<String> {
    serde_json::to_string_pretty(rows).map_err(|e| Error::Config(format!("json encode failed: {e}")))
}

pub fn records_to_json(records: &[FitRecord]) -> Result<String> {
    serde_json::to_string_pretty(records)
        .map_err(|e| Error::Config(format!("json encode failed: {e}")))
}

/// Emit rows in the chosen format to a file or, with no path, to stdout.
pub fn emit(rows: &[ResultRow], format: OutputFormat, path: Option<&Path>) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => rows_to_csv(rows)?,
        OutputFormat::Json => rows_to_json(rows)?,
    };
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
