use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;

use gaussmix::harness::{
    dataset_to_csv, dataset_to_csv_binary, load_base, materialize_trial, parse_config,
    records_to_json, rows_to_csv, rows_to_json, run_experiment, synth_gaussian_subspace,
    synth_mlp, synth_two_gaussian, synth_uniform, DatasetSpec, ExperimentConfig, KSpec,
    OutputFormat,
};
use gaussmix::harness::experiment::fit_once;
use gaussmix::linalg::{max_row_norm, min_eigenvalue};
use gaussmix::regression::Method;
use gaussmix::rng::{normal_matrix, role, RngStream};
use gaussmix::{
    compare_bounds, exact_renyi_gaussmix, exact_renyi_gaussmix_insertion, find_gamma, phi,
    Error, Result,
};

#[derive(Parser)]
#[command(
    name = "gaussmix",
    version,
    about = "Differentially private sketching, regression, and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the mixing scale gamma for privacy budgets
    Calibrate(CalibrateArgs),
    /// Tabulate the sketching epsilon bound against the legacy bound
    CompareBounds(CompareBoundsArgs),
    /// Check the analytic RDP curve against exact divergences on random data
    Audit(AuditArgs),
    /// Fit one private linear regression and print the fit record
    Linreg(FitArgs),
    /// Fit one private logistic regression and print the fit record
    Logreg(FitArgs),
    /// Generate a synthetic dataset as CSV
    Synth(SynthArgs),
    /// Run a benchmark experiment from a config file
    Bench(BenchArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Comma-separated target epsilon values
    #[arg(long, default_value = "0.5,1,2,4,8")]
    eps: String,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Comma-separated sketch sizes
    #[arg(long, default_value = "64,256")]
    k: String,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareBoundsArgs {
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value_t = 20.0)]
    gamma_min: f64,
    #[arg(long, default_value_t = 1e4)]
    gamma_max: f64,
    /// Number of log-spaced gamma grid points
    #[arg(long, default_value_t = 40)]
    points: usize,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    /// Feature dimension of the random matrices
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Rows per matrix (default 2d)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Effective gamma the noise is tuned to
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    /// Renyi orders to sample in (1, gamma)
    #[arg(long, default_value_t = 20)]
    alphas: usize,
    #[arg(long, default_value_t = 5)]
    matrices: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Method name; defaults to the mixing mechanism for the task
    #[arg(long)]
    method: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Sketch size: absolute ("256") or per-dimension ("4d")
    #[arg(long, default_value = "4d")]
    k: String,
    /// gaussian | mlp | uniform | two_gaussian | csv
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Subspace rank for the gaussian dataset
    #[arg(long, default_value_t = 4)]
    q: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_std: f64,
    /// Cluster separation for the two_gaussian dataset
    #[arg(long, default_value_t = 1.0)]
    sep: f64,
    #[arg(long)]
    csv_path: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Half-width of the logistic surrogate interval
    #[arg(long, default_value_t = 4.0)]
    surrogate_q: f64,
    /// Use the full-size dataset defaults instead of desk scale
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// gaussian | mlp | uniform | two_gaussian
    #[arg(long, default_value = "gaussian")]
    dataset: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 4)]
    q: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_std: f64,
    #[arg(long, default_value_t = 1.0)]
    sep: f64,
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Flat key=value config file
    #[arg(long)]
    config: PathBuf,
    /// Override the config's output path
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the config's format (csv | json)
    #[arg(long)]
    format: Option<String>,
    /// Also write every individual fit record as JSON here
    #[arg(long)]
    fits: Option<PathBuf>,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(args) => calibrate_cmd(args),
        Command::CompareBounds(args) => compare_bounds_cmd(args),
        Command::Audit(args) => audit_cmd(args),
        Command::Linreg(args) => fit_cmd(args, false),
        Command::Logreg(args) => fit_cmd(args, true),
        Command::Synth(args) => synth_cmd(args),
        Command::Bench(args) => bench_cmd(args),
    }
}

/// GAUSSMIX_SEED beats any seed flag or config key when set.
fn seed_override() -> Result<Option<u64>> {
    match std::env::var("GAUSSMIX_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("GAUSSMIX_SEED must be a 64-bit integer, got {text:?}"))),
        Err(_) => Ok(None),
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|item| {
            item.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad {what} entry {item:?}")))
        })
        .collect()
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn serialize_rows<T: Serialize>(rows: &[T], format: &str) -> Result<String> {
    match format.parse::<OutputFormat>()? {
        OutputFormat::Json => serde_json::to_string_pretty(rows)
            .map_err(|e| Error::Config(format!("json encode failed: {e}"))),
        OutputFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            for row in rows {
                writer
                    .serialize(row)
                    .map_err(|e| Error::Config(format!("csv serialize failed: {e}")))?;
            }
            let bytes = writer
                .into_inner()
                .map_err(|e| Error::Config(format!("csv buffer flush failed: {e}")))?;
            String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv not utf-8: {e}")))
        }
    }
}

#[derive(Serialize)]
struct CalibrationRow {
    eps: f64,
    delta: f64,
    k: usize,
    gamma: f64,
    eta: f64,
    alpha_star: f64,
    eps_achieved: f64,
}

fn calibrate_cmd(args: CalibrateArgs) -> Result<()> {
    let eps_values: Vec<f64> = parse_list(&args.eps, "eps")?;
    let k_values: Vec<usize> = parse_list(&args.k, "k")?;
    let mut rows = Vec::new();
    for &k in &k_values {
        for &eps in &eps_values {
            let cal = find_gamma(eps, args.delta, k)?;
            rows.push(CalibrationRow {
                eps,
                delta: args.delta,
                k,
                gamma: cal.gamma,
                eta: cal.eta,
                alpha_star: cal.alpha_star,
                eps_achieved: cal.eps_achieved,
            });
        }
    }
    let text = serialize_rows(&rows, &args.format)?;
    write_or_print(args.output.as_deref(), &text)
}

fn compare_bounds_cmd(args: CompareBoundsArgs) -> Result<()> {
    if args.points < 2 || !(args.gamma_max > args.gamma_min) || !(args.gamma_min > 0.0) {
        return Err(Error::Config(
            "need points >= 2 and 0 < gamma_min < gamma_max".into(),
        ));
    }
    let (lo, hi) = (args.gamma_min.ln(), args.gamma_max.ln());
    let grid: Vec<f64> = (0..args.points)
        .map(|i| (lo + (hi - lo) * i as f64 / (args.points - 1) as f64).exp())
        .collect();
    let rows = compare_bounds(&grid, args.k, args.delta)?;
    let text = serialize_rows(&rows, &args.format)?;
    write_or_print(args.output.as_deref(), &text)
}

#[derive(Serialize)]
struct AuditRow {
    matrix: usize,
    alpha: f64,
    phi: f64,
    exact_zero_out: f64,
    exact_insertion: f64,
    slack: f64,
}

/// Worst-case divergence over the possible zeroed rows.
fn worst_zero_out(x: &DMatrix<f64>, sigma: f64, k: usize, alpha: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for row in 0..x.nrows() {
        worst = worst.max(exact_renyi_gaussmix(x, row, sigma, k, alpha)?);
    }
    Ok(worst)
}

fn worst_insertion(x: &DMatrix<f64>, sigma: f64, k: usize, alpha: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for row in 0..x.nrows() {
        worst = worst.max(exact_renyi_gaussmix_insertion(x, row, sigma, k, alpha)?);
    }
    Ok(worst)
}

fn audit_cmd(args: AuditArgs) -> Result<()> {
    if args.d == 0 || args.k == 0 || args.alphas == 0 || args.matrices == 0 {
        return Err(Error::Config("audit sizes must be positive".into()));
    }
    let seed = seed_override()?.unwrap_or(args.seed);
    let n = args.n.unwrap_or(2 * args.d);
    let mut rows = Vec::new();
    let mut worst_slack = f64::INFINITY;
    for m in 0..args.matrices {
        let stream = RngStream::new(seed, m as u64);
        let x = normal_matrix(&mut stream.substream(role::DATA), n, args.d);
        let c = max_row_norm(&x);
        let lambda_min = min_eigenvalue(&(x.transpose() * &x))?;
        let sigma_sq = args.gamma * c * c - lambda_min;
        if sigma_sq < 0.0 {
            return Err(Error::Domain(format!(
                "gamma {} is below this matrix's lambda_min/C^2 = {}",
                args.gamma,
                lambda_min / (c * c)
            )));
        }
        let sigma = sigma_sq.sqrt();
        for j in 0..args.alphas {
            // Log-spaced in alpha - 1 so both ends of (1, gamma) are probed.
            let frac = (j as f64 + 0.5) / args.alphas as f64;
            let alpha = 1.0 + (args.gamma - 1.0 - 1e-9) * ((frac * 14.0).exp() - 1.0)
                / (14.0f64.exp() - 1.0);
            let curve = phi(alpha, args.k, args.gamma)?;
            let zero_out = worst_zero_out(&x, sigma, args.k, alpha)?;
            let insertion = worst_insertion(&x, sigma, args.k, alpha)?;
            let slack = curve - zero_out;
            worst_slack = worst_slack.min(slack);
            rows.push(AuditRow {
                matrix: m,
                alpha,
                phi: curve,
                exact_zero_out: zero_out,
                exact_insertion: insertion,
                slack,
            });
        }
    }
    let text = serialize_rows(&rows, &args.format)?;
    write_or_print(args.output.as_deref(), &text)?;
    eprintln!("audit: worst slack (phi - exact) = {worst_slack:.6e} over {} rows", rows.len());
    if worst_slack < -1e-12 {
        eprintln!("audit: VIOLATION - the analytic curve fell below an exact divergence");
        std::process::exit(1);
    }
    Ok(())
}

fn dataset_spec_from_flags(
    kind: &str,
    n: Option<usize>,
    d: Option<usize>,
    q: usize,
    noise_std: f64,
    sep: f64,
    csv_path: Option<&Path>,
    full: bool,
) -> Result<DatasetSpec> {
    let is_binary = kind == "two_gaussian";
    let default_n = if is_binary {
        4000
    } else if full {
        8192
    } else {
        2048
    };
    let default_d = if is_binary {
        32
    } else if full {
        512
    } else {
        64
    };
    let n = n.unwrap_or(default_n);
    let d = d.unwrap_or(default_d);
    match kind {
        "gaussian" => Ok(DatasetSpec::GaussianSubspace { n, d, q, noise_std }),
        "mlp" => Ok(DatasetSpec::Mlp { n, d, noise_std }),
        "uniform" => Ok(DatasetSpec::Uniform { n, d, noise_std }),
        "two_gaussian" => Ok(DatasetSpec::TwoGaussian { n, d, separation: sep }),
        "csv" => {
            let path =
                csv_path.ok_or_else(|| Error::Config("dataset csv requires --csv-path".into()))?;
            Ok(DatasetSpec::Csv { path: path.to_path_buf() })
        }
        other => Err(Error::Config(format!("unknown dataset kind {other:?}"))),
    }
}

fn fit_cmd(args: FitArgs, logistic: bool) -> Result<()> {
    let method = match &args.method {
        Some(name) => Method::parse(name)?,
        None => {
            if logistic {
                Method::LogisticMixing
            } else {
                Method::LinearMixing
            }
        }
    };
    let default_kind = if logistic { "two_gaussian" } else { "gaussian" };
    let kind = args.dataset.as_deref().unwrap_or(default_kind);
    let dataset = dataset_spec_from_flags(
        kind,
        args.n,
        args.d,
        args.q,
        args.noise_std,
        args.sep,
        args.csv_path.as_deref(),
        args.full,
    )?;
    let seed = seed_override()?.unwrap_or(args.seed);
    let config = ExperimentConfig {
        methods: vec![method],
        eps: vec![args.eps],
        delta: args.delta,
        k: args.k.parse::<KSpec>()?,
        trials: 1,
        base_seed: seed,
        dataset,
        train_fraction: args.train_fraction,
        surrogate_q: args.surrogate_q,
        output: None,
        format: OutputFormat::Json,
    };
    config.validate()?;
    let base = load_base(&config)?;
    let data = materialize_trial(&config, base.as_ref(), 0)?;
    let fit = fit_once(
        &data,
        method,
        args.eps,
        args.delta,
        config.k,
        args.surrogate_q,
        RngStream::new(seed, 0),
        0,
    )?;
    eprintln!(
        "{}: metric {:.6} in {:.3} ms",
        method,
        fit.metric,
        fit.runtime_s * 1e3
    );
    let text = records_to_json(&[fit.record])?;
    write_or_print(args.output.as_deref(), &text)
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let seed = seed_override()?.unwrap_or(args.seed);
    let spec = dataset_spec_from_flags(
        &args.dataset,
        args.n,
        args.d,
        args.q,
        args.noise_std,
        args.sep,
        None,
        args.full,
    )?;
    let stream = RngStream::new(seed, 0);
    let text = match spec {
        DatasetSpec::GaussianSubspace { n, d, q, noise_std } => {
            dataset_to_csv(&synth_gaussian_subspace(n, d, q, noise_std, stream)?)?
        }
        DatasetSpec::Mlp { n, d, noise_std } => dataset_to_csv(&synth_mlp(n, d, noise_std, stream)?)?,
        DatasetSpec::Uniform { n, d, noise_std } => {
            dataset_to_csv(&synth_uniform(n, d, noise_std, stream)?)?
        }
        DatasetSpec::TwoGaussian { n, d, separation } => {
            dataset_to_csv_binary(&synth_two_gaussian(n, d, separation, stream)?)?
        }
        DatasetSpec::Csv { .. } => {
            return Err(Error::Config("synth cannot generate from a csv".into()))
        }
    };
    write_or_print(args.output.as_deref(), &text)
}

fn bench_cmd(args: BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = seed_override()? {
        config.base_seed = seed;
    }
    if let Some(format) = &args.format {
        config.format = format.parse()?;
    }
    if let Some(output) = args.output {
        config.output = Some(output);
    }
    let (rows, records) = run_experiment(&config)?;
    let body = match config.format {
        OutputFormat::Csv => rows_to_csv(&rows)?,
        OutputFormat::Json => rows_to_json(&rows)?,
    };
    write_or_print(config.output.as_deref(), &body)?;
    if let Some(fits) = args.fits {
        std::fs::write(&fits, records_to_json(&records)?)?;
    }
    Ok(())
}
