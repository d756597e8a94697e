use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::harness::*;
use crate::linalg;
use crate::regression::{LabeledDataset, Method};
use crate::rng::RngStream;

fn write_temp_csv(content: &str) -> tempfile::NamedTempFile {
    use std::io::Write;
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(content.as_bytes()).unwrap();
    file.flush().unwrap();
    file
}

#[test]
fn load_csv_parses_toy_file_exactly() {
    let file = write_temp_csv("a,b,y\n1,2,3\n4,5,6\n-1,0.5,0\n");
    let data = load_csv(file.path()).unwrap();
    let expected_x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 4.0, 5.0, -1.0, 0.5]);
    assert_eq!(data.x(), &expected_x);
    assert_eq!(data.y(), &DVector::from_vec(vec![3.0, 6.0, 0.0]));
    assert_relative_eq!(data.c_x(), 41.0f64.sqrt());
    assert_relative_eq!(data.c_y(), 6.0);
}

#[test]
fn load_csv_names_the_bad_cell() {
    let file = write_temp_csv("a,b,y\n1,2,3\n4,oops,6\n");
    match load_csv(file.path()) {
        Err(Error::Parse { row, col, msg }) => {
            // Header is row 1, so the bad record is row 3, second column.
            assert_eq!((row, col), (3, 2));
            assert!(msg.contains("oops"), "{msg}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn csv_round_trip_is_lossless() {
    let x = DMatrix::from_row_slice(
        3,
        2,
        &[std::f64::consts::PI, 1.0 / 3.0, -2.5e-17, 1.0e17, 0.1 + 0.2, -0.0],
    );
    let y = DVector::from_vec(vec![1.0 / 7.0, -1.0 / 9.0, 2.0f64.sqrt()]);
    let data = LabeledDataset::new(x, y, 2e17, 2.0).unwrap();
    let file = tempfile::NamedTempFile::new().unwrap();
    save_csv(file.path(), &data).unwrap();
    let back = load_csv(file.path()).unwrap();
    assert_eq!(back.x(), data.x());
    assert_eq!(back.y(), data.y());
}

fn toy_regression(values: &[f64], rows: usize, cols: usize, y: Vec<f64>) -> LabeledDataset {
    let x = DMatrix::from_row_slice(rows, cols, values);
    let c_x = linalg::max_row_norm(&x).max(1e-12);
    let c_y = y.iter().fold(1e-12f64, |a, v| a.max(v.abs()));
    LabeledDataset::new(x, DVector::from_vec(y), c_x, c_y).unwrap()
}

#[test]
fn normalization_scales_train_to_unit_ball_and_test_by_same_factor() {
    let train = toy_regression(&[2.0, 0.0, 0.0, 1.0], 2, 2, vec![1.0, -3.0]);
    let test = toy_regression(&[4.0, 0.0], 1, 2, vec![0.5]);
    let (train2, test2, factor) = normalize_train_test(&train, &test).unwrap();
    assert_relative_eq!(factor, 2.0);
    assert!(linalg::max_row_norm(train2.x()) <= 1.0 + 1e-12);
    assert_relative_eq!(test2.x()[(0, 0)], 2.0);
    // Responses untouched; train response bound recomputed.
    assert_eq!(train2.y(), train.y());
    assert_relative_eq!(train2.c_y(), 3.0);

    // Idempotence.
    let (train3, test3, factor2) = normalize_train_test(&train2, &test2).unwrap();
    assert_relative_eq!(factor2, 1.0, epsilon = 1e-12);
    assert_relative_eq!(train3.x(), train2.x(), epsilon = 1e-12);
    assert_relative_eq!(test3.x(), test2.x(), epsilon = 1e-12);
}

#[test]
fn normalization_rejects_all_zero_train() {
    let train = toy_regression(&[0.0, 0.0], 1, 2, vec![1.0]);
    let test = toy_regression(&[1.0, 0.0], 1, 2, vec![1.0]);
    assert!(matches!(normalize_train_test(&train, &test), Err(Error::Degenerate(_))));
}

#[test]
fn split_is_a_seeded_partition() {
    let (train, test) = split_indices(2048, 0.8, RngStream::new(7, 0)).unwrap();
    assert_eq!(train.len(), 1638);
    assert_eq!(test.len(), 410);
    let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..2048).collect::<Vec<_>>());

    let (train_b, _) = split_indices(2048, 0.8, RngStream::new(7, 0)).unwrap();
    assert_eq!(train, train_b);
    let (train_c, _) = split_indices(2048, 0.8, RngStream::new(8, 0)).unwrap();
    assert_ne!(train, train_c);

    let (tr, te) = split_indices(10, 0.8, RngStream::new(1, 1)).unwrap();
    assert_eq!((tr.len(), te.len()), (8, 2));
}

#[test]
fn subspace_generator_has_rank_q_and_the_right_noise_floor() {
    let data = synth_gaussian_subspace(100_000, 16, 4, 0.5, RngStream::new(3, 0)).unwrap();
    let svals = data.x().clone().svd(false, false).singular_values;
    assert!(svals[4] <= 1e-8 * svals[0], "rank leak: {}", svals[4]);

    // Residual variance after an exact least-squares fit recovers the
    // Unif(-1,1) noise variance sigma^2/3.
    let solved = linalg::lstsq(data.x(), data.y()).unwrap();
    let resid = data.y() - data.x() * solved.solution;
    let mse = resid.norm_squared() / data.nrows() as f64;
    let target = 0.25 / 3.0;
    assert!((mse - target).abs() <= 0.05 * target, "mse {mse} vs {target}");

    let again = synth_gaussian_subspace(100_000, 16, 4, 0.5, RngStream::new(3, 0)).unwrap();
    assert_eq!(data.x(), again.x());
    assert_eq!(data.y(), again.y());
    assert!(synth_gaussian_subspace(10, 4, 5, 0.1, RngStream::new(0, 0)).is_err());
}

#[test]
fn mlp_generator_lands_in_unit_cube_on_a_low_dim_manifold() {
    let data = synth_mlp(4096, 64, 0.1, RngStream::new(11, 0)).unwrap();
    assert!(data.x().iter().all(|v| *v > 0.0 && *v < 1.0));

    let mut centered = data.x().clone();
    let means: Vec<f64> = (0..64).map(|j| centered.column(j).mean()).collect();
    for i in 0..4096 {
        for j in 0..64 {
            centered[(i, j)] -= means[j];
        }
    }
    // The 2-d latent keeps the numerical rank far below d: the saturated
    // sigmoid embedding spreads energy over roughly a dozen directions, so
    // the spectrum collapses by rank 20 while top-5 already dominates.
    let svals = centered.svd(false, false).singular_values;
    let total: f64 = svals.iter().map(|s| s * s).sum();
    let top5: f64 = svals.iter().take(5).map(|s| s * s).sum();
    let top20: f64 = svals.iter().take(20).map(|s| s * s).sum();
    assert!(top5 >= 0.9 * total, "top-5 energy {}", top5 / total);
    assert!(top20 >= 0.99 * total, "top-20 energy {}", top20 / total);

    let again = synth_mlp(4096, 64, 0.1, RngStream::new(11, 0)).unwrap();
    assert_eq!(data.x(), again.x());
}

#[test]
fn uniform_generator_moments() {
    let data = synth_uniform(2000, 50, 0.1, RngStream::new(5, 0)).unwrap();
    assert!(data.x().iter().all(|v| v.abs() <= 1.0));
    let mean = data.x().iter().sum::<f64>() / (2000.0 * 50.0);
    let stderr = (1.0 / 3.0f64).sqrt() / (2000.0 * 50.0f64).sqrt();
    assert!(mean.abs() <= 3.0 * stderr, "mean {mean} vs 3se {}", 3.0 * stderr);
    let again = synth_uniform(2000, 50, 0.1, RngStream::new(5, 0)).unwrap();
    assert_eq!(data.x(), again.x());
}

#[test]
fn two_gaussian_generator_separates_classes() {
    let data = synth_two_gaussian(4000, 8, 1.0, RngStream::new(9, 0)).unwrap();
    let pos_mean = (0..4000)
        .filter(|i| data.y()[*i] == 1.0)
        .map(|i| data.x()[(i, 0)])
        .sum::<f64>()
        / 2000.0;
    let neg_mean = (0..4000)
        .filter(|i| data.y()[*i] == -1.0)
        .map(|i| data.x()[(i, 0)])
        .sum::<f64>()
        / 2000.0;
    assert!((pos_mean - neg_mean - 1.0).abs() < 0.05, "gap {}", pos_mean - neg_mean);
    assert_eq!(data.y().iter().filter(|v| **v == 1.0).count(), 2000);
}

#[test]
fn k_spec_parsing() {
    assert_eq!("256".parse::<KSpec>().unwrap(), KSpec::Absolute(256));
    assert_eq!("4d".parse::<KSpec>().unwrap(), KSpec::PerDim(4));
    assert_eq!("d".parse::<KSpec>().unwrap(), KSpec::PerDim(1));
    assert_eq!(KSpec::PerDim(4).resolve(64), 256);
    assert!("0".parse::<KSpec>().is_err());
    assert!("0d".parse::<KSpec>().is_err());
    assert!("4x".parse::<KSpec>().is_err());
    assert_eq!(format!("{}", KSpec::PerDim(4)), "4d");
}

#[test]
fn config_parsing_full_and_defaults() {
    let text = "\
# comment line
methods = linear_mixing, sheffet
eps = 0.5, 1, 2
delta = 1e-6
k = 128
trials = 7
base_seed = 42
dataset = uniform
n = 100
d = 10
noise_std = 0.2
train_fraction = 0.75
format = json
";
    let config = parse_config(text).unwrap();
    assert_eq!(config.methods, vec![Method::LinearMixing, Method::Sheffet]);
    assert_eq!(config.eps, vec![0.5, 1.0, 2.0]);
    assert_eq!(config.delta, 1e-6);
    assert_eq!(config.k, KSpec::Absolute(128));
    assert_eq!(config.trials, 7);
    assert_eq!(config.base_seed, 42);
    assert_eq!(config.dataset, DatasetSpec::Uniform { n: 100, d: 10, noise_std: 0.2 });
    assert_eq!(config.train_fraction, 0.75);
    assert_eq!(config.format, OutputFormat::Json);

    let defaults = parse_config("").unwrap();
    assert_eq!(defaults.trials, 50);
    assert_eq!(defaults.k, KSpec::PerDim(4));
    assert_eq!(
        defaults.dataset,
        DatasetSpec::GaussianSubspace { n: 2048, d: 64, q: 4, noise_std: 0.1 }
    );
    let full = parse_config("full = true").unwrap();
    assert_eq!(
        full.dataset,
        DatasetSpec::GaussianSubspace { n: 8192, d: 512, q: 4, noise_std: 0.1 }
    );
}

#[test]
fn config_parsing_rejects_bad_input() {
    assert!(matches!(parse_config("nonsense = 1"), Err(Error::Config(_))));
    assert!(matches!(parse_config("eps = 2, 1"), Err(Error::Config(_))));
    assert!(matches!(parse_config("eps = 0, 1"), Err(Error::Config(_))));
    assert!(matches!(parse_config("trials = 0"), Err(Error::Config(_))));
    assert!(matches!(
        parse_config("methods = ridge, logistic_mixing"),
        Err(Error::Config(_))
    ));
    assert!(matches!(parse_config("dataset = csv"), Err(Error::Config(_))));
    assert!(matches!(
        parse_config("methods = logistic_mixing\ndataset = gaussian"),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        parse_config("methods = ridge\ndataset = two_gaussian"),
        Err(Error::Config(_))
    ));
}

#[test]
fn result_csv_header_is_pinned() {
    let row = ResultRow {
        method: "ridge".into(),
        eps: 1.0,
        mean_metric: 0.5,
        ci_low: 0.4,
        ci_high: 0.6,
        mean_runtime_s: 0.01,
        trials: 3,
        seed: 0,
    };
    let text = rows_to_csv(&[row.clone()]).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "method,eps,mean,ci_low,ci_high,runtime_s,trials,seed"
    );
    let back = rows_from_csv(&text).unwrap();
    assert_eq!(back, vec![row]);
}

fn smoke_config() -> ExperimentConfig {
    ExperimentConfig {
        methods: vec![Method::Ridge, Method::LinearMixing],
        eps: vec![1.0, 2.0],
        trials: 3,
        k: KSpec::PerDim(2),
        dataset: DatasetSpec::GaussianSubspace { n: 64, d: 8, q: 2, noise_std: 0.1 },
        base_seed: 5,
        ..ExperimentConfig::default()
    }
}

#[test]
fn experiment_rows_are_sorted_consistent_and_reproducible() {
    let config = smoke_config();
    let (rows, records) = run_experiment(&config).unwrap();
    assert_eq!(rows.len(), 4);
    let keys: Vec<(&str, f64)> = rows.iter().map(|r| (r.method.as_str(), r.eps)).collect();
    assert_eq!(
        keys,
        vec![("linear_mixing", 1.0), ("linear_mixing", 2.0), ("ridge", 1.0), ("ridge", 2.0)]
    );
    for row in &rows {
        assert!(row.ci_low <= row.mean_metric && row.mean_metric <= row.ci_high);
        assert_eq!(row.trials, 3);
        assert_eq!(row.seed, 5);
    }
    // The non-private baseline ignores the budget.
    assert_eq!(rows[2].mean_metric, rows[3].mean_metric);

    assert_eq!(records.len(), 12);
    for record in &records {
        match record.method.as_str() {
            "linear_mixing" => {
                assert!(record.gamma_used.is_some());
                assert!(record.branch.is_some());
            }
            "ridge" => assert!(record.gamma_used.is_none()),
            other => panic!("unexpected method {other}"),
        }
        assert!(record.test_mse.is_some());
        assert!(record.test_accuracy.is_none());
    }

    // Everything except wall-clock reproduces bit for bit.
    let (rows2, records2) = run_experiment(&config).unwrap();
    let strip = |mut r: Vec<ResultRow>| {
        for row in &mut r {
            row.mean_runtime_s = 0.0;
        }
        r
    };
    assert_eq!(strip(rows), strip(rows2));
    assert_eq!(records, records2);
}

#[test]
fn single_trial_collapses_the_interval() {
    let config = ExperimentConfig { trials: 1, ..smoke_config() };
    let (rows, _) = run_experiment(&config).unwrap();
    for row in rows {
        assert_eq!(row.ci_low, row.mean_metric);
        assert_eq!(row.ci_high, row.mean_metric);
    }
}

#[test]
fn binary_experiment_reports_accuracy_and_surrogate_fields() {
    let config = ExperimentConfig {
        methods: vec![Method::LogisticMixing, Method::ObjectivePerturbation],
        eps: vec![2.0],
        trials: 2,
        k: KSpec::Absolute(8),
        dataset: DatasetSpec::TwoGaussian { n: 60, d: 4, separation: 2.0 },
        base_seed: 1,
        ..ExperimentConfig::default()
    };
    let (rows, records) = run_experiment(&config).unwrap();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert!(row.mean_metric >= 0.0 && row.mean_metric <= 1.0);
    }
    for record in &records {
        assert!(record.test_accuracy.is_some());
        assert!(record.test_mse.is_none());
        if record.method == "logistic_mixing" {
            assert_eq!(record.surrogate_q, Some(4.0));
            assert!(record.b0.is_some() && record.b1.is_some() && record.b2.is_some());
            assert!(record.q_bound.is_some());
            assert!(record.surrogate_violations.is_some());
        } else {
            assert!(record.surrogate_q.is_none());
        }
    }
}

#[test]
fn csv_dataset_feeds_the_experiment() {
    let full = synth_uniform(80, 5, 0.1, RngStream::new(2, 0)).unwrap();
    let file = tempfile::NamedTempFile::new().unwrap();
    save_csv(file.path(), &full).unwrap();
    let config = ExperimentConfig {
        methods: vec![Method::Ridge],
        eps: vec![1.0],
        trials: 2,
        dataset: DatasetSpec::Csv { path: file.path().to_path_buf() },
        ..ExperimentConfig::default()
    };
    let (rows, records) = run_experiment(&config).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(records.len(), 2);
    // Different trials use different splits of the same file.
    assert_ne!(records[0].train_loss, records[1].train_loss);
}

#[test]
fn fit_once_rejects_task_mismatch() {
    let config = smoke_config();
    let data = materialize_trial(&config, None, 0).unwrap();
    let err = fit_once(
        &data,
        Method::LogisticMixing,
        1.0,
        1e-5,
        KSpec::Absolute(8),
        4.0,
        RngStream::new(0, 0),
        0,
    );
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn json_emission_round_trips() {
    let config = ExperimentConfig { trials: 2, ..smoke_config() };
    let (rows, records) = run_experiment(&config).unwrap();
    let rows_json = rows_to_json(&rows).unwrap();
    let back: Vec<ResultRow> = serde_json::from_str(&rows_json).unwrap();
    assert_eq!(back, rows);
    let recs_json = records_to_json(&records).unwrap();
    let back: Vec<FitRecord> = serde_json::from_str(&recs_json).unwrap();
    assert_eq!(back, records);
}
