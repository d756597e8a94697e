//! Benchmark harness: dataset plumbing, the trial protocol, and result
//! emission for the CLI.

pub mod data;
pub mod experiment;

pub use data::{
    dataset_to_csv, dataset_to_csv_binary, load_csv, load_csv_binary, normalize_binary_train_test,
    normalize_train_test, save_csv, save_csv_binary, split_indices, split_shuffle,
    split_shuffle_binary, synth_gaussian_subspace, synth_mlp, synth_two_gaussian, synth_uniform,
};
pub use experiment::{
    emit, fit_once, load_base, materialize_trial, parse_config, records_to_json, rows_from_csv,
    rows_to_csv, rows_to_json, run_experiment, DatasetSpec, ExperimentConfig, FitRecord, KSpec,
    LoadedBase, OutputFormat, ResultRow, SingleFit, TrialData, RIDGE_NU,
};

#[cfg(test)]
mod tests;
