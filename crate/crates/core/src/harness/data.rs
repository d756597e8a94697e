//! Dataset ingestion, generation, normalization, and splitting.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::logistic::BinaryLabeledDataset;
use crate::regression::LabeledDataset;
use crate::rng::{normal_matrix, normal_vector, uniform_pm1_vector, role, RngStream};

fn row_bound(x: &DMatrix<f64>) -> f64 {
    let worst = linalg::max_row_norm(x);
    if worst > 0.0 {
        worst
    } else {
        1.0
    }
}

fn label_bound(y: &DVector<f64>) -> f64 {
    let worst = y.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if worst > 0.0 {
        worst
    } else {
        1.0
    }
}

fn read_cells(path: &Path) -> Result<(Vec<Vec<f64>>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_error)?;
    let width = reader.headers().map_err(csv_error)?.len();
    if width < 2 {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            msg: format!("need at least one feature column plus a response, got {width} columns"),
        });
    }
    let mut rows = Vec::new();
    // The header is row 1, so data records start at row 2.
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row_no = idx + 2;
        if record.len() != width {
            return Err(Error::Parse {
                row: row_no,
                col: record.len(),
                msg: format!("expected {width} cells, got {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(width);
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                col: j + 1,
                msg: format!("cell {cell:?} is not numeric"),
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { row: 2, col: 1, msg: "no data rows".into() });
    }
    Ok((rows, width))
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!("is_io_error guarantees an io kind"),
        }
    } else {
        let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse { row, col: 0, msg: e.to_string() }
    }
}

fn cells_to_xy(rows: Vec<Vec<f64>>, width: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = rows.len();
    let d = width - 1;
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let y = DVector::from_fn(n, |i, _| rows[i][d]);
    (x, y)
}

/// Load a regression dataset: header, all-numeric cells, response in the
/// last column. Bounds come from the data itself.
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let (rows, width) = read_cells(path)?;
    let (x, y) = cells_to_xy(rows, width);
    let c_x = row_bound(&x);
    let c_y = label_bound(&y);
    LabeledDataset::new(x, y, c_x, c_y)
}

/// Load a binary dataset: same layout, labels must be exactly +-1.
pub fn load_csv_binary(path: &Path) -> Result<BinaryLabeledDataset> {
    let (rows, width) = read_cells(path)?;
    let (x, y) = cells_to_xy(rows, width);
    let c_x = row_bound(&x);
    BinaryLabeledDataset::new(x, y, c_x)
}

fn xy_to_csv(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    writer.write_record(&header).map_err(csv_error)?;
    for i in 0..x.nrows() {
        let mut row: Vec<String> = (0..x.ncols()).map(|j| format!("{}", x[(i, j)])).collect();
        row.push(format!("{}", y[i]));
        writer.write_record(&row).map_err(csv_error)?;
    }
    let bytes =
        writer.into_inner().map_err(|e| Error::Config(format!("csv buffer flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv output not utf-8: {e}")))
}

/// Render a regression dataset as CSV with header x0,...,x{d-1},y. Values
/// use the shortest exact decimal form, so a read-back reproduces them bit
/// for bit.
pub fn dataset_to_csv(data: &LabeledDataset) -> Result<String> {
    xy_to_csv(data.x(), data.y())
}

/// Same format for binary data; the label column holds +-1.
pub fn dataset_to_csv_binary(data: &BinaryLabeledDataset) -> Result<String> {
    xy_to_csv(data.x(), data.y())
}

pub fn save_csv(path: &Path, data: &LabeledDataset) -> Result<()> {
    std::fs::write(path, dataset_to_csv(data)?)?;
    Ok(())
}

pub fn save_csv_binary(path: &Path, data: &BinaryLabeledDataset) -> Result<()> {
    std::fs::write(path, dataset_to_csv_binary(data)?)?;
    Ok(())
}

/// Scale all covariate rows by the largest train-row norm so the train rows
/// fit in the unit ball. Test rows use the same factor and may stay outside.
/// Responses are untouched; their bound is recomputed from the train split.
pub fn normalize_train_test(
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<(LabeledDataset, LabeledDataset, f64)> {
    let factor = linalg::max_row_norm(train.x());
    if factor <= 0.0 {
        return Err(Error::Degenerate("all train rows are zero".into()));
    }
    let train_x = train.x() / factor;
    let test_x = test.x() / factor;
    let c_y_train = label_bound(train.y());
    let scaled_train = LabeledDataset::new(train_x, train.y().clone(), 1.0, c_y_train)?;
    let scaled_test =
        LabeledDataset::new(test_x.clone(), test.y().clone(), row_bound(&test_x), label_bound(test.y()))?;
    Ok((scaled_train, scaled_test, factor))
}

/// Binary counterpart: covariates scale, the +-1 labels stay put.
pub fn normalize_binary_train_test(
    train: &BinaryLabeledDataset,
    test: &BinaryLabeledDataset,
) -> Result<(BinaryLabeledDataset, BinaryLabeledDataset, f64)> {
    let factor = linalg::max_row_norm(train.x());
    if factor <= 0.0 {
        return Err(Error::Degenerate("all train rows are zero".into()));
    }
    let train_x = train.x() / factor;
    let test_x = test.x() / factor;
    let scaled_train = BinaryLabeledDataset::new(train_x, train.y().clone(), 1.0)?;
    let scaled_test =
        BinaryLabeledDataset::new(test_x.clone(), test.y().clone(), row_bound(&test_x))?;
    Ok((scaled_train, scaled_test, factor))
}

/// Shuffled index split. The permutation comes from the stream's SPLIT role,
/// so it is independent of every mechanism draw on the same stream.
pub fn split_indices(
    n: usize,
    train_fraction: f64,
    rng: RngStream,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 rows to split, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "train fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    indices.shuffle(&mut rng.substream(role::SPLIT));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let test = indices.split_off(n_train);
    Ok((indices, test))
}

/// 80/20-style split of a regression dataset with a seeded shuffle.
pub fn split_shuffle(
    data: &LabeledDataset,
    train_fraction: f64,
    rng: RngStream,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (tr, te) = split_indices(data.nrows(), train_fraction, rng)?;
    let take = |idx: &[usize]| {
        let x = data.x().select_rows(idx.iter());
        let y = DVector::from_fn(idx.len(), |i, _| data.y()[idx[i]]);
        LabeledDataset::new(x, y, data.c_x(), data.c_y())
    };
    Ok((take(&tr)?, take(&te)?))
}

/// Split of a binary dataset with the same index convention.
pub fn split_shuffle_binary(
    data: &BinaryLabeledDataset,
    train_fraction: f64,
    rng: RngStream,
) -> Result<(BinaryLabeledDataset, BinaryLabeledDataset)> {
    let (tr, te) = split_indices(data.nrows(), train_fraction, rng)?;
    let take = |idx: &[usize]| {
        let x = data.x().select_rows(idx.iter());
        let y = DVector::from_fn(idx.len(), |i, _| data.y()[idx[i]]);
        BinaryLabeledDataset::new(x, y, data.c_x())
    };
    Ok((take(&tr)?, take(&te)?))
}

fn linear_responses(
    x: &DMatrix<f64>,
    noise_std: f64,
    gen: &mut rand_chacha::ChaCha12Rng,
) -> (DVector<f64>, DVector<f64>) {
    let d = x.ncols();
    let mut theta0 = normal_vector(gen, d);
    let norm = theta0.norm();
    if norm > 0.0 {
        theta0 /= norm;
    } else {
        theta0[0] = 1.0;
    }
    let xi = uniform_pm1_vector(gen, x.nrows());
    let y = x * &theta0 + xi * noise_std;
    (y, theta0)
}

/// Covariates on a random q-dimensional subspace: x_i = Q z_i with Q an
/// orthonormal d x q basis and z ~ N(0, I_q). Responses are x^T theta0 plus
/// Unif(-1,1) noise scaled by noise_std, theta0 uniform on the sphere.
pub fn synth_gaussian_subspace(
    n: usize,
    d: usize,
    q: usize,
    noise_std: f64,
    rng: RngStream,
) -> Result<LabeledDataset> {
    if n == 0 || d == 0 {
        return Err(Error::Domain(format!("need positive sizes, got n={n} d={d}")));
    }
    if q == 0 || q > d {
        return Err(Error::Domain(format!("subspace rank must satisfy 1 <= q <= d, got q={q}")));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Domain(format!("noise level must be nonnegative, got {noise_std}")));
    }
    let mut gen = rng.substream(role::DATA);
    let basis = normal_matrix(&mut gen, d, q);
    let q_mat = basis.qr().q();
    let z = normal_matrix(&mut gen, n, q);
    let x = z * q_mat.transpose();
    let (y, _) = linear_responses(&x, noise_std, &mut gen);
    let c_x = row_bound(&x);
    let c_y = label_bound(&y);
    LabeledDataset::new(x, y, c_x, c_y)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Covariates from a fixed random two-layer sigmoid network applied to a
/// 2-dimensional latent Gaussian, so the covariate cloud sits near a
/// low-dimensional manifold in (0,1)^d. Responses as in the subspace
/// generator.
pub fn synth_mlp(n: usize, d: usize, noise_std: f64, rng: RngStream) -> Result<LabeledDataset> {
    if n == 0 || d == 0 {
        return Err(Error::Domain(format!("need positive sizes, got n={n} d={d}")));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Domain(format!("noise level must be nonnegative, got {noise_std}")));
    }
    const HIDDEN: usize = 100;
    let mut gen = rng.substream(role::DATA);
    let w1 = normal_matrix(&mut gen, HIDDEN, 2);
    let b1 = normal_vector(&mut gen, HIDDEN) * 1e-3;
    let w2 = normal_matrix(&mut gen, d, HIDDEN);
    let b2 = normal_vector(&mut gen, d) * 1e-3;
    let latent = normal_matrix(&mut gen, n, 2);

    let mut hidden = latent * w1.transpose();
    for i in 0..n {
        for j in 0..HIDDEN {
            hidden[(i, j)] = sigmoid(hidden[(i, j)] + b1[j]);
        }
    }
    let mut x = hidden * w2.transpose();
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] = sigmoid(x[(i, j)] + b2[j]);
        }
    }
    let (y, _) = linear_responses(&x, noise_std, &mut gen);
    let c_x = row_bound(&x);
    let c_y = label_bound(&y);
    LabeledDataset::new(x, y, c_x, c_y)
}

/// Covariate entries i.i.d. Unif(-1,1); responses as in the subspace
/// generator.
pub fn synth_uniform(n: usize, d: usize, noise_std: f64, rng: RngStream) -> Result<LabeledDataset> {
    if n == 0 || d == 0 {
        return Err(Error::Domain(format!("need positive sizes, got n={n} d={d}")));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Domain(format!("noise level must be nonnegative, got {noise_std}")));
    }
    let mut gen = rng.substream(role::DATA);
    let flat = uniform_pm1_vector(&mut gen, n * d);
    let x = DMatrix::from_column_slice(n, d, flat.as_slice());
    let (y, _) = linear_responses(&x, noise_std, &mut gen);
    let c_x = row_bound(&x);
    let c_y = label_bound(&y);
    LabeledDataset::new(x, y, c_x, c_y)
}

/// Binary task: two spherical Gaussian clusters at -+(separation/2) along the
/// first axis, per-coordinate noise std 1/sqrt(d) so row norms stay near 1,
/// labels alternating +-1.
pub fn synth_two_gaussian(
    n: usize,
    d: usize,
    separation: f64,
    rng: RngStream,
) -> Result<BinaryLabeledDataset> {
    if n == 0 || d == 0 {
        return Err(Error::Domain(format!("need positive sizes, got n={n} d={d}")));
    }
    if !(separation >= 0.0) {
        return Err(Error::Domain(format!("separation must be nonnegative, got {separation}")));
    }
    let mut gen = rng.substream(role::DATA);
    let mut x = normal_matrix(&mut gen, n, d) / (d as f64).sqrt();
    let y = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    for i in 0..n {
        x[(i, 0)] += y[i] * separation / 2.0;
    }
    let c_x = row_bound(&x);
    BinaryLabeledDataset::new(x, y, c_x)
}
