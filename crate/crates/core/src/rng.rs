//! Deterministic, splittable randomness.
//!
//! Every randomized operation takes an [`RngStream`] and derives one ChaCha
//! generator per role from the `(seed, stream_id, role)` triple. A fit is
//! therefore a pure function of its inputs, two fits on distinct stream ids
//! never share draws, and trial fan-out needs no coordination: worker order
//! cannot change results.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Fixed sub-stream roles. Each randomized operation documents which roles it
/// consumes; reordering or renumbering these would silently change released
/// outputs for a given seed, so treat the numbers as part of the format.
pub mod role {
    /// Sketch matrix S.
    pub const SKETCH: u64 = 0;
    /// Primary additive noise (xi_1, or the symmetric gram perturbation).
    pub const NOISE: u64 = 1;
    /// Scalar z in the private minimum-eigenvalue shift.
    pub const EIG: u64 = 2;
    /// Secondary additive noise (xi_2, on the response side).
    pub const NOISE2: u64 = 3;
    /// Laplace draw in the spectral-gap test.
    pub const LAPLACE: u64 = 4;
    /// Objective-perturbation vector b.
    pub const OBJECTIVE: u64 = 5;
    /// Synthetic data generation.
    pub const DATA: u64 = 6;
    /// Train/test shuffling.
    pub const SPLIT: u64 = 7;
}

/// A named random stream: a base seed plus a stream id.
///
/// Identical `(seed, stream_id)` pairs reproduce identical draws for every
/// role, on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Generator for one role of this stream. Distinct triples give
    /// independent ChaCha key schedules.
    pub fn substream(&self, role: u64) -> ChaCha12Rng {
        let mut state = self.seed;
        let a = splitmix64(&mut state);
        state ^= self.stream_id;
        let b = splitmix64(&mut state);
        state ^= role;
        let c = splitmix64(&mut state);
        let d = splitmix64(&mut state);
        let mut key = [0u8; 32];
        for (i, word) in [a, b, c, d].into_iter().enumerate() {
            key[8 * i..8 * i + 8].copy_from_slice(&word.to_le_bytes());
        }
        ChaCha12Rng::from_seed(key)
    }
}

/// SplitMix64 step: advances `state` and returns a mixed word. Used only to
/// expand `(seed, stream, role)` into ChaCha keys.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `rows x cols` matrix of standard normals, filled column-major.
pub fn normal_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)))
}

pub fn normal_vector(rng: &mut ChaCha12Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

pub fn uniform_pm1_vector(rng: &mut ChaCha12Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0))
}

/// One Laplace(0, scale) draw by inverse CDF.
pub fn laplace(rng: &mut ChaCha12Rng, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    let t = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
    -scale * u.signum() * t.ln()
}
