//! Brownian increments from a counter-based generator.
//!
//! Every normal draw is addressed by `(seed, channel, path_index, step)`, so
//! paths can be generated in any order and on any number of threads with
//! bit-identical results.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform grid on `[0, horizon]` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    step: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        let step = horizon / steps as f64;
        if step >= 1.0 {
            return Err(Error::Config(format!(
                "step h = {step} must be below 1 (steps {steps} must exceed horizon {horizon})"
            )));
        }
        Ok(Self { horizon, steps, step })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// The step size `h`.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Time of grid node `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// The grid with `factor` fine steps merged into one.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(Error::Config(format!("coarsening factor {factor} does not divide {} steps", self.steps)));
        }
        Self::new(self.horizon, self.steps / factor)
    }
}

/// Brownian increments of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementBatch {
    pub grid: TimeGrid,
    pub seed: u64,
    pub path_index: u64,
    pub values: Vec<f64>,
    /// Set once the values have been clipped to the truncation band.
    pub truncated: bool,
}

/// Band half-width `a_h = 4 sqrt(-h log h)` of truncated increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationLevel {
    pub a_h: f64,
}

impl TruncationLevel {
    pub fn for_step(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Domain(format!("truncation needs h in (0, 1), got {h}")));
        }
        Ok(Self { a_h: 4.0 * (-h * h.ln()).sqrt() })
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(-self.a_h, self.a_h)
    }
}

/// Channel of the primary Brownian motion.
pub const PRIMARY_CHANNEL: u64 = 0;
/// Channel used for the independent motion in [`correlate`].
pub const INDEPENDENT_CHANNEL: u64 = 1;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(seed: u64, channel: u64) -> [u8; 32] {
    let mut state = seed ^ channel.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut out = [0u8; 32];
    for chunk in out.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    out
}

/// Counter-based stream of standard normals for one `(seed, channel, path)`.
///
/// Each normal consumes exactly four 32-bit words, so draw `k` starts at word
/// position `4k`.
#[derive(Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64, channel: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(key(seed, channel));
        rng.set_stream(path_index);
        Self { rng }
    }

    /// Moves to draw number `k`.
    pub fn seek(&mut self, k: u64) {
        self.rng.set_word_pos(4 * k as u128);
    }

    /// Box-Muller on two 53-bit uniforms; `u1` lies in `(0, 1]`.
    pub fn next_normal(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn sample_channel(grid: &TimeGrid, seed: u64, channel: u64, path_index: u64) -> Vec<f64> {
    let sd = grid.step().sqrt();
    let mut stream = NormalStream::new(seed, channel, path_index);
    (0..grid.steps()).map(|_| sd * stream.next_normal()).collect()
}

/// Gaussian increments `N(0, h)` of path `path_index`.
pub fn sample_increments(grid: &TimeGrid, seed: u64, path_index: u64) -> IncrementBatch {
    IncrementBatch {
        grid: *grid,
        seed,
        path_index,
        values: sample_channel(grid, seed, PRIMARY_CHANNEL, path_index),
        truncated: false,
    }
}

/// Increments of a second motion independent of [`sample_increments`].
pub fn sample_independent(grid: &TimeGrid, seed: u64, path_index: u64) -> IncrementBatch {
    IncrementBatch {
        grid: *grid,
        seed,
        path_index,
        values: sample_channel(grid, seed, INDEPENDENT_CHANNEL, path_index),
        truncated: false,
    }
}

pub fn truncation_level(grid: &TimeGrid) -> Result<TruncationLevel> {
    TruncationLevel::for_step(grid.step())
}

/// Clips every increment to `[-a_h, a_h]`.
///
/// This replaces the first-passage construction of truncated Brownian
/// increments; the two differ only when the path leaves the band and
/// returns within one step.
pub fn truncate_increments(batch: &IncrementBatch) -> Result<IncrementBatch> {
    let level = truncation_level(&batch.grid)?;
    Ok(IncrementBatch {
        values: batch.values.iter().map(|&v| level.clip(v)).collect(),
        truncated: true,
        ..batch.clone()
    })
}

/// `rho * batch + sqrt(1 - rho^2) * independent`, exact for `rho` in {-1, 0, 1}.
pub fn correlate(batch: &IncrementBatch, independent: &IncrementBatch, rho: f64) -> Result<IncrementBatch> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("correlation {rho} outside [-1, 1]")));
    }
    if batch.grid != independent.grid {
        return Err(Error::Config("correlated batches must share a grid".into()));
    }
    let values = if rho == 1.0 {
        batch.values.clone()
    } else if rho == -1.0 {
        batch.values.iter().map(|v| -v).collect()
    } else if rho == 0.0 {
        independent.values.clone()
    } else {
        let s = (1.0 - rho * rho).sqrt();
        batch.values.iter().zip(&independent.values).map(|(a, b)| rho * a + s * b).collect()
    };
    Ok(IncrementBatch { values, truncated: batch.truncated && independent.truncated, ..batch.clone() })
}
