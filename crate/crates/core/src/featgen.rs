//! Patch-node feature generation from per-dimension Gaussian fits.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{GuapError, Result};

/// Per-dimension Gaussian statistics of a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    /// Population variance.
    pub variance: Vec<f64>,
    /// Every observed value is 0 or 1.
    pub binary: bool,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_feature_stats(x: ArrayView2<f64>) -> Result<FeatureStats> {
    let n = x.nrows();
    if n == 0 {
        return Err(GuapError::EmptyGraph);
    }
    let mut mean = Vec::with_capacity(x.ncols());
    let mut variance = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let mu = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        mean.push(mu);
        variance.push(var);
    }
    let binary = x.iter().all(|&v| v == 0.0 || v == 1.0);
    Ok(FeatureStats {
        mean,
        variance,
        binary,
    })
}

fn cell_rng(seed: u64, dim: usize, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(dim as u64);
    rng.set_word_pos((row as u128) << 16);
    rng
}

/// Draws `m` feature rows. Cell `(row, dim)` depends only on `(seed, dim, row)`.
pub fn sample_patch_features(stats: &FeatureStats, m: usize, seed: u64) -> Array2<f64> {
    Array2::from_shape_fn((m, stats.dim()), |(row, dim)| {
        let mu = stats.mean[dim];
        let var = stats.variance[dim];
        let value = if var > 0.0 {
            let z: f64 = cell_rng(seed, dim, row).sample(StandardNormal);
            mu + var.sqrt() * z
        } else {
            mu
        };
        if stats.binary {
            if value >= 0.5 {
                1.0
            } else {
                0.0
            }
        } else {
            value
        }
    })
}

/// Probability that a binarized draw from `N(p, p(1-p))` is 1.
pub fn binarized_one_probability(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GuapError::Domain(p));
    }
    Ok(0.5 * (1.0 - erf((0.5 - p) / (2.0 * p * (1.0 - p)).sqrt())))
}
