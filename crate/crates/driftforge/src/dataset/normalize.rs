//! Percentile clamping followed by standardization.
//!
//! Fitted on a split's training pool only: clamp each feature into its
//! [q01, q99] range, then subtract the mean and divide by the standard
//! deviation of the clamped training values.

use super::{Dataset, DatasetError};
use crate::nn::Matrix;
use serde::{Deserialize, Serialize};

const STD_FLOOR: f64 = 1e-12;

/// Per-feature clamping bounds and standardization constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub q01: Vec<f64>,
    pub q99: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Nearest-rank quantile on a sorted slice: element at `ceil(p * n) - 1`,
/// clamped into range.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let idx = ((p * n as f64).ceil() as usize).max(1).min(n) - 1;
    sorted[idx]
}

impl Normalizer {
    /// Fits bounds and moments on the given training-pool rows.
    pub fn fit(dataset: &Dataset, pool: &[usize]) -> Result<Self, DatasetError> {
        if pool.is_empty() {
            return Err(DatasetError::Invalid("cannot fit a normalizer on an empty pool".into()));
        }
        let dim = dataset.dim();
        let n = pool.len();
        let mut q01 = vec![0.0; dim];
        let mut q99 = vec![0.0; dim];
        let mut mean = vec![0.0; dim];
        let mut std = vec![0.0; dim];
        let mut column = vec![0.0; n];
        for c in 0..dim {
            for (slot, &idx) in column.iter_mut().zip(pool) {
                *slot = dataset.sample(idx).features[c];
            }
            let mut sorted = column.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
            let lo = nearest_rank(&sorted, 0.01);
            let hi = nearest_rank(&sorted, 0.99);
            q01[c] = lo;
            q99[c] = hi;
            let clamped: Vec<f64> = column.iter().map(|v| v.clamp(lo, hi)).collect();
            let m = clamped.iter().sum::<f64>() / n as f64;
            let var = clamped.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean[c] = m;
            std[c] = var.sqrt();
        }
        Ok(Self { q01, q99, mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Normalizes one raw feature vector in place.
    pub fn apply_vec(&self, features: &mut [f64]) {
        for (c, v) in features.iter_mut().enumerate() {
            let clamped = v.clamp(self.q01[c], self.q99[c]);
            *v = if self.std[c] < STD_FLOOR { 0.0 } else { (clamped - self.mean[c]) / self.std[c] };
        }
    }

    /// Normalized matrix of the given dataset rows.
    pub fn apply_pool(&self, dataset: &Dataset, pool: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(pool.len(), self.dim());
        for (r, &idx) in pool.iter().enumerate() {
            let row = out.row_mut(r);
            row.copy_from_slice(&dataset.sample(idx).features);
            self.apply_vec(row);
        }
        out
    }

    /// Maps a normalized value back to raw feature space (no clamping).
    pub fn invert_vec(&self, features: &mut [f64]) {
        for (c, v) in features.iter_mut().enumerate() {
            *v = if self.std[c] < STD_FLOOR { self.mean[c] } else { *v * self.std[c] + self.mean[c] };
        }
    }
}
