//! Maximum Mean Discrepancy between sample sets and MMD-based ranking of
//! malware families by drift.
//!
//! The estimator is the biased V-statistic with an RBF kernel, floored at
//! zero before the square root, so values are non-negative and comparable
//! across families. Kernel cost is kept quadratic-bounded by subsampling
//! each set to a cap before evaluation.

use crate::dataset::{Dataset, Label, PeriodPartition, TimeSplitSpec};
use crate::nn::Matrix;
use crate::rng::{rng_from, sample_indices};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MmdError {
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("empty sample set")]
    EmptySet,
    #[error("no family has at least {min_count} samples on both sides of any split")]
    NoEligibleFamily { min_count: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Kernel bandwidth: fixed, or the median pairwise distance of the pooled sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    MedianHeuristic,
}

/// Kernel configuration. Only the RBF kernel is supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { bandwidth: Bandwidth::MedianHeuristic }
    }
}

/// Evaluation options: the per-set subsample cap and the seed that drives it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdOptions {
    pub subsample_cap: usize,
    pub seed: u64,
}

impl Default for MmdOptions {
    fn default() -> Self {
        Self { subsample_cap: 1000, seed: 0x6d6d64 }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rbf(sq: f64, sigma: f64) -> f64 {
    (-sq / (2.0 * sigma * sigma)).exp()
}

/// Median pairwise Euclidean distance over a capped, seeded subsample.
///
/// A zero median (all points identical) falls back to bandwidth 1.0.
pub fn median_heuristic(pooled: &Matrix, options: &MmdOptions) -> Result<f64, MmdError> {
    if pooled.rows() < 2 {
        return Err(MmdError::TooFewSamples(pooled.rows()));
    }
    let rows = subsample(pooled, options.subsample_cap, options.seed, 0);
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            dists.push(sq_dist(pooled.row(rows[i]), pooled.row(rows[j])).sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let median = if dists.len() % 2 == 1 {
        dists[dists.len() / 2]
    } else {
        0.5 * (dists[dists.len() / 2 - 1] + dists[dists.len() / 2])
    };
    Ok(if median > 0.0 { median } else { 1.0 })
}

fn subsample(x: &Matrix, cap: usize, seed: u64, stream: u64) -> Vec<usize> {
    if x.rows() <= cap {
        (0..x.rows()).collect()
    } else {
        let mut rng = rng_from(seed, &[stream, x.rows() as u64]);
        let mut picked = sample_indices(&mut rng, x.rows(), cap);
        picked.sort_unstable();
        picked
    }
}

/// Square root of the biased V-statistic MMD estimate between two sample
/// sets (rows are samples), floored at zero before the root.
pub fn mmd_biased(
    x: &Matrix,
    y: &Matrix,
    kernel: &KernelConfig,
    options: &MmdOptions,
) -> Result<f64, MmdError> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(MmdError::EmptySet);
    }
    if x.cols() != y.cols() {
        return Err(MmdError::Invalid(format!(
            "sets have {} and {} columns",
            x.cols(),
            y.cols()
        )));
    }
    // The subsample stream depends only on set size, so identical sets pick
    // identical rows and MMD(X, X) stays exactly zero.
    let xi = subsample(x, options.subsample_cap, options.seed, 1);
    let yi = subsample(y, options.subsample_cap, options.seed, 1);

    let sigma = match kernel.bandwidth {
        Bandwidth::Fixed(s) => {
            if s <= 0.0 {
                return Err(MmdError::Invalid(format!("bandwidth {s} must be positive")));
            }
            s
        }
        Bandwidth::MedianHeuristic => {
            let mut pooled_rows: Vec<Vec<f64>> = Vec::with_capacity(xi.len() + yi.len());
            pooled_rows.extend(xi.iter().map(|&i| x.row(i).to_vec()));
            pooled_rows.extend(yi.iter().map(|&i| y.row(i).to_vec()));
            let pooled = Matrix::from_rows(&pooled_rows).expect("consistent dims");
            median_heuristic(&pooled, options)?
        }
    };

    let mean_kernel = |a: &Matrix, ai: &[usize], b: &Matrix, bi: &[usize]| -> f64 {
        let mut acc = 0.0;
        for &i in ai {
            for &j in bi {
                acc += rbf(sq_dist(a.row(i), b.row(j)), sigma);
            }
        }
        acc / (ai.len() * bi.len()) as f64
    };

    let xx = mean_kernel(x, &xi, x, &xi);
    let yy = mean_kernel(y, &yi, y, &yi);
    let xy = mean_kernel(x, &xi, y, &yi);
    Ok((xx + yy - 2.0 * xy).max(0.0).sqrt())
}

/// Per-family drift summary: MMD per split and the sum across splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDrift {
    pub family: String,
    /// One entry per requested split; `None` when either side of the split
    /// had fewer than the minimum sample count.
    pub per_split: Vec<Option<f64>>,
    pub sum: f64,
}

/// Families ranked by summed MMD across splits, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDriftReport {
    pub splits: Vec<TimeSplitSpec>,
    pub families: Vec<FamilyDrift>,
}

impl FamilyDriftReport {
    /// Ordered conditioning vocabulary: the ranked family names.
    pub fn vocabulary(&self) -> Vec<String> {
        self.families.iter().map(|f| f.family.clone()).collect()
    }

    /// CSV table: family, one MMD column per split, sum, rank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family");
        for spec in &self.splits {
            out.push_str(&format!(",mmd_k{}", spec.k));
        }
        out.push_str(",sum,rank\n");
        for (rank, fam) in self.families.iter().enumerate() {
            out.push_str(&fam.family);
            for cell in &fam.per_split {
                match cell {
                    Some(v) => out.push_str(&format!(",{v}")),
                    None => out.push(','),
                }
            }
            out.push_str(&format!(",{},{}\n", fam.sum, rank + 1));
        }
        out
    }
}

/// Minimum samples per side of a (family, split) cell before its MMD counts.
pub const DEFAULT_MIN_CELL_COUNT: usize = 10;

/// Ranks malware families by summed MMD between each split's training-window
/// and testing-window samples. Cells below `min_count` on either side
/// contribute nothing. Ties in the sum break lexicographically.
pub fn rank_families(
    dataset: &Dataset,
    partition: &PeriodPartition,
    splits: &[TimeSplitSpec],
    top_m: usize,
    min_count: usize,
    kernel: &KernelConfig,
    options: &MmdOptions,
) -> Result<FamilyDriftReport, MmdError> {
    if splits.is_empty() {
        return Err(MmdError::Invalid("need at least one split".into()));
    }
    for spec in splits {
        spec.validate(partition.n_periods())
            .map_err(|e| MmdError::Invalid(e.to_string()))?;
    }

    // family -> per-period malware sample indices
    let mut by_family: BTreeMap<&str, Vec<Vec<usize>>> = BTreeMap::new();
    for p in 0..partition.n_periods() {
        for &idx in partition.period(p) {
            let s = dataset.sample(idx);
            if s.label == Label::Malware {
                if let Some(family) = &s.family {
                    by_family
                        .entry(family.as_str())
                        .or_insert_with(|| vec![Vec::new(); partition.n_periods()])
                        .get_mut(p)
                        .expect("period in range")
                        .push(idx);
                }
            }
        }
    }

    let rows_of = |indices: &[usize]| -> Matrix {
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| dataset.sample(i).features.clone()).collect();
        Matrix::from_rows(&rows).expect("consistent dims")
    };

    let mut families = Vec::new();
    for (family, periods) in &by_family {
        let mut per_split = Vec::with_capacity(splits.len());
        let mut sum = 0.0;
        for spec in splits {
            let train: Vec<usize> =
                spec.train_periods().flat_map(|p| periods[p].iter().copied()).collect();
            let test: Vec<usize> =
                spec.test_periods().flat_map(|p| periods[p].iter().copied()).collect();
            if train.len() < min_count || test.len() < min_count {
                per_split.push(None);
                continue;
            }
            let value = mmd_biased(&rows_of(&train), &rows_of(&test), kernel, options)?;
            sum += value;
            per_split.push(Some(value));
        }
        families.push(FamilyDrift { family: family.to_string(), per_split, sum });
    }

    if families.iter().all(|f| f.per_split.iter().all(Option::is_none)) {
        return Err(MmdError::NoEligibleFamily { min_count });
    }

    families.sort_by(|a, b| {
        b.sum
            .partial_cmp(&a.sum)
            .expect("finite sums")
            .then_with(|| a.family.cmp(&b.family))
    });
    families.truncate(top_m);
    Ok(FamilyDriftReport { splits: splits.to_vec(), families })
}
