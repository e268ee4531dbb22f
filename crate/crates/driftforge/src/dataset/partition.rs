//! Time-period partitioning, per-period role assignment, and leakage-safe
//! split views.

use super::{Dataset, DatasetError, Label};
use crate::rng::rng_from;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Within-period role of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

/// Disjoint, time-ordered grouping of sample indices into periods.
///
/// Period `p` holds samples with `floor((timestamp - origin) / period_length)
/// == first_bin + p`. Interior empty periods are kept so period indices stay
/// aligned with calendar time; leading and trailing empties are dropped.
#[derive(Debug, Clone)]
pub struct PeriodPartition {
    pub period_length: i64,
    pub origin: i64,
    periods: Vec<Vec<usize>>,
    first_bin: i64,
}

impl PeriodPartition {
    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn period(&self, idx: usize) -> &[usize] {
        &self.periods[idx]
    }

    /// Start timestamp of period `idx`.
    pub fn period_start(&self, idx: usize) -> i64 {
        self.origin + (self.first_bin + idx as i64) * self.period_length
    }

    /// Period index of a sample, when it falls inside the partition range.
    pub fn period_of(&self, timestamp: i64) -> Option<usize> {
        let bin = (timestamp - self.origin).div_euclid(self.period_length) - self.first_bin;
        (0..self.periods.len() as i64).contains(&bin).then_some(bin as usize)
    }
}

/// Bins samples into fixed-length periods.
///
/// `origin` defaults to the earliest timestamp truncated down to a period
/// boundary (multiples of `period_length` from epoch zero).
pub fn partition_by_time(
    dataset: &Dataset,
    period_length: i64,
    origin: Option<i64>,
) -> Result<PeriodPartition, DatasetError> {
    if dataset.is_empty() {
        return Err(DatasetError::Invalid("cannot partition an empty dataset".into()));
    }
    if period_length <= 0 {
        return Err(DatasetError::Invalid("period length must be positive".into()));
    }
    let min_ts = dataset.samples().iter().map(|s| s.timestamp).min().expect("non-empty");
    let origin = origin.unwrap_or_else(|| min_ts.div_euclid(period_length) * period_length);

    let bins: Vec<i64> = dataset
        .samples()
        .iter()
        .map(|s| (s.timestamp - origin).div_euclid(period_length))
        .collect();
    let first_bin = *bins.iter().min().expect("non-empty");
    let last_bin = *bins.iter().max().expect("non-empty");
    let mut periods = vec![Vec::new(); (last_bin - first_bin + 1) as usize];
    for (idx, bin) in bins.iter().enumerate() {
        periods[(bin - first_bin) as usize].push(idx);
    }
    Ok(PeriodPartition { period_length, origin, periods, first_bin })
}

/// Per-sample roles, aligned with dataset indices.
#[derive(Debug, Clone)]
pub struct RoleAssignment {
    roles: Vec<Role>,
}

impl RoleAssignment {
    pub fn role(&self, sample_idx: usize) -> Role {
        self.roles[sample_idx]
    }
}

/// Splits every period into train/val/test by the given ratios.
///
/// Quotas use largest-remainder rounding so per-period counts stay within one
/// sample of the exact ratios; the shuffle is seeded per period, so the
/// assignment of one period never depends on any other.
pub fn assign_roles(
    dataset: &Dataset,
    partition: &PeriodPartition,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<RoleAssignment, DatasetError> {
    let (tr, va, te) = ratios;
    if (tr + va + te - 1.0).abs() > 1e-9 || tr < 0.0 || va < 0.0 || te < 0.0 {
        return Err(DatasetError::Invalid(format!("role ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut roles = vec![Role::Train; dataset.len()];
    for (period_idx, members) in partition.periods.iter().enumerate() {
        let n = members.len();
        if n == 0 {
            continue;
        }
        let quotas = largest_remainder(n, &[tr, va, te]);
        let mut shuffled = members.clone();
        let mut rng = rng_from(seed, &[0x726f_6c65, period_idx as u64]);
        for i in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        for (pos, &sample_idx) in shuffled.iter().enumerate() {
            roles[sample_idx] = if pos < quotas[0] {
                Role::Train
            } else if pos < quotas[0] + quotas[1] {
                Role::Val
            } else {
                Role::Test
            };
        }
    }
    Ok(RoleAssignment { roles })
}

/// Integer quotas summing to `n`, each within one of `ratio * n`.
/// Remainders go to the largest fractional parts, earlier buckets first.
fn largest_remainder(n: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).expect("finite").then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        quotas[order[i % ratios.len()]] += 1;
    }
    quotas
}

/// A time split: test on periods `k ..= k+w2`, train on the `w1` periods
/// before `k`. Period indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSplitSpec {
    pub k: usize,
    pub w1: usize,
    pub w2: usize,
}

impl TimeSplitSpec {
    pub fn validate(&self, n_periods: usize) -> Result<(), DatasetError> {
        if self.w1 == 0 {
            return Err(DatasetError::Invalid("training window w1 must be >= 1".into()));
        }
        if self.w1 > self.k {
            return Err(DatasetError::Invalid(format!(
                "split k={} needs {} training periods before it",
                self.k, self.w1
            )));
        }
        if self.k + self.w2 >= n_periods {
            return Err(DatasetError::Invalid(format!(
                "split k={} w2={} exceeds the {} available periods",
                self.k, self.w2, n_periods
            )));
        }
        Ok(())
    }

    pub fn train_periods(&self) -> std::ops::Range<usize> {
        self.k - self.w1..self.k
    }

    pub fn test_periods(&self) -> std::ops::RangeInclusive<usize> {
        self.k..=self.k + self.w2
    }
}

/// Which training regime a view feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    Normal,
    UpperBound,
}

/// Index pools for one time split.
///
/// Unlabeled samples never enter any pool. The test pool holds only
/// test-role samples of the testing periods, for both tags, so normal and
/// upper-bound runs are scored on identical test data.
#[derive(Debug, Clone)]
pub struct SplitView {
    pub spec: TimeSplitSpec,
    pub method_tag: MethodTag,
    /// Train-role samples of the training periods; for `UpperBound`, also
    /// the train-role samples of the testing periods.
    pub train_pool: Vec<usize>,
    /// Val-role samples of the training periods.
    pub val_pool: Vec<usize>,
    /// Test-role samples of the testing periods.
    pub test_pool: Vec<usize>,
}

impl SplitView {
    /// Train-pool entries drawn from the testing window (upper-bound only).
    pub fn future_train_members(&self, partition: &PeriodPartition, dataset: &Dataset) -> Vec<usize> {
        self.train_pool
            .iter()
            .copied()
            .filter(|&idx| {
                partition
                    .period_of(dataset.sample(idx).timestamp)
                    .is_some_and(|p| p >= self.spec.k)
            })
            .collect()
    }
}

/// Builds the pools for a split.
pub fn make_split_view(
    dataset: &Dataset,
    partition: &PeriodPartition,
    roles: &RoleAssignment,
    spec: TimeSplitSpec,
    method_tag: MethodTag,
) -> Result<SplitView, DatasetError> {
    spec.validate(partition.n_periods())?;
    let labeled = |idx: &usize| dataset.sample(*idx).label != Label::Unlabeled;

    let mut train_pool = Vec::new();
    let mut val_pool = Vec::new();
    for p in spec.train_periods() {
        for &idx in partition.period(p) {
            if !labeled(&idx) {
                continue;
            }
            match roles.role(idx) {
                Role::Train => train_pool.push(idx),
                Role::Val => val_pool.push(idx),
                Role::Test => {}
            }
        }
    }

    let mut test_pool = Vec::new();
    for p in spec.test_periods() {
        for &idx in partition.period(p) {
            if !labeled(&idx) {
                continue;
            }
            match roles.role(idx) {
                Role::Test => test_pool.push(idx),
                Role::Train if method_tag == MethodTag::UpperBound => train_pool.push(idx),
                _ => {}
            }
        }
    }

    Ok(SplitView { spec, method_tag, train_pool, val_pool, test_pool })
}
