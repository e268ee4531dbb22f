//! Timestamped feature-vector datasets: JSON Lines ingestion, time-period
//! partitioning, train/val/test role assignment, normalization, leakage-safe
//! split views, and a synthetic drifting-data generator.

mod normalize;
mod partition;
mod synth;

pub use normalize::Normalizer;
pub use partition::{
    assign_roles, make_split_view, partition_by_time, MethodTag, PeriodPartition, Role,
    RoleAssignment, SplitView, TimeSplitSpec,
};
pub use synth::{synth_generate, SynthConfig, SynthModel, SYNTH_PERIOD_SECS};

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: feature vector has {got} dimensions, expected {expected}")]
    DimensionMismatch { line: usize, got: usize, expected: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Class label carried by each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Malware,
    Benign,
    Unlabeled,
}

/// One observation: a feature vector with a timestamp, label, and an
/// optional malware-family designation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Seconds since the epoch.
    pub timestamp: i64,
    pub label: Label,
    pub family: Option<String>,
    pub features: Vec<f64>,
}

/// An owned collection of samples with a consistent feature dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self, DatasetError> {
        let dim = samples.first().map_or(0, |s| s.features.len());
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(DatasetError::DimensionMismatch {
                    line: i + 1,
                    got: s.features.len(),
                    expected: dim,
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::Invalid(format!("sample {} has non-finite features", s.id)));
            }
        }
        Ok(Self { samples, dim })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, idx: usize) -> &Sample {
        &self.samples[idx]
    }
}

/// Reads a JSON Lines dataset: one object per line with keys `id`,
/// `timestamp`, `label`, `family`, `features`.
///
/// The first malformed line aborts ingestion with its line number; a feature
/// vector whose length disagrees with line one is a dimension error.
pub fn ingest_jsonl(path: &Path) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut samples: Vec<Sample> = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if sample.features.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Malformed {
                line: i + 1,
                message: "non-finite feature value".into(),
            });
        }
        match dim {
            None => dim = Some(sample.features.len()),
            Some(d) if d != sample.features.len() => {
                return Err(DatasetError::DimensionMismatch {
                    line: i + 1,
                    got: sample.features.len(),
                    expected: d,
                })
            }
            Some(_) => {}
        }
        samples.push(sample);
    }
    Dataset::new(samples)
}

/// Writes samples in the same JSON Lines format `ingest_jsonl` reads.
///
/// serde_json emits the shortest decimal that round-trips each `f64`, so
/// write-then-ingest is the identity on finite values.
pub fn write_jsonl(path: &Path, samples: &[Sample]) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = std::io::BufWriter::new(file);
    for sample in samples {
        let line = serde_json::to_string(sample).map_err(|e| DatasetError::Invalid(e.to_string()))?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|source| DatasetError::Io {
                path: path.display().to_string(),
                source,
            })?;
    }
    writer.flush().map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}
