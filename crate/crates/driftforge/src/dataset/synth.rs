//! Synthetic drifting dataset generator.
//!
//! Benign traffic is a stationary Gaussian mixture. Each malware family is a
//! Gaussian whose mean moves between periods through three mechanisms:
//!
//! - inertia: a fixed per-family velocity. Odd-indexed families translate at
//!   `drift_velocity` along a random direction; even-indexed families have
//!   zero velocity and serve as stationary controls.
//! - adoption: with probability `adoption_rate` per period, a family copies
//!   another family's accumulated offset on a random coordinate block.
//! - adversarial adaptation: the coordinates most weighted by a probe linear
//!   classifier fitted on the previous period move toward the benign center
//!   by an `adaptation_strength` fraction of the remaining distance.

use super::{Dataset, DatasetError, Label, Sample};
use crate::rng::{rng_from, standard_normal, unit_vector, ChaCha8Rng};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Seconds per generated period (one week).
pub const SYNTH_PERIOD_SECS: i64 = 7 * 86_400;

const MALWARE_RADIUS: f64 = 4.0;
const BENIGN_COMPONENT_SCALE: f64 = 0.5;
const PROBE_STEPS: usize = 40;

/// Generator configuration. Defaults are sized so a full experiment matrix
/// over the generated data runs in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_families: usize,
    pub n_periods: usize,
    pub dim: usize,
    pub samples_per_period_per_class: usize,
    /// Per-period translation speed of drifting families.
    pub drift_velocity: f64,
    /// Probability per period that a family copies another family's offset.
    pub adoption_rate: f64,
    /// Fraction of the remaining distance to the benign center that probed
    /// coordinates lose per period.
    pub adaptation_strength: f64,
    /// Per-coordinate sample standard deviation.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_families: 8,
            n_periods: 10,
            dim: 100,
            samples_per_period_per_class: 2000,
            drift_velocity: 1.2,
            adoption_rate: 0.1,
            adaptation_strength: 0.12,
            noise_scale: 1.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_families == 0 || self.n_periods == 0 || self.dim == 0 || self.samples_per_period_per_class == 0 {
            return Err(DatasetError::Invalid("synth counts must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.adoption_rate) || !(0.0..=1.0).contains(&self.adaptation_strength) {
            return Err(DatasetError::Invalid("synth probabilities must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// The generator's internal state, exposed so tests can compare sample means
/// against the exact family means and velocities.
#[derive(Debug, Clone)]
pub struct SynthModel {
    config: SynthConfig,
    benign_means: Vec<Vec<f64>>,
    benign_weights: Vec<f64>,
    benign_center: Vec<f64>,
    velocities: Vec<Vec<f64>>,
    /// `family_means[p][f]` is family f's mean during period p.
    family_means: Vec<Vec<Vec<f64>>>,
}

impl SynthModel {
    pub fn velocities(&self) -> &[Vec<f64>] {
        &self.velocities
    }

    pub fn family_mean(&self, period: usize, family: usize) -> &[f64] {
        &self.family_means[period][family]
    }

    pub fn benign_center(&self) -> &[f64] {
        &self.benign_center
    }

    pub fn family_name(family: usize) -> String {
        format!("fam{family:02}")
    }

    /// Runs the full simulation. Returns the model (with the realized
    /// per-period family means) and the generated samples.
    pub fn generate(config: &SynthConfig) -> Result<(Self, Vec<Sample>), DatasetError> {
        config.validate()?;
        let dim = config.dim;
        let nf = config.n_families;
        let mut init_rng = rng_from(config.seed, &[0x7379_6e74, 0]);

        let benign_weights = vec![0.5, 0.3, 0.2];
        let benign_means: Vec<Vec<f64>> = (0..benign_weights.len())
            .map(|_| {
                (0..dim)
                    .map(|_| BENIGN_COMPONENT_SCALE * standard_normal(&mut init_rng))
                    .collect()
            })
            .collect();
        let mut benign_center = vec![0.0; dim];
        for (mean, &w) in benign_means.iter().zip(&benign_weights) {
            for (c, m) in benign_center.iter_mut().zip(mean) {
                *c += w * m;
            }
        }

        let base_means: Vec<Vec<f64>> = (0..nf)
            .map(|_| unit_vector(&mut init_rng, dim).into_iter().map(|v| v * MALWARE_RADIUS).collect())
            .collect();
        let velocities: Vec<Vec<f64>> = (0..nf)
            .map(|f| {
                let dir = unit_vector(&mut init_rng, dim);
                let speed = if f % 2 == 1 { config.drift_velocity } else { 0.0 };
                dir.into_iter().map(|v| v * speed).collect()
            })
            .collect();

        let mut current: Vec<Vec<f64>> = base_means.clone();
        let mut family_means: Vec<Vec<Vec<f64>>> = Vec::with_capacity(config.n_periods);
        let mut samples: Vec<Sample> = Vec::new();
        let mut prev_period: Vec<(Vec<f64>, usize)> = Vec::new();

        for period in 0..config.n_periods {
            if period > 0 {
                // inertia
                for (mean, vel) in current.iter_mut().zip(&velocities) {
                    for (m, v) in mean.iter_mut().zip(vel) {
                        *m += v;
                    }
                }
                // adoption
                let mut adopt_rng = rng_from(config.seed, &[0x61646f70, period as u64]);
                if nf > 1 {
                    for f in 0..nf {
                        if adopt_rng.random::<f64>() < config.adoption_rate {
                            let mut donor = adopt_rng.random_range(0..nf - 1);
                            if donor >= f {
                                donor += 1;
                            }
                            let block_len = (dim / 8).max(1);
                            let start = adopt_rng.random_range(0..dim - block_len + 1);
                            for c in start..start + block_len {
                                let donor_offset = current[donor][c] - base_means[donor][c];
                                current[f][c] = base_means[f][c] + donor_offset;
                            }
                        }
                    }
                }
                // adversarial adaptation against a probe fit on the previous period
                if config.adaptation_strength > 0.0 && !prev_period.is_empty() {
                    let weights = fit_probe(&prev_period, dim);
                    let top = top_coordinates(&weights, (dim / 10).max(1));
                    for mean in current.iter_mut() {
                        for &c in &top {
                            mean[c] += config.adaptation_strength * (benign_center[c] - mean[c]);
                        }
                    }
                }
            }
            family_means.push(current.clone());

            let mut sample_rng = rng_from(config.seed, &[0x73616d70, period as u64]);
            let period_start = period as i64 * SYNTH_PERIOD_SECS;
            prev_period.clear();

            for i in 0..config.samples_per_period_per_class {
                let comp = pick_weighted(&mut sample_rng, &benign_weights);
                let features: Vec<f64> = (0..dim)
                    .map(|c| benign_means[comp][c] + config.noise_scale * standard_normal(&mut sample_rng))
                    .collect();
                prev_period.push((features.clone(), 0));
                samples.push(Sample {
                    id: format!("syn-p{period:02}-b{i:05}"),
                    timestamp: period_start + sample_rng.random_range(0..SYNTH_PERIOD_SECS),
                    label: Label::Benign,
                    family: None,
                    features,
                });
            }
            for i in 0..config.samples_per_period_per_class {
                let family = i % nf;
                let features: Vec<f64> = (0..dim)
                    .map(|c| current[family][c] + config.noise_scale * standard_normal(&mut sample_rng))
                    .collect();
                prev_period.push((features.clone(), 1));
                samples.push(Sample {
                    id: format!("syn-p{period:02}-m{i:05}"),
                    timestamp: period_start + sample_rng.random_range(0..SYNTH_PERIOD_SECS),
                    label: Label::Malware,
                    family: Some(Self::family_name(family)),
                    features,
                });
            }
        }

        Ok((
            Self {
                config: config.clone(),
                benign_means,
                benign_weights,
                benign_center,
                velocities,
                family_means,
            },
            samples,
        ))
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn benign_component(&self, idx: usize) -> (&[f64], f64) {
        (&self.benign_means[idx], self.benign_weights[idx])
    }
}

/// Generates a synthetic drifting dataset.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset, DatasetError> {
    let (_, samples) = SynthModel::generate(config)?;
    Dataset::new(samples)
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let draw: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Plain gradient-descent logistic probe (benign = 0, malware = 1).
fn fit_probe(samples: &[(Vec<f64>, usize)], dim: usize) -> Vec<f64> {
    let n = samples.len();
    let mean_sq: f64 =
        samples.iter().map(|(x, _)| x.iter().map(|v| v * v).sum::<f64>() + 1.0).sum::<f64>() / n as f64;
    let step = 4.0 / mean_sq.max(1e-12);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for _ in 0..PROBE_STEPS {
        let mut grad = vec![0.0; dim];
        let mut grad_b = 0.0;
        for (x, label) in samples {
            let sign = if *label == 1 { 1.0 } else { -1.0 };
            let z: f64 = x.iter().zip(&w).map(|(xi, wi)| xi * wi).sum::<f64>() + b;
            let s = 1.0 / (1.0 + (sign * z).exp());
            let coeff = -sign * s / n as f64;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += coeff * xi;
            }
            grad_b += coeff;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= step * g;
        }
        b -= step * grad_b;
    }
    w
}

fn top_coordinates(weights: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .abs()
            .partial_cmp(&weights[a].abs())
            .expect("finite")
            .then(a.cmp(&b))
    });
    order.truncate(count);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SynthConfig {
        SynthConfig {
            n_families: 4,
            n_periods: 4,
            dim: 20,
            samples_per_period_per_class: 300,
            drift_velocity: 1.0,
            adoption_rate: 0.0,
            adaptation_strength: 0.0,
            noise_scale: 1.0,
            seed: 13,
        }
    }

    #[test]
    fn same_seed_gives_identical_datasets() {
        let cfg = small_config();
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a.samples(), b.samples());
        let c = synth_generate(&SynthConfig { seed: 14, ..cfg }).unwrap();
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn drifting_family_mean_moves_by_its_velocity() {
        let cfg = SynthConfig {
            samples_per_period_per_class: 1500,
            drift_velocity: 2.0,
            ..small_config()
        };
        let (model, samples) = SynthModel::generate(&cfg).unwrap();
        // family 1 is odd-indexed, so it drifts at the configured speed
        let fam = SynthModel::family_name(1);
        let collect_mean = |period: usize| -> Vec<f64> {
            let start = period as i64 * SYNTH_PERIOD_SECS;
            let end = start + SYNTH_PERIOD_SECS;
            let rows: Vec<&Sample> = samples
                .iter()
                .filter(|s| s.family.as_deref() == Some(&fam) && s.timestamp >= start && s.timestamp < end)
                .collect();
            let mut mean = vec![0.0; cfg.dim];
            for s in &rows {
                for (m, v) in mean.iter_mut().zip(&s.features) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
            mean
        };
        // sample-mean oracle: consecutive-period means differ by the velocity
        let (m0, m1) = (collect_mean(0), collect_mean(1));
        let velocity = &model.velocities()[1];
        let speed: f64 = velocity.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((speed - cfg.drift_velocity).abs() < 1e-12);
        let shift_err: f64 = m1
            .iter()
            .zip(&m0)
            .zip(velocity)
            .map(|((a, b), v)| (a - b - v).powi(2))
            .sum::<f64>()
            .sqrt();
        // sampling error of a 20-dim mean difference with 375 samples per
        // family per period and sigma = 1 concentrates near 0.33
        assert!(shift_err < 0.7, "shift error {shift_err}");
        let projected: f64 = m1
            .iter()
            .zip(&m0)
            .zip(velocity)
            .map(|((a, b), v)| (a - b) * v)
            .sum::<f64>()
            / speed;
        assert!((projected - speed).abs() < 0.5, "projected shift {projected} vs speed {speed}");
    }

    #[test]
    fn stationary_family_stays_put() {
        let cfg = small_config();
        let (model, _) = SynthModel::generate(&cfg).unwrap();
        for period in 1..cfg.n_periods {
            assert_eq!(model.family_mean(period, 0), model.family_mean(0, 0));
            assert_eq!(model.family_mean(period, 2), model.family_mean(0, 2));
        }
        assert!(model.velocities()[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fully_stationary_config_freezes_every_family() {
        let cfg = SynthConfig {
            drift_velocity: 0.0,
            adoption_rate: 0.0,
            adaptation_strength: 0.0,
            ..small_config()
        };
        let (model, _) = SynthModel::generate(&cfg).unwrap();
        for period in 1..cfg.n_periods {
            for f in 0..cfg.n_families {
                assert_eq!(model.family_mean(period, f), model.family_mean(0, f));
            }
        }
    }

    #[test]
    fn adaptation_pulls_families_toward_the_benign_center() {
        let cfg = SynthConfig {
            adaptation_strength: 0.5,
            drift_velocity: 0.0,
            adoption_rate: 0.0,
            ..small_config()
        };
        let (model, _) = SynthModel::generate(&cfg).unwrap();
        let dist = |mean: &[f64]| -> f64 {
            mean.iter()
                .zip(model.benign_center())
                .map(|(m, b)| (m - b) * (m - b))
                .sum::<f64>()
                .sqrt()
        };
        let before = dist(model.family_mean(0, 0));
        let after = dist(model.family_mean(cfg.n_periods - 1, 0));
        assert!(after < before, "before {before}, after {after}");
    }

    #[test]
    fn labels_families_and_periods_are_recorded() {
        let cfg = small_config();
        let ds = synth_generate(&cfg).unwrap();
        assert_eq!(ds.len(), cfg.n_periods * cfg.samples_per_period_per_class * 2);
        for s in ds.samples() {
            match s.label {
                Label::Malware => assert!(s.family.is_some()),
                Label::Benign => assert!(s.family.is_none()),
                Label::Unlabeled => panic!("generator never emits unlabeled samples"),
            }
        }
    }
}
