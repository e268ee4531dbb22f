//! Desk-scale toolkit for studying malware concept drift.
//!
//! The crate trains binary malware classifiers under a time-split protocol
//! (train on periods before a split point, test on the periods after it) and
//! compares four ways of preparing training data:
//!
//! - `normal` — retrain on the most recent training window only,
//! - `upper_bound` — additionally train on held-out samples from the testing
//!   window (an unrealistic oracle that bounds what any predictor can gain),
//! - `adv_fgsm` / `adv_pgd` — adversarial training with feature-space attacks,
//! - `ccygan` — augment training data with samples produced by a bank of
//!   family-conditioned CycleGANs fitted to historical drift.
//!
//! Everything runs on plain `f64` with seeded RNGs; identical inputs and seeds
//! reproduce identical outputs byte for byte.

pub mod attacks;
pub mod config;
pub mod dataset;
pub mod gan;
pub mod harness;
pub mod mmd;
pub mod nn;
pub mod report;
pub mod rng;

pub use nn::Matrix;
