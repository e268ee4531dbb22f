//! Feature-space adversarial sample generation against a trained classifier.
//!
//! FGSM takes one signed-gradient step of size epsilon; PGD takes one raw
//! gradient step scaled by epsilon. Both project the result back into a
//! per-feature box fitted to the training pool, and both have k-step variants
//! that recompute the gradient at every iterate. Without the projection, the
//! step can leave the region of admissible feature vectors entirely (e.g.
//! histogram features going negative), which makes the samples useless as
//! drift predictors.

use crate::nn::{backward, cross_entropy, Matrix, MlpModel, Mode, NnError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("model must be in eval mode for attacks")]
    ModelNotEval,
    #[error("non-finite gradient during attack")]
    NonFiniteGradient,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Per-feature admissible bounds in normalized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ProjectionBox {
    /// Fits the box as the per-feature min/max over a normalized training pool.
    pub fn fit(train: &Matrix) -> Result<Self, AttackError> {
        if train.rows() == 0 {
            return Err(AttackError::Dimension("empty training pool".into()));
        }
        let mut lo = train.row(0).to_vec();
        let mut hi = train.row(0).to_vec();
        for r in 1..train.rows() {
            for (c, &v) in train.row(r).iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        Ok(Self { lo, hi })
    }

    /// A box so wide it never binds (for tests and unconstrained studies).
    pub fn unbounded(dim: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; dim], hi: vec![f64::INFINITY; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Clamps every coordinate of every row into the box.
    pub fn project(&self, x: &mut Matrix) {
        debug_assert_eq!(x.cols(), self.dim());
        for r in 0..x.rows() {
            for (v, (lo, hi)) in x.row_mut(r).iter_mut().zip(self.lo.iter().zip(&self.hi)) {
                *v = v.clamp(*lo, *hi);
            }
        }
    }

    pub fn contains(&self, x: &Matrix) -> bool {
        (0..x.rows()).all(|r| {
            x.row(r)
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
        })
    }
}

/// Attack family: signed step or raw scaled step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    Fgsm,
    Pgd,
}

/// Attack settings: method, step scale, and number of repeated steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub epsilon: f64,
    pub steps: usize,
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        Self { method: AttackMethod::Fgsm, epsilon, steps: 1 }
    }

    pub fn pgd(epsilon: f64) -> Self {
        Self { method: AttackMethod::Pgd, epsilon, steps: 1 }
    }
}

fn input_gradient(model: &MlpModel, x: &Matrix, labels: &[usize]) -> Result<Matrix, AttackError> {
    if model.mode() != Mode::Eval {
        return Err(AttackError::ModelNotEval);
    }
    let (logits, trace) = model.forward_eval(x)?;
    let (_, grad_logits) = cross_entropy(&logits, labels)?;
    let grads = backward(model, &trace, &grad_logits)?;
    if !grads.input_grad.is_finite() {
        return Err(AttackError::NonFiniteGradient);
    }
    Ok(grads.input_grad)
}

/// sign with sign(0) = 0, keeping zero-gradient coordinates fixed.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One FGSM step: `project(x + epsilon * sign(grad_x loss))`.
pub fn fgsm(
    model: &MlpModel,
    x: &Matrix,
    labels: &[usize],
    epsilon: f64,
    bounds: &ProjectionBox,
) -> Result<Matrix, AttackError> {
    let grad = input_gradient(model, x, labels)?;
    let mut adv = x.clone();
    for (v, g) in adv.data_mut().iter_mut().zip(grad.data()) {
        *v += epsilon * sign(*g);
    }
    bounds.project(&mut adv);
    Ok(adv)
}

/// One PGD step as defined here: `project(x + epsilon * grad_x loss)`.
///
/// The raw gradient is not sign-compressed, so there is no epsilon-ball
/// guarantee; only the projection constrains the output.
pub fn pgd_step(
    model: &MlpModel,
    x: &Matrix,
    labels: &[usize],
    epsilon: f64,
    bounds: &ProjectionBox,
) -> Result<Matrix, AttackError> {
    let grad = input_gradient(model, x, labels)?;
    let mut adv = x.clone();
    for (v, g) in adv.data_mut().iter_mut().zip(grad.data()) {
        *v += epsilon * g;
    }
    bounds.project(&mut adv);
    Ok(adv)
}

/// Repeats the configured attack step, recomputing the gradient each time.
/// `steps == 1` reduces to the single-step attack.
pub fn multi_step(
    config: &AttackConfig,
    model: &MlpModel,
    x: &Matrix,
    labels: &[usize],
    bounds: &ProjectionBox,
) -> Result<Matrix, AttackError> {
    if config.steps == 0 {
        return Err(AttackError::Dimension("attack needs at least one step".into()));
    }
    let mut adv = x.clone();
    for _ in 0..config.steps {
        adv = match config.method {
            AttackMethod::Fgsm => fgsm(model, &adv, labels, config.epsilon, bounds)?,
            AttackMethod::Pgd => pgd_step(model, &adv, labels, config.epsilon, bounds)?,
        };
    }
    Ok(adv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    /// Single-layer logistic model with a chosen weight vector: logit_1 - logit_0
    /// equals w . x, so the loss gradient has the closed form
    /// grad_x = (p_1 - 1) * w for a malware-labeled sample.
    fn logistic_model(w: &[f64]) -> MlpModel {
        let mut model = MlpModel::new(vec![LayerSpec::dense(w.len(), 2)], 0).unwrap();
        let rows: Vec<Vec<f64>> = w.iter().map(|&wi| vec![0.0, wi]).collect();
        model.set_dense(0, Matrix::from_rows(&rows).unwrap(), vec![0.0, 0.0]).unwrap();
        model.set_mode(Mode::Eval);
        model
    }

    fn loss_of(model: &MlpModel, x: &Matrix, labels: &[usize]) -> f64 {
        let (logits, _) = model.forward_eval(x).unwrap();
        cross_entropy(&logits, labels).unwrap().0
    }

    #[test]
    fn box_fit_matches_min_max_scan() {
        let mut rng = crate::rng::rng_from(4, &[]);
        let mut pool = Matrix::zeros(40, 6);
        for v in pool.data_mut() {
            *v = crate::rng::standard_normal(&mut rng);
        }
        let bounds = ProjectionBox::fit(&pool).unwrap();
        for c in 0..6 {
            let col: Vec<f64> = (0..40).map(|r| pool.get(r, c)).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(bounds.lo[c], lo);
            assert_eq!(bounds.hi[c], hi);
        }
        assert!(bounds.contains(&pool));
    }

    #[test]
    fn single_sample_box_degenerates_to_that_sample() {
        let pool = Matrix::from_rows(&[vec![0.5, -1.5, 2.0]]).unwrap();
        let bounds = ProjectionBox::fit(&pool).unwrap();
        assert_eq!(bounds.lo, vec![0.5, -1.5, 2.0]);
        assert_eq!(bounds.hi, bounds.lo);
    }

    #[test]
    fn projection_is_identity_inside_and_idempotent() {
        let bounds = ProjectionBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
        let inside = Matrix::from_rows(&[vec![0.25, 0.75]]).unwrap();
        let mut projected = inside.clone();
        bounds.project(&mut projected);
        assert_eq!(projected.data(), inside.data());

        let mut outside = Matrix::from_rows(&[vec![2.0, 2.0]]).unwrap();
        bounds.project(&mut outside);
        assert_eq!(outside.data(), &[1.0, 1.0]);
        let once = outside.clone();
        bounds.project(&mut outside);
        assert_eq!(outside.data(), once.data());
    }

    #[test]
    fn zero_epsilon_fgsm_is_a_fixed_point() {
        let model = logistic_model(&[1.0, -2.0]);
        let x = Matrix::from_rows(&[vec![0.3, 0.4]]).unwrap();
        let adv = fgsm(&model, &x, &[1], 0.0, &ProjectionBox::unbounded(2)).unwrap();
        assert_eq!(adv.data(), x.data());
    }

    #[test]
    fn fgsm_follows_the_closed_form_logistic_gradient() {
        // Two-feature case worked out by hand: w = (2, -1), x = (0, 0),
        // label = malware (class 1). Logits are (0, w.x) = (0, 0), so
        // p_1 = 1/2 and grad_x loss = (p_1 - 1) * w = (-1, 0.5).
        // FGSM with label = malware therefore steps by eps * (-1, +1).
        let model = logistic_model(&[2.0, -1.0]);
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let eps = 0.25;
        let adv = fgsm(&model, &x, &[1], eps, &ProjectionBox::unbounded(2)).unwrap();
        assert_eq!(adv.data(), &[-eps, eps]);
    }

    #[test]
    fn configured_paper_magnitudes_are_accepted() {
        let model = logistic_model(&[1.0, 1.0]);
        let x = Matrix::from_rows(&[vec![0.1, -0.1]]).unwrap();
        let bounds = ProjectionBox::unbounded(2);
        for eps in [0.1, 1.0] {
            let adv = fgsm(&model, &x, &[1], eps, &bounds).unwrap();
            for (a, b) in adv.data().iter().zip(x.data()) {
                assert!((a - b).abs() <= eps + 1e-15);
            }
        }
    }

    #[test]
    fn pgd_zero_gradient_is_a_fixed_point() {
        // w = 0 gives identical logits and zero input gradient.
        let model = logistic_model(&[0.0, 0.0]);
        let x = Matrix::from_rows(&[vec![0.7, -0.2]]).unwrap();
        let adv = pgd_step(&model, &x, &[1], 1.0, &ProjectionBox::unbounded(2)).unwrap();
        assert_eq!(adv.data(), x.data());
    }

    #[test]
    fn pgd_matches_the_hand_derived_gradient_step() {
        let w = [2.0, -1.0];
        let model = logistic_model(&w);
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let eps = 0.5;
        let adv = pgd_step(&model, &x, &[1], eps, &ProjectionBox::unbounded(2)).unwrap();
        // grad = (p1 - 1) * w with p1 = 0.5
        let expect = [eps * -0.5 * w[0], eps * -0.5 * w[1]];
        assert!((adv.get(0, 0) - expect[0]).abs() < 1e-15);
        assert!((adv.get(0, 1) - expect[1]).abs() < 1e-15);
    }

    #[test]
    fn k_equal_one_matches_the_single_step_attacks() {
        let model = logistic_model(&[1.5, 0.5]);
        let x = Matrix::from_rows(&[vec![0.2, 0.1]]).unwrap();
        let bounds = ProjectionBox { lo: vec![-5.0, -5.0], hi: vec![5.0, 5.0] };
        let one = multi_step(&AttackConfig::fgsm(0.3), &model, &x, &[1], &bounds).unwrap();
        assert_eq!(one.data(), fgsm(&model, &x, &[1], 0.3, &bounds).unwrap().data());
        let one_pgd = multi_step(&AttackConfig::pgd(0.3), &model, &x, &[1], &bounds).unwrap();
        assert_eq!(one_pgd.data(), pgd_step(&model, &x, &[1], 0.3, &bounds).unwrap().data());
    }

    #[test]
    fn constant_gradient_accumulates_k_signed_steps() {
        // With a large margin the gradient signs stay constant, so three
        // FGSM steps move 3 * eps per coordinate. Generous box.
        let model = logistic_model(&[3.0, -3.0]);
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let bounds = ProjectionBox { lo: vec![-10.0, -10.0], hi: vec![10.0, 10.0] };
        let eps = 0.2;
        let adv = multi_step(
            &AttackConfig { method: AttackMethod::Fgsm, epsilon: eps, steps: 3 },
            &model,
            &x,
            &[1],
            &bounds,
        )
        .unwrap();
        assert!((adv.get(0, 0) - (-3.0 * eps)).abs() < 1e-12);
        assert!((adv.get(0, 1) - (3.0 * eps)).abs() < 1e-12);
    }

    #[test]
    fn iterates_stay_inside_the_box() {
        let model = logistic_model(&[5.0, 5.0]);
        let x = Matrix::from_rows(&[vec![0.05, -0.05]]).unwrap();
        let bounds = ProjectionBox { lo: vec![-0.1, -0.1], hi: vec![0.1, 0.1] };
        for steps in [1, 2, 5] {
            let adv = multi_step(
                &AttackConfig { method: AttackMethod::Fgsm, epsilon: 1.0, steps },
                &model,
                &x,
                &[1],
                &bounds,
            )
            .unwrap();
            assert!(bounds.contains(&adv));
        }
    }

    #[test]
    fn fgsm_strictly_increases_loss_on_linear_models() {
        // Cross-entropy of logits linear in x is convex in x, so
        // loss(x + eps * sign(g)) >= loss(x) + eps * |g|_1 > loss(x).
        let mut rng = crate::rng::rng_from(99, &[]);
        for _ in 0..25 {
            let w: Vec<f64> = (0..4).map(|_| crate::rng::standard_normal(&mut rng)).collect();
            let model = logistic_model(&w);
            let x =
                Matrix::from_rows(&[(0..4).map(|_| crate::rng::standard_normal(&mut rng)).collect()])
                    .unwrap();
            let before = loss_of(&model, &x, &[1]);
            let adv = fgsm(&model, &x, &[1], 0.5, &ProjectionBox::unbounded(4)).unwrap();
            let after = loss_of(&model, &adv, &[1]);
            assert!(after > before, "loss did not increase: {before} -> {after}");
        }
    }

    #[test]
    fn attacks_are_deterministic() {
        let model = logistic_model(&[1.0, 2.0, -0.5]);
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-0.1, 0.0, 0.4]]).unwrap();
        let bounds = ProjectionBox { lo: vec![-1.0; 3], hi: vec![1.0; 3] };
        let cfg = AttackConfig { method: AttackMethod::Pgd, epsilon: 0.7, steps: 4 };
        let a = multi_step(&cfg, &model, &x, &[1, 1], &bounds).unwrap();
        let b = multi_step(&cfg, &model, &x, &[1, 1], &bounds).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
