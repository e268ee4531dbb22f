//! Central finite-difference gradient checking.
//!
//! The checker never calls [`backward`](super::backward) to obtain its
//! reference values: every expected gradient is a two-sided difference of the
//! forward loss. Each evaluation clones the model, so train-mode dropout
//! replays the same mask stream and the difference quotient is well defined.

use super::{backward, cross_entropy, Matrix, MlpModel, NnError};

/// Outcome of one gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    /// Largest relative error over all checked coordinates.
    pub max_rel_error: f64,
    /// Coordinates compared against the finite-difference oracle.
    pub checked: usize,
    /// Coordinates skipped because the analytic gradient was below threshold.
    pub skipped: usize,
}

fn loss_with(model: &MlpModel, batch: &Matrix, labels: &[usize]) -> Result<f64, NnError> {
    let mut m = model.clone();
    let (logits, _) = m.forward(batch)?;
    Ok(cross_entropy(&logits, labels)?.0)
}

fn loss_with_param_delta(
    model: &MlpModel,
    block: usize,
    idx: usize,
    delta: f64,
    batch: &Matrix,
    labels: &[usize],
) -> Result<f64, NnError> {
    let mut m = model.clone();
    m.param_blocks_mut()[block][idx] += delta;
    let (logits, _) = m.forward(batch)?;
    Ok(cross_entropy(&logits, labels)?.0)
}

/// Compares every parameter gradient and every input-coordinate gradient
/// against central finite differences of the cross-entropy loss.
///
/// Coordinates whose analytic gradient magnitude is at or below
/// `analytic_threshold` are skipped (the relative error is ill-conditioned
/// there). Returns the worst relative error observed.
pub fn check_gradients(
    model: &MlpModel,
    batch: &Matrix,
    labels: &[usize],
    step: f64,
    analytic_threshold: f64,
) -> Result<GradCheckReport, NnError> {
    // Analytic gradients from one clone; finite differences replay the same
    // dropout masks because every clone restarts the same RNG stream.
    let mut probe = model.clone();
    let (logits, trace) = probe.forward(batch)?;
    let (_, grad_logits) = cross_entropy(&logits, labels)?;
    let grads = backward(&probe, &trace, &grad_logits)?;

    let mut max_rel: f64 = 0.0;
    let mut checked = 0usize;
    let mut skipped = 0usize;

    let analytic_blocks: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();
    for (block, analytic) in analytic_blocks.iter().enumerate() {
        for (idx, &a) in analytic.iter().enumerate() {
            if a.abs() <= analytic_threshold {
                skipped += 1;
                continue;
            }
            let plus = loss_with_param_delta(model, block, idx, step, batch, labels)?;
            let minus = loss_with_param_delta(model, block, idx, -step, batch, labels)?;
            let fd = (plus - minus) / (2.0 * step);
            max_rel = max_rel.max((fd - a).abs() / a.abs());
            checked += 1;
        }
    }

    for r in 0..batch.rows() {
        for c in 0..batch.cols() {
            let a = grads.input_grad.get(r, c);
            if a.abs() <= analytic_threshold {
                skipped += 1;
                continue;
            }
            let mut plus = batch.clone();
            plus.set(r, c, plus.get(r, c) + step);
            let mut minus = batch.clone();
            minus.set(r, c, minus.get(r, c) - step);
            let lp = loss_with(model, &plus, labels)?;
            let lm = loss_with(model, &minus, labels)?;
            let fd = (lp - lm) / (2.0 * step);
            max_rel = max_rel.max((fd - a).abs() / a.abs());
            checked += 1;
        }
    }

    Ok(GradCheckReport { max_rel_error: max_rel, checked, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Mode};
    use crate::rng::{rng_from, standard_normal};

    fn random_batch(rows: usize, cols: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = rng_from(seed, &[1]);
        let mut batch = Matrix::zeros(rows, cols);
        for v in batch.data_mut() {
            *v = standard_normal(&mut rng);
        }
        let labels = (0..rows).map(|r| r % 2).collect();
        (batch, labels)
    }

    #[test]
    fn three_layer_net_parameter_gradients_match() {
        let model = MlpModel::new(
            vec![
                LayerSpec::dense(5, 8),
                LayerSpec::Selu,
                LayerSpec::dense(8, 6),
                LayerSpec::Selu,
                LayerSpec::dense(6, 2),
            ],
            42,
        )
        .unwrap();
        let (batch, labels) = random_batch(6, 5, 42);
        let report = check_gradients(&model, &batch, &labels, 1e-6, 1e-8).unwrap();
        assert!(report.checked > 50);
        assert!(report.max_rel_error < 1e-5, "max rel {:?}", report);
    }

    #[test]
    fn batchnorm_and_dropout_train_mode_gradients_match() {
        let model = MlpModel::new(
            vec![
                LayerSpec::dense(4, 8),
                LayerSpec::batchnorm(8),
                LayerSpec::Selu,
                LayerSpec::Dropout { rate: 0.25 },
                LayerSpec::dense(8, 2),
            ],
            77,
        )
        .unwrap();
        assert_eq!(model.mode(), Mode::Train);
        let (batch, labels) = random_batch(8, 4, 77);
        let report = check_gradients(&model, &batch, &labels, 1e-6, 1e-8).unwrap();
        assert!(report.max_rel_error < 1e-5, "max rel {:?}", report);
    }

    #[test]
    fn eval_mode_gradients_match() {
        let mut model = MlpModel::new(
            vec![
                LayerSpec::dense(3, 6),
                LayerSpec::batchnorm(6),
                LayerSpec::Selu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::dense(6, 2),
            ],
            5,
        )
        .unwrap();
        // Push running stats away from their init so eval mode is exercised
        // with non-trivial statistics.
        let (warm, _) = random_batch(16, 3, 8);
        let _ = model.forward(&warm).unwrap();
        model.set_mode(Mode::Eval);
        let (batch, labels) = random_batch(5, 3, 9);
        let report = check_gradients(&model, &batch, &labels, 1e-6, 1e-8).unwrap();
        assert!(report.max_rel_error < 1e-5, "max rel {:?}", report);
    }
}
