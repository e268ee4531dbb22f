//! Cross-entropy over two-class logits, with exact logit gradients.

use super::{Matrix, NnError};

/// Row-wise softmax, computed with the max-subtraction trick.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean negative log-likelihood of the true class, plus the gradient with
/// respect to the logits.
///
/// Labels index the logit columns; only `{0, 1}` are admitted because the
/// task is binary. The gradient is `(softmax - onehot) / n`, exact for the
/// mean loss.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix), NnError> {
    if logits.rows() != labels.len() {
        return Err(NnError::Shape(format!(
            "{} logit rows vs {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if logits.cols() != 2 {
        return Err(NnError::Shape(format!("binary task expects 2 logit columns, got {}", logits.cols())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(NnError::LabelOutOfRange(bad));
    }

    let n = logits.rows() as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsumexp = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += logsumexp - row[label];
        let g = grad.row_mut(r);
        g[label] -= 1.0;
        g[0] /= n;
        g[1] /= n;
    }
    Ok((loss / n, grad))
}

/// Softmax probability of the malware class (column 1) per row.
pub fn malware_scores(logits: &Matrix) -> Vec<f64> {
    let probs = softmax(logits);
    (0..probs.rows()).map(|r| probs.get(r, 1)).collect()
}
