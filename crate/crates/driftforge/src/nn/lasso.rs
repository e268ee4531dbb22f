//! L1-penalized logistic regression for feature selection.
//!
//! Proximal gradient (ISTA) with a fixed step size: gradient step on the
//! smooth logistic loss, then soft-thresholding on the weights. The bias is
//! never penalized. Selection returns the indices of the largest-magnitude
//! weights.

use super::{Matrix, NnError};

const ISTA_ITERATIONS: usize = 500;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Fits L1-penalized logistic regression and returns the indices of the `k`
/// largest-magnitude weights, strongest first, ties broken by lower index.
///
/// `labels` uses 0 for benign and 1 for malware; both classes must appear.
pub fn l1_logistic_select(
    train: &Matrix,
    labels: &[usize],
    l1_strength: f64,
    k: usize,
) -> Result<Vec<usize>, NnError> {
    let (n, d) = (train.rows(), train.cols());
    if n == 0 || labels.len() != n {
        return Err(NnError::Shape(format!("{n} rows vs {} labels", labels.len())));
    }
    if k > d {
        return Err(NnError::Invalid(format!("k = {k} exceeds feature count {d}")));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == n {
        return Err(NnError::Invalid("labels contain a single class".into()));
    }

    // Step size from a Lipschitz bound on the logistic gradient:
    // L <= mean ||x||^2 / 4 (plus the bias coordinate).
    let mean_sq_norm: f64 =
        (0..n).map(|r| train.row(r).iter().map(|v| v * v).sum::<f64>() + 1.0).sum::<f64>() / n as f64;
    let step = 4.0 / mean_sq_norm.max(1e-12);

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let signs: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();

    for _ in 0..ISTA_ITERATIONS {
        let mut grad_w = vec![0.0; d];
        let mut grad_b = 0.0;
        for r in 0..n {
            let row = train.row(r);
            let z: f64 = row.iter().zip(&w).map(|(x, wi)| x * wi).sum::<f64>() + b;
            // d/dz of log(1 + exp(-y z)) is -y * sigmoid(-y z)
            let coeff = -signs[r] * sigmoid(-signs[r] * z) / n as f64;
            for (g, &x) in grad_w.iter_mut().zip(row) {
                *g += coeff * x;
            }
            grad_b += coeff;
        }
        for (wi, g) in w.iter_mut().zip(&grad_w) {
            *wi = soft_threshold(*wi - step * g, step * l1_strength);
        }
        b -= step * grad_b;
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &bi| {
        w[bi].abs()
            .partial_cmp(&w[a].abs())
            .expect("weights are finite")
            .then(a.cmp(&bi))
    });
    order.truncate(k);
    Ok(order)
}
