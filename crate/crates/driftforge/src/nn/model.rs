//! Dense feed-forward networks with hand-written forward and backward passes.
//!
//! The layer vocabulary is fixed: dense, batch normalization, SELU, and
//! inverted dropout. The backward pass returns exact gradients for every
//! parameter *and* for the input batch; input gradients drive the
//! feature-space attacks.

use super::{Matrix, NnError};
use crate::rng::{rng_from, uniform_symmetric, ChaCha8Rng};

/// SELU scale constant.
pub const SELU_SCALE: f64 = 1.0507009873554805;
/// SELU alpha constant.
pub const SELU_ALPHA: f64 = 1.6732632423543772;
/// Stabilizer inside the batchnorm square root.
pub const BN_EPS: f64 = 1e-8;
/// Default momentum for batchnorm running statistics.
pub const BN_MOMENTUM: f64 = 0.9;

/// One layer of the fixed vocabulary.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { in_dim: usize, out_dim: usize },
    Batchnorm { dim: usize, momentum: f64 },
    Selu,
    Dropout { rate: f64 },
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec::Dense { in_dim, out_dim }
    }

    pub fn batchnorm(dim: usize) -> Self {
        LayerSpec::Batchnorm { dim, momentum: BN_MOMENTUM }
    }
}

/// Train / eval switch. Eval makes dropout the identity and batchnorm use
/// running statistics, so eval-mode forward is a pure function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub(crate) enum LayerParams {
    Dense {
        weight: Matrix, // (in_dim, out_dim)
        bias: Vec<f64>,
    },
    Batchnorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    None,
}

/// Feed-forward network over the fixed layer vocabulary.
#[derive(Debug, Clone)]
pub struct MlpModel {
    specs: Vec<LayerSpec>,
    params: Vec<LayerParams>,
    mode: Mode,
    version: u64,
    input_dim: usize,
    output_dim: usize,
    dropout_rng: ChaCha8Rng,
}

/// Per-layer state captured during a forward pass, sufficient for backward.
#[derive(Debug)]
pub struct ForwardTrace {
    version: u64,
    mode: Mode,
    batch_rows: usize,
    steps: Vec<TraceStep>,
}

#[derive(Debug)]
enum TraceStep {
    Dense {
        input: Matrix,
    },
    Batchnorm {
        xhat: Matrix,
        inv_std: Vec<f64>,
        // Batch statistics, present only for train-mode passes.
        batch_stats: Option<(Vec<f64>, Vec<f64>)>,
    },
    Selu {
        input: Matrix,
    },
    // Mask entries are 0 or 1/keep so forward and backward share one multiply.
    Dropout {
        mask: Option<Matrix>,
    },
}

/// Gradients for one layer, aligned with the model's layer list.
#[derive(Debug, Clone)]
pub enum LayerGrads {
    Dense { dweight: Matrix, dbias: Vec<f64> },
    Batchnorm { dgamma: Vec<f64>, dbeta: Vec<f64> },
    None,
}

/// Full gradient set from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub input_grad: Matrix,
}

impl Gradients {
    /// Flat gradient blocks in the model's canonical trainable-parameter order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerGrads::Dense { dweight, dbias } => {
                    out.push(dweight.data());
                    out.push(dbias.as_slice());
                }
                LayerGrads::Batchnorm { dgamma, dbeta } => {
                    out.push(dgamma.as_slice());
                    out.push(dbeta.as_slice());
                }
                LayerGrads::None => {}
            }
        }
        out
    }

    /// Scales every gradient (parameters and input) in place.
    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            match layer {
                LayerGrads::Dense { dweight, dbias } => {
                    dweight.data_mut().iter_mut().for_each(|v| *v *= factor);
                    dbias.iter_mut().for_each(|v| *v *= factor);
                }
                LayerGrads::Batchnorm { dgamma, dbeta } => {
                    dgamma.iter_mut().for_each(|v| *v *= factor);
                    dbeta.iter_mut().for_each(|v| *v *= factor);
                }
                LayerGrads::None => {}
            }
        }
        self.input_grad.data_mut().iter_mut().for_each(|v| *v *= factor);
    }

    /// Adds another gradient set element-wise. Shapes must match.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (
                    LayerGrads::Dense { dweight, dbias },
                    LayerGrads::Dense { dweight: ow, dbias: ob },
                ) => {
                    for (x, y) in dweight.data_mut().iter_mut().zip(ow.data()) {
                        *x += y;
                    }
                    for (x, y) in dbias.iter_mut().zip(ob) {
                        *x += y;
                    }
                }
                (
                    LayerGrads::Batchnorm { dgamma, dbeta },
                    LayerGrads::Batchnorm { dgamma: og, dbeta: ob },
                ) => {
                    for (x, y) in dgamma.iter_mut().zip(og) {
                        *x += y;
                    }
                    for (x, y) in dbeta.iter_mut().zip(ob) {
                        *x += y;
                    }
                }
                (LayerGrads::None, LayerGrads::None) => {}
                _ => panic!("gradient layer kinds do not line up"),
            }
        }
    }
}

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_SCALE * x
    } else {
        SELU_SCALE * SELU_ALPHA * (x.exp() - 1.0)
    }
}

pub fn selu_deriv(x: f64) -> f64 {
    if x > 0.0 {
        SELU_SCALE
    } else {
        SELU_SCALE * SELU_ALPHA * x.exp()
    }
}

impl MlpModel {
    /// Builds a model, validating that layer dimensions chain.
    ///
    /// Weights start uniform in `±sqrt(6/(fan_in+fan_out))`, biases at zero;
    /// both the initialization and the dropout mask stream derive from `seed`.
    pub fn new(specs: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let mut cur: Option<usize> = None;
        for spec in &specs {
            match *spec {
                LayerSpec::Dense { in_dim, out_dim } => {
                    if in_dim == 0 || out_dim == 0 {
                        return Err(NnError::Shape("dense dims must be >= 1".into()));
                    }
                    if let Some(d) = cur {
                        if d != in_dim {
                            return Err(NnError::Shape(format!(
                                "dense in_dim {in_dim} does not chain from {d}"
                            )));
                        }
                    }
                    cur = Some(out_dim);
                }
                LayerSpec::Batchnorm { dim, momentum } => {
                    if !(0.0..1.0).contains(&momentum) || momentum <= 0.0 {
                        return Err(NnError::Shape(format!("batchnorm momentum {momentum} outside (0,1)")));
                    }
                    if let Some(d) = cur {
                        if d != dim {
                            return Err(NnError::Shape(format!(
                                "batchnorm dim {dim} does not chain from {d}"
                            )));
                        }
                    }
                    cur = Some(dim);
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(NnError::Shape(format!("dropout rate {rate} outside [0,1)")));
                    }
                }
                LayerSpec::Selu => {}
            }
        }
        let output_dim = cur.ok_or_else(|| NnError::Shape("network has no dimensioned layer".into()))?;
        let input_dim = specs
            .iter()
            .find_map(|s| match *s {
                LayerSpec::Dense { in_dim, .. } => Some(in_dim),
                LayerSpec::Batchnorm { dim, .. } => Some(dim),
                _ => None,
            })
            .expect("checked above");

        let mut init_rng = rng_from(seed, &[0x696e_6974]);
        let params = specs
            .iter()
            .map(|spec| match *spec {
                LayerSpec::Dense { in_dim, out_dim } => {
                    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
                    let mut weight = Matrix::zeros(in_dim, out_dim);
                    for v in weight.data_mut() {
                        *v = uniform_symmetric(&mut init_rng, limit);
                    }
                    LayerParams::Dense { weight, bias: vec![0.0; out_dim] }
                }
                LayerSpec::Batchnorm { dim, .. } => LayerParams::Batchnorm {
                    gamma: vec![1.0; dim],
                    beta: vec![0.0; dim],
                    running_mean: vec![0.0; dim],
                    running_var: vec![1.0; dim],
                },
                _ => LayerParams::None,
            })
            .collect();

        Ok(Self {
            specs,
            params,
            mode: Mode::Train,
            version: 0,
            input_dim,
            output_dim,
            dropout_rng: rng_from(seed, &[0x6472_6f70]),
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        if self.mode != mode {
            self.mode = mode;
            self.version += 1;
        }
    }

    pub(crate) fn version(&self) -> u64 {
        self.version
    }

    /// Forward pass honoring the current mode.
    ///
    /// Train mode draws fresh dropout masks and updates batchnorm running
    /// statistics; eval mode is deterministic and leaves the model untouched.
    pub fn forward(&mut self, batch: &Matrix) -> Result<(Matrix, ForwardTrace), NnError> {
        match self.mode {
            Mode::Eval => self.forward_eval(batch),
            Mode::Train => {
                let mut rng = self.dropout_rng.clone();
                let (out, mut trace) =
                    forward_impl(&self.specs, &self.params, Mode::Train, batch, Some(&mut rng))?;
                self.dropout_rng = rng;
                self.apply_running_stat_updates(&trace);
                trace.version = self.version;
                Ok((out, trace))
            }
        }
    }

    /// Eval-mode forward through a shared reference.
    ///
    /// Errors if the model is in train mode (a train pass must mutate state).
    pub fn forward_eval(&self, batch: &Matrix) -> Result<(Matrix, ForwardTrace), NnError> {
        if self.mode != Mode::Eval {
            return Err(NnError::Invalid("forward_eval requires eval mode".into()));
        }
        let (out, mut trace) = forward_impl(&self.specs, &self.params, Mode::Eval, batch, None)?;
        trace.version = self.version;
        Ok((out, trace))
    }

    fn apply_running_stat_updates(&mut self, trace: &ForwardTrace) {
        let mut touched = false;
        for (step, (spec, params)) in trace
            .steps
            .iter()
            .zip(self.specs.iter().zip(self.params.iter_mut()))
        {
            if let (
                TraceStep::Batchnorm { batch_stats: Some((mean, var)), .. },
                LayerSpec::Batchnorm { momentum, .. },
                LayerParams::Batchnorm { running_mean, running_var, .. },
            ) = (step, spec, params)
            {
                for (rm, &m) in running_mean.iter_mut().zip(mean) {
                    *rm = *momentum * *rm + (1.0 - *momentum) * m;
                }
                for (rv, &v) in running_var.iter_mut().zip(var) {
                    *rv = *momentum * *rv + (1.0 - *momentum) * v;
                }
                touched = true;
            }
        }
        if touched {
            self.version += 1;
        }
    }

    /// Trainable parameter blocks in canonical order (running stats excluded).
    pub(crate) fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out = Vec::new();
        for params in &mut self.params {
            match params {
                LayerParams::Dense { weight, bias } => {
                    out.push(weight.data_mut());
                    out.push(bias.as_mut_slice());
                }
                LayerParams::Batchnorm { gamma, beta, .. } => {
                    out.push(gamma.as_mut_slice());
                    out.push(beta.as_mut_slice());
                }
                LayerParams::None => {}
            }
        }
        out
    }

    pub(crate) fn param_block_lens(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for params in &self.params {
            match params {
                LayerParams::Dense { weight, bias } => {
                    out.push(weight.data().len());
                    out.push(bias.len());
                }
                LayerParams::Batchnorm { gamma, beta, .. } => {
                    out.push(gamma.len());
                    out.push(beta.len());
                }
                LayerParams::None => {}
            }
        }
        out
    }

    /// All parameters, including batchnorm running statistics, as one flat
    /// little-endian-serializable buffer. Order: per layer, dense weight
    /// row-major then bias; batchnorm gamma, beta, running mean, running var.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for params in &self.params {
            match params {
                LayerParams::Dense { weight, bias } => {
                    out.extend_from_slice(weight.data());
                    out.extend_from_slice(bias);
                }
                LayerParams::Batchnorm { gamma, beta, running_mean, running_var } => {
                    out.extend_from_slice(gamma);
                    out.extend_from_slice(beta);
                    out.extend_from_slice(running_mean);
                    out.extend_from_slice(running_var);
                }
                LayerParams::None => {}
            }
        }
        out
    }

    /// Restores parameters from a [`params_flat`](Self::params_flat) buffer.
    pub fn load_params_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        let expected: usize = self
            .params
            .iter()
            .map(|p| match p {
                LayerParams::Dense { weight, bias } => weight.data().len() + bias.len(),
                LayerParams::Batchnorm { gamma, .. } => 4 * gamma.len(),
                LayerParams::None => 0,
            })
            .sum();
        if flat.len() != expected {
            return Err(NnError::Shape(format!(
                "parameter buffer holds {} values, model needs {expected}",
                flat.len()
            )));
        }
        let mut off = 0;
        for params in &mut self.params {
            match params {
                LayerParams::Dense { weight, bias } => {
                    let w = weight.data().len();
                    weight.data_mut().copy_from_slice(&flat[off..off + w]);
                    off += w;
                    let blen = bias.len();
                    bias.copy_from_slice(&flat[off..off + blen]);
                    off += blen;
                }
                LayerParams::Batchnorm { gamma, beta, running_mean, running_var } => {
                    let d = gamma.len();
                    gamma.copy_from_slice(&flat[off..off + d]);
                    beta.copy_from_slice(&flat[off + d..off + 2 * d]);
                    running_mean.copy_from_slice(&flat[off + 2 * d..off + 3 * d]);
                    running_var.copy_from_slice(&flat[off + 3 * d..off + 4 * d]);
                    off += 4 * d;
                }
                LayerParams::None => {}
            }
        }
        self.version += 1;
        Ok(())
    }

    pub(crate) fn dense_weight(&self, layer_idx: usize) -> Option<&Matrix> {
        match &self.params[layer_idx] {
            LayerParams::Dense { weight, .. } => Some(weight),
            _ => None,
        }
    }

    /// Overwrites one dense layer's weight and bias (test and setup helper).
    pub fn set_dense(&mut self, layer_idx: usize, weight: Matrix, bias: Vec<f64>) -> Result<(), NnError> {
        match &mut self.params[layer_idx] {
            LayerParams::Dense { weight: w, bias: b } => {
                if w.rows() != weight.rows() || w.cols() != weight.cols() || b.len() != bias.len() {
                    return Err(NnError::Shape("set_dense shape mismatch".into()));
                }
                *w = weight;
                *b = bias;
                self.version += 1;
                Ok(())
            }
            _ => Err(NnError::Invalid(format!("layer {layer_idx} is not dense"))),
        }
    }
}

fn forward_impl(
    specs: &[LayerSpec],
    params: &[LayerParams],
    mode: Mode,
    batch: &Matrix,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Matrix, ForwardTrace), NnError> {
    let input_dim = specs
        .iter()
        .find_map(|s| match *s {
            LayerSpec::Dense { in_dim, .. } => Some(in_dim),
            LayerSpec::Batchnorm { dim, .. } => Some(dim),
            _ => None,
        })
        .unwrap_or(batch.cols());
    if batch.cols() != input_dim {
        return Err(NnError::Shape(format!(
            "batch has {} columns, model expects {input_dim}",
            batch.cols()
        )));
    }
    if !batch.is_finite() {
        return Err(NnError::NonFinite("input batch"));
    }

    let rows = batch.rows();
    let mut cur = batch.clone();
    let mut steps = Vec::with_capacity(specs.len());

    for (spec, layer_params) in specs.iter().zip(params) {
        match (spec, layer_params) {
            (LayerSpec::Dense { .. }, LayerParams::Dense { weight, bias }) => {
                let mut out = cur.mul(weight);
                for r in 0..out.rows() {
                    for (v, b) in out.row_mut(r).iter_mut().zip(bias) {
                        *v += b;
                    }
                }
                steps.push(TraceStep::Dense { input: std::mem::replace(&mut cur, out) });
            }
            (LayerSpec::Batchnorm { .. }, LayerParams::Batchnorm { gamma, beta, running_mean, running_var }) => {
                let dim = gamma.len();
                let (mean, var) = match mode {
                    Mode::Train => {
                        let mut mean = vec![0.0; dim];
                        let mut var = vec![0.0; dim];
                        for r in 0..rows {
                            for (m, &v) in mean.iter_mut().zip(cur.row(r)) {
                                *m += v;
                            }
                        }
                        mean.iter_mut().for_each(|m| *m /= rows as f64);
                        for r in 0..rows {
                            for ((s, &v), m) in var.iter_mut().zip(cur.row(r)).zip(&mean) {
                                let d = v - m;
                                *s += d * d;
                            }
                        }
                        var.iter_mut().for_each(|s| *s /= rows as f64);
                        (mean, var)
                    }
                    Mode::Eval => (running_mean.clone(), running_var.clone()),
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut xhat = Matrix::zeros(rows, dim);
                let mut out = Matrix::zeros(rows, dim);
                for r in 0..rows {
                    for c in 0..dim {
                        let h = (cur.get(r, c) - mean[c]) * inv_std[c];
                        xhat.set(r, c, h);
                        out.set(r, c, gamma[c] * h + beta[c]);
                    }
                }
                let batch_stats = matches!(mode, Mode::Train).then_some((mean, var));
                steps.push(TraceStep::Batchnorm { xhat, inv_std, batch_stats });
                cur = out;
            }
            (LayerSpec::Selu, _) => {
                let mut out = cur.clone();
                out.data_mut().iter_mut().for_each(|v| *v = selu(*v));
                steps.push(TraceStep::Selu { input: std::mem::replace(&mut cur, out) });
            }
            (LayerSpec::Dropout { rate }, _) => match mode {
                Mode::Eval => steps.push(TraceStep::Dropout { mask: None }),
                Mode::Train => {
                    let rng = dropout_rng
                        .as_deref_mut()
                        .ok_or_else(|| NnError::Invalid("train-mode dropout needs an RNG".into()))?;
                    let keep = 1.0 - rate;
                    let mut mask = Matrix::zeros(cur.rows(), cur.cols());
                    for v in mask.data_mut() {
                        *v = if rand::Rng::random::<f64>(rng) < keep { 1.0 / keep } else { 0.0 };
                    }
                    for (x, m) in cur.data_mut().iter_mut().zip(mask.data()) {
                        *x *= m;
                    }
                    steps.push(TraceStep::Dropout { mask: Some(mask) });
                }
            },
            _ => return Err(NnError::Invalid("layer spec and params out of sync".into())),
        }
    }

    if !cur.is_finite() {
        return Err(NnError::NonFinite("activations"));
    }
    Ok((cur, ForwardTrace { version: 0, mode, batch_rows: rows, steps }))
}

/// Backward pass: gradients for every parameter and for the input batch.
///
/// The trace must come from the immediately preceding forward on the same
/// model state; a model mutated in between is rejected as stale.
pub fn backward(model: &MlpModel, trace: &ForwardTrace, grad_logits: &Matrix) -> Result<Gradients, NnError> {
    if trace.version != model.version {
        return Err(NnError::StaleTrace);
    }
    if grad_logits.rows() != trace.batch_rows || grad_logits.cols() != model.output_dim {
        return Err(NnError::Shape(format!(
            "grad_logits is {}x{}, expected {}x{}",
            grad_logits.rows(),
            grad_logits.cols(),
            trace.batch_rows,
            model.output_dim
        )));
    }

    let mut grad = grad_logits.clone();
    let mut layer_grads: Vec<LayerGrads> = vec![LayerGrads::None; model.specs.len()];

    for idx in (0..model.specs.len()).rev() {
        let step = &trace.steps[idx];
        match (&model.specs[idx], &model.params[idx], step) {
            (LayerSpec::Dense { .. }, LayerParams::Dense { weight, .. }, TraceStep::Dense { input }) => {
                let dweight = input.mul_tn(&grad);
                let mut dbias = vec![0.0; grad.cols()];
                for r in 0..grad.rows() {
                    for (b, &g) in dbias.iter_mut().zip(grad.row(r)) {
                        *b += g;
                    }
                }
                let dinput = grad.mul_nt(weight);
                layer_grads[idx] = LayerGrads::Dense { dweight, dbias };
                grad = dinput;
            }
            (
                LayerSpec::Batchnorm { .. },
                LayerParams::Batchnorm { gamma, .. },
                TraceStep::Batchnorm { xhat, inv_std, batch_stats },
            ) => {
                let dim = gamma.len();
                let m = trace.batch_rows as f64;
                let mut dgamma = vec![0.0; dim];
                let mut dbeta = vec![0.0; dim];
                for r in 0..trace.batch_rows {
                    for c in 0..dim {
                        let g = grad.get(r, c);
                        dgamma[c] += g * xhat.get(r, c);
                        dbeta[c] += g;
                    }
                }
                let mut dinput = Matrix::zeros(trace.batch_rows, dim);
                match batch_stats {
                    Some(_) => {
                        // Train mode: normalize with batch statistics, so the
                        // mean and variance terms contribute to the gradient.
                        for c in 0..dim {
                            let sum_dxhat = dbeta[c] * gamma[c];
                            let sum_dxhat_xhat = dgamma[c] * gamma[c];
                            for r in 0..trace.batch_rows {
                                let dxhat = grad.get(r, c) * gamma[c];
                                let v = inv_std[c] / m
                                    * (m * dxhat - sum_dxhat - xhat.get(r, c) * sum_dxhat_xhat);
                                dinput.set(r, c, v);
                            }
                        }
                    }
                    None => {
                        // Eval mode: running stats are constants.
                        for r in 0..trace.batch_rows {
                            for c in 0..dim {
                                dinput.set(r, c, grad.get(r, c) * gamma[c] * inv_std[c]);
                            }
                        }
                    }
                }
                layer_grads[idx] = LayerGrads::Batchnorm { dgamma, dbeta };
                grad = dinput;
            }
            (LayerSpec::Selu, _, TraceStep::Selu { input }) => {
                for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
                    *g *= selu_deriv(x);
                }
            }
            (LayerSpec::Dropout { .. }, _, TraceStep::Dropout { mask }) => {
                if let Some(mask) = mask {
                    for (g, &m) in grad.data_mut().iter_mut().zip(mask.data()) {
                        *g *= m;
                    }
                }
            }
            _ => return Err(NnError::Invalid("trace does not match model layers".into())),
        }
    }

    Ok(Gradients { layers: layer_grads, input_grad: grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_dense_layer_passes_input_through() {
        let mut model = MlpModel::new(vec![LayerSpec::dense(2, 2)], 0).unwrap();
        model
            .set_dense(0, Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), vec![0.0, 0.0])
            .unwrap();
        model.set_mode(Mode::Eval);
        let input = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let (out, _) = model.forward_eval(&input).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let mut model =
            MlpModel::new(vec![LayerSpec::dense(3, 3), LayerSpec::Dropout { rate: 0.5 }], 1).unwrap();
        model.set_mode(Mode::Eval);
        let input = Matrix::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let (a, _) = model.forward_eval(&input).unwrap();
        let (b, _) = model.forward_eval(&input).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn two_layer_forward_matches_manual_matrix_arithmetic() {
        // Independent oracle: the same computation written out step by step
        // with scalar arithmetic, no Matrix::mul involved.
        let w1 = vec![vec![0.5, -1.0], vec![2.0, 0.25]]; // (in 2, out 2)
        let b1 = [0.1, -0.2];
        let w2 = vec![vec![1.5, 0.0], vec![-0.5, 1.0]];
        let b2 = [0.0, 0.3];
        let x = [0.7, -1.3];

        let mut h = [0.0_f64; 2];
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = b1[j] + x[0] * w1[0][j] + x[1] * w1[1][j];
        }
        let hs = [selu(h[0]), selu(h[1])];
        let mut expect = [0.0_f64; 2];
        for (j, ej) in expect.iter_mut().enumerate() {
            *ej = b2[j] + hs[0] * w2[0][j] + hs[1] * w2[1][j];
        }

        let mut model = MlpModel::new(
            vec![LayerSpec::dense(2, 2), LayerSpec::Selu, LayerSpec::dense(2, 2)],
            3,
        )
        .unwrap();
        model.set_dense(0, Matrix::from_rows(&w1).unwrap(), b1.to_vec()).unwrap();
        model.set_dense(2, Matrix::from_rows(&w2).unwrap(), b2.to_vec()).unwrap();
        model.set_mode(Mode::Eval);
        let (out, _) = model.forward_eval(&Matrix::from_rows(&[x.to_vec()]).unwrap()).unwrap();
        assert!((out.get(0, 0) - expect[0]).abs() < 1e-15);
        assert!((out.get(0, 1) - expect[1]).abs() < 1e-15);
    }

    #[test]
    fn linear_input_gradient_is_weight_row() {
        // y = Wx with loss = y_0: d loss / dx = first column of W^T = row 0 of W^T,
        // i.e. the weights feeding output 0.
        let mut model = MlpModel::new(vec![LayerSpec::dense(3, 2)], 5).unwrap();
        let w = Matrix::from_rows(&[vec![1.0, 4.0], vec![2.0, 5.0], vec![3.0, 6.0]]).unwrap();
        model.set_dense(0, w, vec![0.0, 0.0]).unwrap();
        model.set_mode(Mode::Eval);
        let x = Matrix::from_rows(&[vec![0.3, -0.7, 0.2]]).unwrap();
        let (_, trace) = model.forward_eval(&x).unwrap();
        let grad_logits = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let grads = backward(&model, &trace, &grad_logits).unwrap();
        assert_eq!(grads.input_grad.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_output_gradient_propagates_zero_everywhere() {
        let mut model = MlpModel::new(
            vec![
                LayerSpec::dense(4, 5),
                LayerSpec::batchnorm(5),
                LayerSpec::Selu,
                LayerSpec::dense(5, 2),
            ],
            9,
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3, 0.4], vec![-0.5, 0.0, 0.7, 1.0]]).unwrap();
        let (_, trace) = model.forward(&x).unwrap();
        let grads = backward(&model, &trace, &Matrix::zeros(2, 2)).unwrap();
        assert!(grads.input_grad.data().iter().all(|&v| v == 0.0));
        for block in grads.blocks() {
            assert!(block.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn stale_trace_is_rejected() {
        let mut model = MlpModel::new(vec![LayerSpec::dense(2, 2)], 2).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let (_, trace) = model.forward(&x).unwrap();
        model
            .set_dense(0, Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), vec![0.0, 0.0])
            .unwrap();
        let err = backward(&model, &trace, &Matrix::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, NnError::StaleTrace));
    }

    #[test]
    fn batchnorm_train_mode_normalizes_each_feature() {
        let mut model = MlpModel::new(vec![LayerSpec::batchnorm(3)], 4).unwrap();
        let mut rng = crate::rng::rng_from(11, &[]);
        let mut rows = Vec::new();
        for _ in 0..64 {
            rows.push(vec![
                5.0 + 2.0 * crate::rng::standard_normal(&mut rng),
                -3.0 + 0.5 * crate::rng::standard_normal(&mut rng),
                crate::rng::standard_normal(&mut rng),
            ]);
        }
        let batch = Matrix::from_rows(&rows).unwrap();
        let (out, _) = model.forward(&batch).unwrap();
        for c in 0..3 {
            let mean: f64 = (0..64).map(|r| out.get(r, c)).sum::<f64>() / 64.0;
            let var: f64 = (0..64).map(|r| (out.get(r, c) - mean).powi(2)).sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn selu_is_continuous_at_zero() {
        assert_eq!(selu(0.0), 0.0);
        let eps = 1e-9;
        assert!((selu(eps) - selu(-eps)).abs() < 1e-8);
    }

    #[test]
    fn params_flat_round_trips() {
        let model = MlpModel::new(
            vec![LayerSpec::dense(3, 4), LayerSpec::batchnorm(4), LayerSpec::dense(4, 2)],
            17,
        )
        .unwrap();
        let flat = model.params_flat();
        let mut other = MlpModel::new(model.specs().to_vec(), 99).unwrap();
        assert_ne!(other.params_flat(), flat);
        other.load_params_flat(&flat).unwrap();
        assert_eq!(other.params_flat(), flat);
    }
}
