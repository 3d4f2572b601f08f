//! Forward/backward engine for small fully connected classifiers.
//!
//! Weights for layer `l` are stored row-major with shape
//! `(layer_dims[l + 1], layer_dims[l])`. The last layer emits raw logits;
//! softmax is applied at evaluation time only.

pub mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::substream;

/// Floor applied to probabilities inside `ln` so confident mistakes stay finite.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    activation: Activation,
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) biases: Vec<Vec<f64>>,
}

/// Same layout as the model parameters; carries `d loss / d params`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(LabError::Config(format!("layer_dims needs at least an input and an output entry, got {layer_dims:?}")));
    }
    if layer_dims.contains(&0) {
        return Err(LabError::Config(format!("layer_dims entries must be positive, got {layer_dims:?}")));
    }
    Ok(())
}

/// Fresh parameters: weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
pub fn init_params(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<MlpModel> {
    validate_dims(layer_dims)?;
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for l in 0..layer_dims.len() - 1 {
        weights.push(init_layer_weights(layer_dims[l], layer_dims[l + 1], seed, l));
        biases.push(vec![0.0; layer_dims[l + 1]]);
    }
    Ok(MlpModel { layer_dims: layer_dims.to_vec(), activation, weights, biases })
}

pub(crate) fn init_layer_weights(fan_in: usize, fan_out: usize, seed: u64, layer: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut rng = substream(seed, &[0x1417, layer as u64]);
    (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// Output of a batched forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub rows: usize,
    pub classes: usize,
    /// `rows x classes`, row-major.
    pub logits: Vec<f64>,
    /// Softmax of `logits`, row-major.
    pub probs: Vec<f64>,
}

impl Forward {
    pub fn prob_row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.classes..(i + 1) * self.classes]
    }

    pub fn logit_row(&self, i: usize) -> &[f64] {
        &self.logits[i * self.classes..(i + 1) * self.classes]
    }
}

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean of `-ln p_y` over rows, with `p_y` floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], labels: &[usize], classes: usize) -> f64 {
    let m = labels.len();
    let total: f64 = labels.iter().enumerate().map(|(i, &y)| -probs[i * classes + y].max(PROB_FLOOR).ln()).sum();
    total / m as f64
}

/// A labelled mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(LabError::Shape("batch must hold at least one sample".into()));
        }
        if dim == 0 || inputs.len() != labels.len() * dim {
            return Err(LabError::Shape(format!(
                "batch of {} labels needs {} inputs of width {dim}, got {}",
                labels.len(),
                labels.len() * dim,
                inputs.len()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Numeric("batch inputs contain non-finite values".into()));
        }
        Ok(Self { inputs, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }
}

/// Per-sample activations kept for the backward pass.
struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Builds a model from explicit parameters, checking every shape.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        activation: Activation,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        validate_dims(&layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(LabError::Shape(format!("expected {layers} weight/bias groups, got {}/{}", weights.len(), biases.len())));
        }
        for l in 0..layers {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            if weights[l].len() != fan_in * fan_out {
                return Err(LabError::Shape(format!(
                    "layer {l} weights: expected {} entries, got {}",
                    fan_in * fan_out,
                    weights[l].len()
                )));
            }
            if biases[l].len() != fan_out {
                return Err(LabError::Shape(format!("layer {l} biases: expected {fan_out} entries, got {}", biases[l].len())));
            }
        }
        let model = Self { layer_dims, activation, weights, biases };
        if !model.is_finite() {
            return Err(LabError::Numeric("model parameters must be finite".into()));
        }
        Ok(model)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().expect("validated dims")
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.weights[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite())
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in 0..self.num_layers() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    /// Inverse of [`MlpModel::flat_params`].
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(LabError::Shape(format!("expected {} parameters, got {}", self.num_params(), flat.len())));
        }
        let mut at = 0;
        for l in 0..self.num_layers() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Layer index of parameter group `k`, counting the output layer as group 1.
    pub fn group_layer(&self, k: usize) -> Option<usize> {
        (k >= 1 && k <= self.num_layers()).then(|| self.num_layers() - k)
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let layers = self.num_layers();
        let mut acts = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let input = &acts[l];
            let w = &self.weights[l];
            let z: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let row = &w[j * fan_in..(j + 1) * fan_in];
                    self.biases[l][j] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let a = if l + 1 == layers { z.clone() } else { z.iter().map(|&v| self.activation.apply(v)).collect() };
            pre.push(z);
            acts.push(a);
        }
        Trace { acts, pre }
    }

    /// Input to the output layer: the last hidden activation, or `x` itself
    /// for a single-layer model.
    pub fn penultimate(&self, x: &[f64]) -> Vec<f64> {
        let mut tr = self.trace(x);
        tr.acts.swap_remove(self.num_layers() - 1)
    }

    /// Logits for a single input row.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        self.trace(x).acts.pop().expect("at least one layer")
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Predicted class, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Batched forward pass over row-major `inputs`.
    pub fn forward(&self, inputs: &[f64]) -> Result<Forward> {
        let d = self.input_dim();
        if inputs.is_empty() || !inputs.len().is_multiple_of(d) {
            return Err(LabError::Shape(format!(
                "inputs of length {} are not a whole number of rows of width {d}",
                inputs.len()
            )));
        }
        let rows = inputs.len() / d;
        let classes = self.num_classes();
        let mut logits = Vec::with_capacity(rows * classes);
        let mut probs = Vec::with_capacity(rows * classes);
        for row in inputs.chunks_exact(d) {
            let z = self.logits(row);
            probs.extend(softmax(&z));
            logits.extend(z);
        }
        Ok(Forward { rows, classes, logits, probs })
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.dim() != self.input_dim() {
            return Err(LabError::Shape(format!(
                "batch width {} does not match model input width {}",
                batch.dim(),
                self.input_dim()
            )));
        }
        let k = self.num_classes();
        if let Some(&bad) = batch.labels().iter().find(|&&y| y >= k) {
            return Err(LabError::Shape(format!("label {bad} out of range for {k} classes")));
        }
        Ok(())
    }

    /// Accumulates `sum_i dlogits_i^T d logits_i / d params` into `grad`, and
    /// returns the input gradient of the last row when `want_input` is set.
    fn backprop_row(&self, tr: &Trace, dlogits: &[f64], grad: &mut Gradient, want_input: bool) -> Option<Vec<f64>> {
        let layers = self.num_layers();
        let mut delta = dlogits.to_vec();
        for l in (0..layers).rev() {
            let fan_in = self.layer_dims[l];
            let input = &tr.acts[l];
            let gw = &mut grad.weights[l];
            for (j, &dj) in delta.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                let row = &mut gw[j * fan_in..(j + 1) * fan_in];
                for (g, &a) in row.iter_mut().zip(input) {
                    *g += dj * a;
                }
                grad.biases[l][j] += dj;
            }
            if l == 0 && !want_input {
                break;
            }
            let w = &self.weights[l];
            let mut upstream = vec![0.0; fan_in];
            for (j, &dj) in delta.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                for (u, &wv) in upstream.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                    *u += dj * wv;
                }
            }
            if l == 0 {
                return Some(upstream);
            }
            delta = upstream.iter().zip(&tr.pre[l - 1]).map(|(&u, &z)| u * self.activation.derivative(z)).collect();
        }
        None
    }

    /// Parameter gradient of `sum_i <dlogits_i, logits(x_i)>`.
    ///
    /// Every loss in the crate reduces to a choice of `dlogits` (cross-entropy:
    /// `(p - onehot) / m`, distillation KL: `(p_student - p_teacher) / m`).
    pub fn backward(&self, inputs: &[f64], dlogits: &[f64]) -> Result<Gradient> {
        let d = self.input_dim();
        let k = self.num_classes();
        if !inputs.len().is_multiple_of(d) || dlogits.len() != inputs.len() / d * k {
            return Err(LabError::Shape(format!(
                "backward: {} inputs of width {d} vs {} logit gradients of width {k}",
                inputs.len(),
                dlogits.len()
            )));
        }
        let mut grad = Gradient::zeros_like(self);
        for (x, dz) in inputs.chunks_exact(d).zip(dlogits.chunks_exact(k)) {
            let tr = self.trace(x);
            self.backprop_row(&tr, dz, &mut grad, false);
        }
        grad.check_finite()?;
        Ok(grad)
    }

    /// Gradient of the mean cross-entropy over `batch`, and the loss itself.
    pub fn grad_params(&self, batch: &Batch) -> Result<(f64, Gradient)> {
        self.check_batch(batch)?;
        let k = self.num_classes();
        let m = batch.len() as f64;
        let mut grad = Gradient::zeros_like(self);
        let mut loss = 0.0;
        for (i, &y) in batch.labels().iter().enumerate() {
            let tr = self.trace(batch.row(i));
            let p = softmax(tr.acts.last().expect("output layer"));
            loss -= p[y].max(PROB_FLOOR).ln();
            let mut dz = p;
            dz[y] -= 1.0;
            dz.iter_mut().for_each(|v| *v /= m);
            self.backprop_row(&tr, &dz, &mut grad, false);
        }
        let loss = loss / m;
        if !loss.is_finite() {
            return Err(LabError::Numeric(format!("non-finite loss {loss}")));
        }
        grad.check_finite()?;
        debug_assert_eq!(k, grad.biases.last().map(Vec::len).unwrap_or(0));
        Ok((loss, grad))
    }

    /// Mean cross-entropy over `batch` without gradients.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let fwd = self.forward(batch.inputs())?;
        Ok(cross_entropy(&fwd.probs, batch.labels(), fwd.classes))
    }

    /// Gradient of the single-sample cross-entropy with respect to `x`.
    pub fn grad_input(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(LabError::Shape(format!("input of width {} for a model of width {}", x.len(), self.input_dim())));
        }
        if y >= self.num_classes() {
            return Err(LabError::Shape(format!("label {y} out of range")));
        }
        let tr = self.trace(x);
        let mut dz = softmax(tr.acts.last().expect("output layer"));
        dz[y] -= 1.0;
        let mut scratch = Gradient::zeros_like(self);
        let g = self.backprop_row(&tr, &dz, &mut scratch, true).expect("input gradient requested");
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Numeric(format!("non-finite input gradient at coordinate {i}")));
        }
        Ok(g)
    }

    /// Adds `alpha * g` to the parameters.
    pub fn add_scaled(&mut self, g: &Gradient, alpha: f64) {
        for (w, gw) in self.weights.iter_mut().zip(&g.weights) {
            w.iter_mut().zip(gw).for_each(|(a, b)| *a += alpha * b);
        }
        for (w, gw) in self.biases.iter_mut().zip(&g.biases) {
            w.iter_mut().zip(gw).for_each(|(a, b)| *a += alpha * b);
        }
    }

    /// Bitwise parameter equality (distinguishes `0.0` from `-0.0`).
    pub fn bit_identical(&self, other: &MlpModel) -> bool {
        self.layer_dims == other.layer_dims
            && self.activation == other.activation
            && self.flat_params().iter().zip(other.flat_params().iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Gradient {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut()).flatten()
    }

    pub fn entries(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.biases.iter()).flatten()
    }

    pub fn norm(&self) -> f64 {
        self.entries().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.entries_mut().for_each(|v| *v *= s);
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &Gradient, alpha: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += alpha * y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += alpha * y);
        }
    }

    fn check_finite(&self) -> Result<()> {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.iter().chain(b).any(|v| !v.is_finite()) {
                return Err(LabError::Numeric(format!("non-finite gradient in layer {l}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(dims: &[usize]) -> MlpModel {
        let mut m = init_params(dims, Activation::Relu, 0).unwrap();
        m.weights.iter_mut().flatten().for_each(|v| *v = 0.0);
        m
    }

    #[test]
    fn init_shapes_and_zero_biases() {
        let m = init_params(&[4, 100, 3], Activation::Relu, 7).unwrap();
        assert_eq!(m.weights(0).len(), 100 * 4);
        assert_eq!(m.weights(1).len(), 3 * 100);
        assert!(m.biases(0).iter().chain(m.biases(1)).all(|&b| b == 0.0));
        let bound = 0.5;
        assert!(m.weights(0).iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(&[4, 100, 3], Activation::Relu, 7).unwrap();
        let b = init_params(&[4, 100, 3], Activation::Relu, 7).unwrap();
        assert!(a.bit_identical(&b));
        let c = init_params(&[4, 100, 3], Activation::Relu, 8).unwrap();
        assert!(!a.bit_identical(&c));
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(init_params(&[4], Activation::Relu, 7), Err(LabError::Config(_))));
        assert!(matches!(init_params(&[], Activation::Relu, 7), Err(LabError::Config(_))));
        assert!(matches!(init_params(&[4, 0, 3], Activation::Relu, 7), Err(LabError::Config(_))));
    }

    #[test]
    fn zero_model_gives_uniform_probabilities() {
        let m = zero_model(&[4, 8, 3]);
        let fwd = m.forward(&[0.3, 0.1, 0.9, 0.5]).unwrap();
        for p in fwd.prob_row(0) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_logit_zero_input() {
        // Two-logit encoding of w = [1, -1]: logit_1 - logit_0 = x . w.
        let m =
            MlpModel::from_parts(vec![2, 2], Activation::Relu, vec![vec![0.0, 0.0, 1.0, -1.0]], vec![vec![0.0, 0.0]]).unwrap();
        let p = m.probabilities(&[0.0, 0.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn probability_rows_sum_to_one() {
        let m = init_params(&[4, 16, 3], Activation::Tanh, 3).unwrap();
        let inputs: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).fract()).collect();
        let fwd = m.forward(&inputs).unwrap();
        assert_eq!(fwd.rows, 5);
        for i in 0..5 {
            let s: f64 = fwd.prob_row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(matches!(m.forward(&inputs[..7]), Err(LabError::Shape(_))));
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let third = 1.0 / 3.0;
        let uniform = vec![third; 6];
        assert!((cross_entropy(&uniform, &[0, 2], 3) - 3f64.ln()).abs() < 1e-12);
        let onehot = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(cross_entropy(&onehot, &[0, 1], 3), 0.0);
        let half = vec![0.5, 0.5, 0.5, 0.5];
        assert!((cross_entropy(&half, &[0, 1], 2) - 2f64.ln()).abs() < 1e-12);
        let zero = vec![0.0, 1.0];
        assert!((cross_entropy(&zero, &[0], 2) + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn zero_model_output_bias_gradient() {
        let m = zero_model(&[3, 5, 4]);
        let batch = Batch::new(vec![0.2, 0.4, 0.6], vec![2], 3).unwrap();
        let (_, g) = m.grad_params(&batch).unwrap();
        assert_eq!(g.biases[1], vec![0.25, 0.25, -0.75, 0.25]);
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let m = init_params(&[3, 6, 2], Activation::Relu, 11).unwrap();
        let x = vec![0.1, 0.5, 0.9, 0.3, 0.3, 0.7];
        let b1 = Batch::new(x.clone(), vec![0, 1], 3).unwrap();
        let b2 = Batch::new([x.clone(), x].concat(), vec![0, 1, 0, 1], 3).unwrap();
        let (l1, g1) = m.grad_params(&b1).unwrap();
        let (l2, g2) = m.grad_params(&b2).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.flat().iter().zip(g2.flat()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_input_gradient() {
        let m =
            MlpModel::from_parts(vec![2, 2], Activation::Relu, vec![vec![0.0, 0.0, 1.0, -1.0]], vec![vec![0.0, 0.0]]).unwrap();
        let g = m.grad_input(&[0.0, 0.0], 1).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_first_layer_blocks_input_gradient() {
        let mut m = init_params(&[3, 5, 2], Activation::Relu, 1).unwrap();
        m.weights[0].iter_mut().for_each(|v| *v = 0.0);
        let g = m.grad_input(&[0.2, 0.3, 0.4], 0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_params_roundtrip() {
        let m = init_params(&[3, 4, 2], Activation::Relu, 5).unwrap();
        let mut z = zero_model(&[3, 4, 2]);
        z.set_flat_params(&m.flat_params()).unwrap();
        assert!(z.bit_identical(&m));
        assert_eq!(m.group_layer(1), Some(1));
        assert_eq!(m.group_layer(2), Some(0));
        assert_eq!(m.group_layer(3), None);
    }

    #[test]
    fn label_out_of_range_is_shape_error() {
        let m = init_params(&[2, 3], Activation::Relu, 5).unwrap();
        let b = Batch::new(vec![0.1, 0.2], vec![3], 2).unwrap();
        assert!(matches!(m.grad_params(&b), Err(LabError::Shape(_))));
    }
}
