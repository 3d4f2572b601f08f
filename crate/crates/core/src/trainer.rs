//! Mini-batch SGD with heavy-ball momentum, weight decay, cosine-annealed
//! step size, and global gradient-norm clipping.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{config_err, LabError, Result};
use crate::nn::{Gradient, MlpModel};
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "lr")]
    pub lr0: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub clip_norm: Option<f64>,
    #[serde(default = "default_schedule_t")]
    pub schedule_t: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_batch_size() -> usize {
    128
}

fn default_schedule_t() -> usize {
    200
}

impl Default for TrainConfig {
    /// lr 0.01, momentum 0.9, weight decay 5e-4, batch 128, clip 1.0, 200-step cosine cap.
    fn default() -> Self {
        Self {
            lr0: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            epochs: 10,
            clip_norm: Some(1.0),
            schedule_t: 200,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return config_err(format!("lr must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return config_err(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return config_err(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return config_err("batch_size must be positive");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return config_err(format!("clip_norm must be positive, got {c}"));
            }
        }
        if self.schedule_t == 0 {
            return config_err("schedule_t must be positive");
        }
        Ok(())
    }
}

/// `lr0 * (1 + cos(pi * step / T)) / 2`, with `step` clamped to `T`.
pub fn cosine_lr(step: usize, t: usize, lr0: f64) -> f64 {
    let s = step.min(t) as f64;
    lr0 * (1.0 + (std::f64::consts::PI * s / t as f64).cos()) / 2.0
}

/// Rescales `grad` so its global l2 norm is at most `clip_norm`.
pub fn clip_gradient(mut grad: Gradient, clip_norm: f64) -> Gradient {
    let norm = grad.norm();
    if norm > clip_norm {
        grad.scale(clip_norm / norm);
    }
    grad
}

/// Optimizer state shared by training, fine-tuning, and every unlearning loop.
#[derive(Clone, Debug)]
pub struct Sgd {
    config: TrainConfig,
    velocity: Gradient,
    step: usize,
    trainable: Vec<bool>,
}

impl Sgd {
    pub fn new(model: &MlpModel, config: &TrainConfig) -> Self {
        Self { config: config.clone(), velocity: Gradient::zeros_like(model), step: 0, trainable: vec![true; model.num_layers()] }
    }

    /// Restricts updates to layers flagged `true`; the rest stay frozen.
    pub fn with_trainable(mut self, trainable: Vec<bool>) -> Self {
        self.trainable = trainable;
        self
    }

    pub fn lr(&self) -> f64 {
        cosine_lr(self.step, self.config.schedule_t, self.config.lr0)
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One update from a raw loss gradient.
    pub fn step(&mut self, model: &mut MlpModel, grad: Gradient) {
        self.step_with_noise(model, grad, None);
    }

    /// Clip, then add `noise` (if any), then weight decay, momentum, and the step.
    pub fn step_with_noise(&mut self, model: &mut MlpModel, grad: Gradient, noise: Option<&Gradient>) {
        let mut g = match self.config.clip_norm {
            Some(c) => clip_gradient(grad, c),
            None => grad,
        };
        if let Some(n) = noise {
            g.add_scaled(n, 1.0);
        }
        let lr = self.lr();
        let (mu, wd) = (self.config.momentum, self.config.weight_decay);
        for l in 0..model.num_layers() {
            if !self.trainable[l] {
                continue;
            }
            let (params, grads, vel) = (&mut model.weights[l], &g.weights[l], &mut self.velocity.weights[l]);
            for ((p, &gi), v) in params.iter_mut().zip(grads).zip(vel.iter_mut()) {
                *v = mu * *v + (gi + wd * *p);
                *p -= lr * *v;
            }
            let (params, grads, vel) = (&mut model.biases[l], &g.biases[l], &mut self.velocity.biases[l]);
            for ((p, &gi), v) in params.iter_mut().zip(grads).zip(vel.iter_mut()) {
                *v = mu * *v + (gi + wd * *p);
                *p -= lr * *v;
            }
        }
        self.step = (self.step + 1).min(self.config.schedule_t);
    }
}

/// Shuffled mini-batches of `indices` for one epoch.
pub fn epoch_batches(indices: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(&mut substream(seed, &[0x7A1, epoch as u64]));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Runs one epoch of cross-entropy SGD; returns the sample-weighted mean batch loss.
pub fn run_epoch(
    model: &mut MlpModel,
    opt: &mut Sgd,
    dataset: &Dataset,
    indices: &[usize],
    config: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for (b, idx) in epoch_batches(indices, config.batch_size, config.seed, epoch).iter().enumerate() {
        let batch = dataset.batch(idx)?;
        let (loss, grad) = model.grad_params(&batch).map_err(|e| LabError::Numeric(format!("epoch {epoch}, batch {b}: {e}")))?;
        total += loss * idx.len() as f64;
        opt.step(model, grad);
    }
    Ok(total / indices.len() as f64)
}

/// Trains `model` on `indices` of `dataset`; returns the model and per-epoch losses.
pub fn train(model: &MlpModel, dataset: &Dataset, indices: &[usize], config: &TrainConfig) -> Result<(MlpModel, Vec<f64>)> {
    config.validate()?;
    if indices.is_empty() {
        return config_err("training index set is empty");
    }
    let mut model = model.clone();
    let mut opt = Sgd::new(&model, config);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        history.push(run_epoch(&mut model, &mut opt, dataset, indices, config, epoch)?);
    }
    Ok((model, history))
}

pub fn loss_history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        let _ = writeln!(out, "{},{:.6e}", e + 1, l);
    }
    out
}

pub fn write_loss_history(path: impl AsRef<Path>, history: &[f64]) -> Result<()> {
    std::fs::write(path, loss_history_csv(history))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::gen_blobs;
    use crate::nn::{init_params, Activation};

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 0.1), 0.1);
        assert!(cosine_lr(100, 100, 0.1).abs() < 1e-18);
        assert!((cosine_lr(50, 100, 0.1) - 0.05).abs() < 1e-15);
        assert_eq!(cosine_lr(150, 100, 0.1), cosine_lr(100, 100, 0.1));
    }

    fn grad_with(values: &[f64]) -> Gradient {
        Gradient { weights: vec![values.to_vec()], biases: vec![vec![]] }
    }

    #[test]
    fn clipping_branches() {
        let g = clip_gradient(grad_with(&[2.0, 0.0]), 1.0);
        assert_eq!(g.weights[0], vec![1.0, 0.0]);
        let g = clip_gradient(grad_with(&[0.3, 0.4]), 1.0);
        assert_eq!(g.weights[0], vec![0.3, 0.4]);
        let g = clip_gradient(grad_with(&[0.0, 0.0]), 1.0);
        assert_eq!(g.weights[0], vec![0.0, 0.0]);
        let g = clip_gradient(grad_with(&[1.2, 1.6]), 1.0);
        assert!((g.weights[0][0] - 0.6).abs() < 1e-15 && (g.weights[0][1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let d = gen_blobs(3, 10, 2, 0.1, 1).unwrap();
        let m = init_params(&[2, 8, 3], Activation::Relu, 1).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let idx: Vec<usize> = (0..d.len()).collect();
        let (out, hist) = train(&m, &d, &idx, &cfg).unwrap();
        assert!(out.bit_identical(&m));
        assert!(hist.is_empty());
    }

    #[test]
    fn empty_indices_rejected() {
        let d = gen_blobs(3, 10, 2, 0.1, 1).unwrap();
        let m = init_params(&[2, 8, 3], Activation::Relu, 1).unwrap();
        assert!(matches!(train(&m, &d, &[], &TrainConfig::default()), Err(LabError::Config(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let d = gen_blobs(3, 20, 2, 0.2, 1).unwrap();
        let m = init_params(&[2, 8, 3], Activation::Relu, 1).unwrap();
        let idx: Vec<usize> = (0..d.len()).collect();
        let cfg = TrainConfig { epochs: 5, batch_size: 16, ..TrainConfig::default() };
        let (a, ha) = train(&m, &d, &idx, &cfg).unwrap();
        let (b, hb) = train(&m, &d, &idx, &cfg).unwrap();
        assert!(a.bit_identical(&b));
        assert_eq!(ha, hb);
    }

    #[test]
    fn frozen_layers_do_not_move() {
        let d = gen_blobs(3, 20, 2, 0.2, 1).unwrap();
        let mut m = init_params(&[2, 8, 3], Activation::Relu, 1).unwrap();
        let before = m.clone();
        let mut opt = Sgd::new(&m, &TrainConfig::default()).with_trainable(vec![false, true]);
        let (_, g) = m.grad_params(&d.batch(&[0, 1, 2, 30]).unwrap()).unwrap();
        opt.step(&mut m, g);
        assert_eq!(m.weights(0), before.weights(0));
        assert_ne!(m.weights(1), before.weights(1));
    }

    #[test]
    fn loss_csv_has_header() {
        assert_eq!(loss_history_csv(&[0.5]), "epoch,loss\n1,5.000000e-1\n");
    }
}
