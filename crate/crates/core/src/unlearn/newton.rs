//! Certified-removal style unlearning: one-vs-rest logistic heads on frozen
//! hidden features, then a damped Newton step on the retain loss.

use nalgebra::{DMatrix, DVector};

use crate::datasets::UnlearnTask;
use crate::error::{config_err, LabError, Result};
use crate::nn::MlpModel;

const FIT_ITERS: usize = 50;
const FIT_TOL: f64 = 1e-10;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `theta - lambda * H^{-1} g`, solved by Cholesky.
pub fn newton_step(theta: &DVector<f64>, grad: &DVector<f64>, hessian: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>> {
    let chol = hessian.clone().cholesky().ok_or_else(|| LabError::Numeric("Newton Hessian is not positive definite".into()))?;
    Ok(theta - chol.solve(grad) * lambda)
}

/// Frozen features of every dataset row with a trailing bias coordinate.
pub fn frozen_features(model: &MlpModel, task: &UnlearnTask) -> Vec<Vec<f64>> {
    (0..task.dataset.len())
        .map(|i| {
            let mut phi = model.penultimate(task.dataset.row(i));
            phi.push(1.0);
            phi
        })
        .collect()
}

/// Gradient and Hessian of the mean binary logistic loss of head `theta`
/// for class `class` over `rows`, plus `l2 / 2 * |theta|^2`.
fn head_derivatives(
    theta: &DVector<f64>,
    features: &[Vec<f64>],
    labels: &[usize],
    rows: &[usize],
    class: usize,
    l2: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let p = theta.len();
    let mut g = theta * l2;
    let mut h = DMatrix::identity(p, p) * l2;
    let n = rows.len().max(1) as f64;
    for &i in rows {
        let phi = DVector::from_column_slice(&features[i]);
        let s = sigmoid(theta.dot(&phi));
        let y = if labels[i] == class { 1.0 } else { 0.0 };
        g.axpy((s - y) / n, &phi, 1.0);
        h.ger(s * (1.0 - s) / n, &phi, &phi, 1.0);
    }
    (g, h)
}

/// Fits one l2-regularized logistic head per class by Newton's method.
pub fn fit_ovr_heads(features: &[Vec<f64>], labels: &[usize], rows: &[usize], classes: usize, l2: f64) -> Result<Vec<Vec<f64>>> {
    if rows.is_empty() {
        return config_err("cannot fit heads on an empty set");
    }
    let p = features[rows[0]].len();
    (0..classes)
        .map(|k| {
            let mut theta = DVector::zeros(p);
            for _ in 0..FIT_ITERS {
                let (g, h) = head_derivatives(&theta, features, labels, rows, k, l2);
                let next = newton_step(&theta, &g, &h, 1.0)?;
                let moved = (&next - &theta).norm();
                theta = next;
                if moved < FIT_TOL {
                    break;
                }
            }
            Ok(theta.as_slice().to_vec())
        })
        .collect()
}

/// One damped Newton step per head on the retain-set logistic loss.
pub fn newton_removal(
    heads: &[Vec<f64>],
    features: &[Vec<f64>],
    task: &UnlearnTask,
    cr_lambda: f64,
    l2: f64,
) -> Result<Vec<Vec<f64>>> {
    if task.retain_idx.is_empty() {
        return config_err("CR needs a non-empty retain set");
    }
    let labels = task.dataset.labels();
    heads
        .iter()
        .enumerate()
        .map(|(k, head)| {
            let theta = DVector::from_column_slice(head);
            let (g, h) = head_derivatives(&theta, features, labels, &task.retain_idx, k, l2);
            Ok(newton_step(&theta, &g, &h, cr_lambda)?.as_slice().to_vec())
        })
        .collect()
}

/// Refits the output layer as one-vs-rest heads on the full training set and
/// applies the removal step for the forget set.
pub fn cr_unlearn(original: &MlpModel, task: &UnlearnTask, cr_lambda: f64, l2: f64) -> Result<MlpModel> {
    if !(cr_lambda >= 0.0 && l2 > 0.0) {
        return config_err(format!("CR needs cr_lambda >= 0 and cr_l2 > 0, got {cr_lambda} and {l2}"));
    }
    let features = frozen_features(original, task);
    let labels = task.dataset.labels();
    let k = original.num_classes();
    let heads = fit_ovr_heads(&features, labels, &task.train_idx(), k, l2)?;
    let heads = newton_removal(&heads, &features, task, cr_lambda, l2)?;
    let mut model = original.clone();
    let out = model.num_layers() - 1;
    let h = model.layer_dims()[out];
    for (c, head) in heads.iter().enumerate() {
        model.weights_mut(out)[c * h..(c + 1) * h].copy_from_slice(&head[..h]);
        model.biases_mut(out)[c] = head[h];
    }
    if !model.is_finite() {
        return Err(LabError::Numeric("CR produced non-finite output weights".into()));
    }
    Ok(model)
}
