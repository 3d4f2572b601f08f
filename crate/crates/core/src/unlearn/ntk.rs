//! Closed-form NTK unlearning: remove the forget set's contribution from the
//! model linearized at the trained weights.
//!
//! With `J_r`, `J_f` the logit Jacobians at `w*`, `K_ab = J_a J_b^T`, and
//! residuals `e = y - f_0` of the linearized model at the anchor `w_0`:
//!
//! ```text
//! M   = (K_ff - K_rf^T K_rr^{-1} K_rf)^{-1}
//! V   = e_f - K_rf^T K_rr^{-1} e_r
//! P   = I - J_r^T K_rr^{-1} J_r
//! w_r = w* - P J_f^T M V
//! ```

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::datasets::{Dataset, UnlearnTask};
use crate::error::{config_err, LabError, Result};
use crate::nn::MlpModel;

/// Diagonal jitter applied only when a plain Cholesky factorization fails.
pub const NTK_JITTER: f64 = 1e-6;
/// Condition estimates above this attach a warning to the outcome.
pub const NTK_COND_WARN: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct NtkOutcome {
    pub model: MlpModel,
    pub warning: Option<String>,
    pub condition_estimate: f64,
    pub jitter_used: bool,
}

/// Logit Jacobian at `model`: one row per (sample, class), one column per
/// parameter in flat order.
pub fn logit_jacobian(model: &MlpModel, dataset: &Dataset, indices: &[usize]) -> Result<DMatrix<f64>> {
    let k = model.num_classes();
    let p = model.num_params();
    let mut j = DMatrix::zeros(indices.len() * k, p);
    for (r, &i) in indices.iter().enumerate() {
        let x = dataset.row(i);
        for c in 0..k {
            let mut dz = vec![0.0; k];
            dz[c] = 1.0;
            let g = model.backward(x, &dz)?.flat();
            j.row_mut(r * k + c).copy_from_slice(&g);
        }
    }
    Ok(j)
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
    jittered: bool,
    cond: f64,
}

fn factor(mut mat: DMatrix<f64>, what: &str) -> Result<Factor> {
    mat = (&mat + mat.transpose()) * 0.5;
    let (chol, jittered) = match mat.clone().cholesky() {
        Some(c) => (c, false),
        None => {
            let n = mat.nrows();
            let c = (&mat + DMatrix::identity(n, n) * NTK_JITTER)
                .cholesky()
                .ok_or_else(|| LabError::Numeric(format!("{what} is not positive definite even with jitter")))?;
            (c, true)
        }
    };
    let eig = mat.symmetric_eigenvalues();
    let shift = if jittered { NTK_JITTER } else { 0.0 };
    let (lo, hi) = (eig.min() + shift, eig.max() + shift);
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    Ok(Factor { chol, jittered, cond })
}

fn onehot(labels: &[usize], indices: &[usize], k: usize) -> DVector<f64> {
    let mut y = DVector::zeros(indices.len() * k);
    for (r, &i) in indices.iter().enumerate() {
        y[r * k + labels[i]] = 1.0;
    }
    y
}

fn stacked_logits(model: &MlpModel, dataset: &Dataset, indices: &[usize]) -> DVector<f64> {
    DVector::from_iterator(indices.len() * model.num_classes(), indices.iter().flat_map(|&i| model.logits(dataset.row(i))))
}

/// `max |P J_r^T|` for the projection built from `j_r`; zero up to round-off
/// when `K_rr` is well conditioned.
pub fn projection_residual(j_r: &DMatrix<f64>) -> Result<f64> {
    let k_rr = j_r * j_r.transpose();
    let f = factor(k_rr.clone(), "K_rr")?;
    let jt = j_r.transpose();
    let projected = &jt - &jt * f.chol.solve(&k_rr);
    Ok(projected.amax())
}

/// NTK unlearning of `task.forget_idx` from `original`, linearized around the
/// original weights with residuals measured at `anchor` (the original itself
/// when `None`).
pub fn ntk_removal(original: &MlpModel, anchor: Option<&MlpModel>, task: &UnlearnTask) -> Result<NtkOutcome> {
    let anchor = anchor.unwrap_or(original);
    if anchor.layer_dims() != original.layer_dims() {
        return config_err("NTK anchor and original model have different architectures");
    }
    if task.forget_idx.is_empty() {
        return Ok(NtkOutcome { model: original.clone(), warning: None, condition_estimate: 1.0, jitter_used: false });
    }
    if task.retain_idx.is_empty() {
        return config_err("NTK unlearning needs a non-empty retain set");
    }
    let ds = &task.dataset;
    let k = original.num_classes();
    let w_star = DVector::from_vec(original.flat_params());
    let shift = DVector::from_vec(anchor.flat_params()) - &w_star;

    let j_r = logit_jacobian(original, ds, &task.retain_idx)?;
    let j_f = logit_jacobian(original, ds, &task.forget_idx)?;
    let e_r = onehot(ds.labels(), &task.retain_idx, k) - (stacked_logits(original, ds, &task.retain_idx) + &j_r * &shift);
    let e_f = onehot(ds.labels(), &task.forget_idx, k) - (stacked_logits(original, ds, &task.forget_idx) + &j_f * &shift);

    let k_rr = &j_r * j_r.transpose();
    let k_rf = &j_r * j_f.transpose();
    let k_ff = &j_f * j_f.transpose();
    let rr = factor(k_rr, "K_rr")?;
    let a = rr.chol.solve(&k_rf);
    let schur = k_ff - k_rf.transpose() * &a;
    let v = e_f - a.transpose() * e_r;
    let ss = factor(schur, "forget Schur complement")?;
    let u = ss.chol.solve(&v);
    let q = j_f.transpose() * u;
    let delta = &q - j_r.transpose() * rr.chol.solve(&(&j_r * &q));
    let w_r = w_star - delta;

    let mut model = original.clone();
    model.set_flat_params(w_r.as_slice())?;
    if !model.is_finite() {
        return Err(LabError::Numeric("NTK update produced non-finite parameters".into()));
    }
    let cond = rr.cond.max(ss.cond);
    let warning = (cond > NTK_COND_WARN || rr.jittered || ss.jittered).then(|| {
        format!(
            "NTK kernel is ill-conditioned (condition estimate {cond:.3e}{})",
            if rr.jittered || ss.jittered { ", jitter applied" } else { "" }
        )
    });
    Ok(NtkOutcome { model, warning, condition_estimate: cond, jitter_used: rr.jittered || ss.jittered })
}
