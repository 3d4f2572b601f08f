//! Fisher-information unlearners: Fisher forgetting (noise injection) and
//! selective synaptic dampening.

use rand_distr::{Distribution, StandardNormal};

use crate::datasets::{Dataset, UnlearnTask};
use crate::error::{config_err, Result};
use crate::nn::MlpModel;
use crate::rng::{substream, LabRng};

/// Variance floor for Fisher noise.
pub const FISHER_FLOOR: f64 = 1e-8;
/// Denominator floor for the SSD ratio.
pub const SSD_FLOOR: f64 = 1e-12;

/// Diagonal empirical Fisher: the mean squared per-sample cross-entropy
/// gradient over `indices`, in flat parameter order. Empty index sets give zeros.
pub fn diag_fisher(model: &MlpModel, dataset: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; model.num_params()];
    for &i in indices {
        let batch = dataset.batch(&[i])?;
        let (_, g) = model.grad_params(&batch)?;
        for (a, v) in acc.iter_mut().zip(g.flat()) {
            *a += v * v;
        }
    }
    if !indices.is_empty() {
        let n = indices.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    Ok(acc)
}

/// Adds `N(0, alpha / max(F_i, floor))` noise to each parameter.
pub fn fisher_noise_with(original: &MlpModel, fisher: &[f64], alpha: f64, rng: &mut LabRng) -> Result<MlpModel> {
    if fisher.len() != original.num_params() {
        return config_err(format!("Fisher diagonal of length {} for {} parameters", fisher.len(), original.num_params()));
    }
    let mut model = original.clone();
    if alpha == 0.0 {
        return Ok(model);
    }
    let mut params = original.flat_params();
    for (w, &f) in params.iter_mut().zip(fisher) {
        let z: f64 = StandardNormal.sample(rng);
        *w += (alpha / f.max(FISHER_FLOOR)).sqrt() * z;
    }
    model.set_flat_params(&params)?;
    Ok(model)
}

/// Fisher forgetting with the retain-set Fisher diagonal.
pub fn fisher_noise_unlearn(original: &MlpModel, task: &UnlearnTask, alpha: f64, seed: u64) -> Result<MlpModel> {
    if !(alpha >= 0.0) {
        return config_err(format!("fisher_alpha must be non-negative, got {alpha}"));
    }
    if alpha == 0.0 {
        return Ok(original.clone());
    }
    let fisher = diag_fisher(original, &task.dataset, &task.retain_idx)?;
    fisher_noise_with(original, &fisher, alpha, &mut substream(seed, &[0xF15]))
}

/// Scales parameter `i` by `min(lambda * F_r / F_f, 1)` wherever `F_f > alpha * F_r`.
pub fn ssd_dampen_with(params: &[f64], fisher_retain: &[f64], fisher_forget: &[f64], alpha: f64, lambda: f64) -> Vec<f64> {
    params
        .iter()
        .zip(fisher_retain)
        .zip(fisher_forget)
        .map(|((&w, &fr), &ff)| if ff > alpha * fr { w * (lambda * fr / ff.max(SSD_FLOOR)).min(1.0) } else { w })
        .collect()
}

/// Selective synaptic dampening from retain and forget Fisher diagonals.
pub fn ssd_dampen(original: &MlpModel, task: &UnlearnTask, alpha: f64, lambda: f64) -> Result<MlpModel> {
    if !(alpha > 0.0 && lambda > 0.0) {
        return config_err(format!("ssd alpha and lambda must be positive, got {alpha} and {lambda}"));
    }
    let fr = diag_fisher(original, &task.dataset, &task.retain_idx)?;
    let ff = diag_fisher(original, &task.dataset, &task.forget_idx)?;
    let mut model = original.clone();
    model.set_flat_params(&ssd_dampen_with(&original.flat_params(), &fr, &ff, alpha, lambda))?;
    Ok(model)
}
