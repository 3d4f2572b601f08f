//! RURK: fine-tune on the retain set while pushing up the loss on the forget
//! set and on perturbed copies of it.
//!
//! Per step, with a retain batch and the next forget batch:
//!
//! ```text
//! loss = CE(retain) - lambda_f * CE(forget) - lambda_a * CE(vulnerable forget copies)
//! ```

use super::finetune::{run_loop, StepObserver, StepUpdate};
use super::MethodHyper;
use crate::attacks::find_vulnerable;
use crate::datasets::UnlearnTask;
use crate::error::{config_err, Result};
use crate::nn::{Batch, Gradient, MlpModel};
use crate::rng::substream;
use crate::trainer::Sgd;

/// Cross-entropy gradient on `v` vulnerable copies of every row of `forget`.
fn adversarial_forget_grad(model: &MlpModel, forget: &Batch, hyper: &MethodHyper, step: usize) -> Result<Gradient> {
    let r = &hyper.rurk;
    let mut rng = substream(hyper.seed, &[0xADF, step as u64]);
    let mut inputs = Vec::with_capacity(forget.len() * r.v * forget.dim());
    let mut labels = Vec::with_capacity(forget.len() * r.v);
    for (i, &y) in forget.labels().iter().enumerate() {
        for x in find_vulnerable(model, forget.row(i), y, r.tau, r.v, r.search(), r.clamp, &mut rng)? {
            inputs.extend(x);
            labels.push(y);
        }
    }
    let batch = Batch::new(inputs, labels, forget.dim())?;
    Ok(model.grad_params(&batch)?.1)
}

/// Runs RURK with `hyper.rurk`; `observer` sees the model after every step.
pub fn rurk_unlearn(
    original: &MlpModel,
    task: &UnlearnTask,
    hyper: &MethodHyper,
    observer: &mut StepObserver<'_>,
) -> Result<MlpModel> {
    hyper.validate()?;
    if task.retain_idx.is_empty() {
        return config_err("RURK needs a non-empty retain set");
    }
    let config = hyper.train_config();
    let (lf, la) = (hyper.rurk.lambda_f, hyper.rurk.lambda_a);
    let mut model = original.clone();
    let mut opt = Sgd::new(&model, &config);
    run_loop(
        &mut model,
        &mut opt,
        &task.dataset,
        &task.retain_idx,
        Some(&task.forget_idx),
        &config,
        |m, b, fb, step| {
            let mut g = m.grad_params(b)?.1;
            if let Some(fb) = fb {
                if lf > 0.0 {
                    g.add_scaled(&m.grad_params(fb)?.1, -lf);
                }
                if la > 0.0 {
                    g.add_scaled(&adversarial_forget_grad(m, fb, hyper, step)?, -la);
                }
            }
            Ok(StepUpdate { grad: g, noise: None })
        },
        observer,
    )?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_blobs, split_unlearn, ForgetMode};
    use crate::nn::{init_params, Activation};
    use crate::trainer::{train, TrainConfig};
    use crate::unlearn::{finetune::finetune_unlearn_observed, Method, VulnerableMethod};

    fn setup() -> (MlpModel, UnlearnTask) {
        let ds = gen_blobs(3, 20, 4, 0.3, 8).unwrap();
        let task = split_unlearn(&ds, ForgetMode::Sample, 0, 0.25, 0.2, 3).unwrap();
        let init = init_params(&[4, 8, 3], Activation::Relu, 5).unwrap();
        let cfg = TrainConfig { epochs: 5, batch_size: 16, ..TrainConfig::default() };
        (train(&init, &task.dataset, &task.train_idx(), &cfg).unwrap().0, task)
    }

    fn snapshots(f: impl FnOnce(&mut StepObserver<'_>)) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        f(&mut |_, m: &MlpModel| out.push(m.flat_params()));
        out
    }

    #[test]
    fn zero_lambdas_match_gd_step_for_step() {
        let (orig, task) = setup();
        let mut h = MethodHyper { method: Method::Rurk, epochs: 3, batch_size: 16, ..MethodHyper::default() };
        h.rurk.lambda_f = 0.0;
        h.rurk.lambda_a = 0.0;
        let rurk = snapshots(|o| {
            rurk_unlearn(&orig, &task, &h, o).unwrap();
        });
        let gd_h = MethodHyper { method: Method::Gd, ..h.clone() };
        let gd = snapshots(|o| {
            finetune_unlearn_observed(&orig, &task, &gd_h, o).unwrap();
        });
        assert_eq!(rurk.len(), gd.len());
        for (a, b) in rurk.iter().zip(&gd) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn forget_terms_raise_the_forget_loss_relative_to_gd() {
        let (orig, task) = setup();
        let fb = task.dataset.batch(&task.forget_idx).unwrap();
        let mut h = MethodHyper { method: Method::Rurk, epochs: 4, batch_size: 16, lr: 0.05, ..MethodHyper::default() };
        h.rurk.lambda_f = 0.5;
        h.rurk.lambda_a = 0.5;
        let rurk = rurk_unlearn(&orig, &task, &h, &mut |_, _| {}).unwrap();
        let gd =
            finetune_unlearn_observed(&orig, &task, &MethodHyper { method: Method::Gd, ..h.clone() }, &mut |_, _| {}).unwrap();
        assert!(rurk.loss(&fb).unwrap() > gd.loss(&fb).unwrap());
    }

    #[test]
    fn rurk_is_deterministic_for_every_search() {
        let (orig, task) = setup();
        for method in [VulnerableMethod::Ball, VulnerableMethod::Fgsm, VulnerableMethod::Pgd] {
            let mut h = MethodHyper { method: Method::Rurk, epochs: 1, batch_size: 16, ..MethodHyper::default() };
            h.rurk.attack_method = method;
            h.rurk.v = 2;
            let a = rurk_unlearn(&orig, &task, &h, &mut |_, _| {}).unwrap();
            let b = rurk_unlearn(&orig, &task, &h, &mut |_, _| {}).unwrap();
            assert!(a.bit_identical(&b), "{method:?}");
        }
    }
}
