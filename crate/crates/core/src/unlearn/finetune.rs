//! Gradient-based unlearning: GD, NGD, GA, NegGrad+, EU-k, CF-k, SCRUB.

use rand_distr::{Distribution, StandardNormal};

use super::{Method, MethodHyper};
use crate::datasets::{Dataset, UnlearnTask};
use crate::error::{config_err, LabError, Result};
use crate::nn::{init_layer_weights, softmax, Batch, Gradient, MlpModel};
use crate::rng::substream;
use crate::trainer::{epoch_batches, Sgd, TrainConfig};

/// Called after every optimizer step with the global step index and the model.
pub type StepObserver<'a> = dyn FnMut(usize, &MlpModel) + 'a;

/// Endless reshuffled mini-batches of the forget set, paired with retain batches.
pub(crate) struct ForgetCycler<'a> {
    indices: &'a [usize],
    batch_size: usize,
    seed: u64,
    pass: usize,
    queue: std::vec::IntoIter<Vec<usize>>,
}

impl<'a> ForgetCycler<'a> {
    pub(crate) fn new(indices: &'a [usize], batch_size: usize, seed: u64) -> Self {
        Self { indices, batch_size, seed, pass: 0, queue: Vec::new().into_iter() }
    }

    pub(crate) fn next_batch(&mut self) -> Option<Vec<usize>> {
        if self.indices.is_empty() {
            return None;
        }
        if let Some(b) = self.queue.next() {
            return Some(b);
        }
        let seed = self.seed ^ 0xF0_F0F0;
        self.queue = epoch_batches(self.indices, self.batch_size, seed, self.pass).into_iter();
        self.pass += 1;
        self.queue.next()
    }
}

/// What one step of a loop hands to the optimizer.
pub(crate) struct StepUpdate {
    pub grad: Gradient,
    pub noise: Option<Gradient>,
}

/// Mini-batch loop over `primary`, optionally pairing each batch with a
/// forget batch. `grad_fn(model, batch, forget_batch, step)` builds the update.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_loop<F>(
    model: &mut MlpModel,
    opt: &mut Sgd,
    dataset: &Dataset,
    primary: &[usize],
    paired: Option<&[usize]>,
    config: &TrainConfig,
    mut grad_fn: F,
    observer: &mut StepObserver<'_>,
) -> Result<()>
where
    F: FnMut(&MlpModel, &Batch, Option<&Batch>, usize) -> Result<StepUpdate>,
{
    let mut cycler = paired.map(|p| ForgetCycler::new(p, config.batch_size, config.seed));
    let mut step = 0;
    for epoch in 0..config.epochs {
        for (b, idx) in epoch_batches(primary, config.batch_size, config.seed, epoch).iter().enumerate() {
            let batch = dataset.batch(idx)?;
            let forget = match cycler.as_mut().and_then(ForgetCycler::next_batch) {
                Some(fidx) => Some(dataset.batch(&fidx)?),
                None => None,
            };
            let update = grad_fn(model, &batch, forget.as_ref(), step)
                .map_err(|e| LabError::Numeric(format!("epoch {epoch}, batch {b}: {e}")))?;
            opt.step_with_noise(model, update.grad, update.noise.as_ref());
            if !model.is_finite() {
                return Err(LabError::Numeric(format!("epoch {epoch}, batch {b}: parameters became non-finite")));
            }
            observer(step, model);
            step += 1;
        }
    }
    Ok(())
}

fn ce_grad(model: &MlpModel, batch: &Batch) -> Result<Gradient> {
    Ok(model.grad_params(batch)?.1)
}

fn gaussian_like(model: &MlpModel, sigma: f64, seed: u64, step: usize) -> Gradient {
    let mut rng = substream(seed, &[0x46D, step as u64]);
    let mut g = Gradient::zeros_like(model);
    g.entries_mut().for_each(|v| {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = sigma * z;
    });
    g
}

/// Gradient of `alpha * KL(teacher || student) + gamma * CE` on `batch`.
fn distill_grad(student: &MlpModel, teacher: &MlpModel, batch: &Batch, kl_weight: f64, ce_weight: f64) -> Result<Gradient> {
    let k = student.num_classes();
    let m = batch.len() as f64;
    let mut dlogits = Vec::with_capacity(batch.len() * k);
    for (i, &y) in batch.labels().iter().enumerate() {
        let x = batch.row(i);
        let s = student.probabilities(x);
        let t = teacher.probabilities(x);
        for c in 0..k {
            let onehot = if c == y { 1.0 } else { 0.0 };
            dlogits.push((kl_weight * (s[c] - t[c]) + ce_weight * (s[c] - onehot)) / m);
        }
    }
    student.backward(batch.inputs(), &dlogits)
}

/// Mean `KL(teacher || student)` over the rows of `batch`.
pub fn distill_kl(student: &MlpModel, teacher: &MlpModel, batch: &Batch) -> f64 {
    let mut total = 0.0;
    for i in 0..batch.len() {
        let x = batch.row(i);
        let (s, t) = (softmax(&student.logits(x)), softmax(&teacher.logits(x)));
        total += t
            .iter()
            .zip(&s)
            .filter(|(&ti, _)| ti > 0.0)
            .map(|(&ti, &si)| ti * (ti.ln() - si.max(crate::nn::PROB_FLOOR).ln()))
            .sum::<f64>();
    }
    total / batch.len() as f64
}

/// Re-draws the parameters of the last `k` groups (group 1 = output layer).
fn reinit_last(model: &mut MlpModel, k: usize, seed: u64) {
    let dims = model.layer_dims().to_vec();
    for g in 1..=k {
        let l = model.group_layer(g).expect("k validated against depth");
        let fresh = init_layer_weights(dims[l], dims[l + 1], seed ^ 0xE0E0, l);
        model.weights_mut(l).copy_from_slice(&fresh);
        model.biases_mut(l).iter_mut().for_each(|b| *b = 0.0);
    }
}

fn last_k_mask(model: &MlpModel, k: usize) -> Vec<bool> {
    let layers = model.num_layers();
    (0..layers).map(|l| l >= layers - k).collect()
}

/// Runs a fine-tuning unlearner (`hyper.method` must be one of GD, NGD, GA,
/// NegGrad+, EU-k, CF-k, SCRUB).
pub fn finetune_unlearn(original: &MlpModel, task: &UnlearnTask, hyper: &MethodHyper) -> Result<MlpModel> {
    finetune_unlearn_observed(original, task, hyper, &mut |_, _| {})
}

/// [`finetune_unlearn`] with a per-step observer.
pub fn finetune_unlearn_observed(
    original: &MlpModel,
    task: &UnlearnTask,
    hyper: &MethodHyper,
    observer: &mut StepObserver<'_>,
) -> Result<MlpModel> {
    hyper.validate()?;
    let config = hyper.train_config();
    let ds = &task.dataset;
    let mut model = original.clone();
    let retain = task.retain_idx.as_slice();
    let forget = task.forget_idx.as_slice();
    if hyper.method != Method::Ga && retain.is_empty() {
        return config_err(format!("{} needs a non-empty retain set", hyper.method.label()));
    }
    match hyper.method {
        Method::Gd => {
            let mut opt = Sgd::new(&model, &config);
            run_loop(
                &mut model,
                &mut opt,
                ds,
                retain,
                None,
                &config,
                |m, b, _, _| Ok(StepUpdate { grad: ce_grad(m, b)?, noise: None }),
                observer,
            )?;
        }
        Method::Ngd => {
            let sigma = hyper.sigma;
            let mut opt = Sgd::new(&model, &config);
            run_loop(
                &mut model,
                &mut opt,
                ds,
                retain,
                None,
                &config,
                |m, b, _, step| {
                    let noise = (sigma > 0.0).then(|| gaussian_like(m, sigma, config.seed, step));
                    Ok(StepUpdate { grad: ce_grad(m, b)?, noise })
                },
                observer,
            )?;
        }
        Method::Ga => {
            if forget.is_empty() {
                return Ok(model);
            }
            let mut opt = Sgd::new(&model, &config);
            run_loop(
                &mut model,
                &mut opt,
                ds,
                forget,
                None,
                &config,
                |m, b, _, _| {
                    let mut g = ce_grad(m, b)?;
                    g.scale(-1.0);
                    Ok(StepUpdate { grad: g, noise: None })
                },
                observer,
            )?;
        }
        Method::NeggradPlus => {
            let beta = hyper.beta;
            let mut opt = Sgd::new(&model, &config);
            run_loop(
                &mut model,
                &mut opt,
                ds,
                retain,
                Some(forget),
                &config,
                |m, b, fb, _| {
                    let mut g = ce_grad(m, b)?;
                    if let (Some(fb), true) = (fb, beta > 0.0) {
                        g.add_scaled(&ce_grad(m, fb)?, -beta);
                    }
                    Ok(StepUpdate { grad: g, noise: None })
                },
                observer,
            )?;
        }
        Method::EuK | Method::CfK => {
            let k = hyper.k_layers;
            if k > model.num_layers() {
                return config_err(format!("k_layers = {k} exceeds the {} parameter groups of the model", model.num_layers()));
            }
            if hyper.method == Method::EuK {
                reinit_last(&mut model, k, hyper.seed);
            }
            let mut opt = Sgd::new(&model, &config).with_trainable(last_k_mask(&model, k));
            run_loop(
                &mut model,
                &mut opt,
                ds,
                retain,
                None,
                &config,
                |m, b, _, _| Ok(StepUpdate { grad: ce_grad(m, b)?, noise: None }),
                observer,
            )?;
        }
        Method::Scrub => {
            let teacher = original.clone();
            let (alpha, gamma) = (hyper.scrub_alpha, hyper.scrub_gamma);
            let mut opt = Sgd::new(&model, &config);
            run_loop(
                &mut model,
                &mut opt,
                ds,
                retain,
                Some(forget),
                &config,
                |m, b, fb, _| {
                    let mut g = distill_grad(m, &teacher, b, alpha, gamma)?;
                    if let Some(fb) = fb {
                        g.add_scaled(&distill_grad(m, &teacher, fb, 1.0, 0.0)?, -1.0);
                    }
                    Ok(StepUpdate { grad: g, noise: None })
                },
                observer,
            )?;
        }
        other => return config_err(format!("{} is not a fine-tuning method", other.label())),
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_blobs, split_unlearn, ForgetMode};
    use crate::nn::{init_params, Activation};
    use crate::trainer::train;

    fn setup() -> (MlpModel, UnlearnTask) {
        let ds = gen_blobs(3, 20, 4, 0.3, 11).unwrap();
        let task = split_unlearn(&ds, ForgetMode::Sample, 0, 0.2, 0.2, 5).unwrap();
        let init = init_params(&[4, 8, 3], Activation::Relu, 3).unwrap();
        let cfg = TrainConfig { epochs: 5, batch_size: 16, ..TrainConfig::default() };
        let (orig, _) = train(&init, &task.dataset, &task.train_idx(), &cfg).unwrap();
        (orig, task)
    }

    fn hyper(method: Method, epochs: usize) -> MethodHyper {
        MethodHyper { method, epochs, batch_size: 16, ..MethodHyper::default() }
    }

    #[test]
    fn zero_epochs_leave_the_model_unchanged() {
        let (orig, task) = setup();
        for m in [Method::Gd, Method::Ngd, Method::Ga, Method::NeggradPlus, Method::CfK, Method::Scrub] {
            let out = finetune_unlearn(&orig, &task, &hyper(m, 0)).unwrap();
            assert!(out.bit_identical(&orig), "{m:?}");
        }
    }

    #[test]
    fn eu_k_reinitializes_even_without_epochs() {
        let (orig, task) = setup();
        let out = finetune_unlearn(&orig, &task, &hyper(Method::EuK, 0)).unwrap();
        assert!(!out.bit_identical(&orig));
        assert_eq!(out.weights(0), orig.weights(0));
        assert!(out.biases(1).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn gd_is_fine_tuning_on_the_retain_set() {
        let (orig, task) = setup();
        let h = hyper(Method::Gd, 3);
        let gd = finetune_unlearn(&orig, &task, &h).unwrap();
        let (ft, _) = train(&orig, &task.dataset, &task.retain_idx, &h.train_config()).unwrap();
        assert!(gd.bit_identical(&ft));
    }

    #[test]
    fn zero_weights_reduce_to_gd() {
        let (orig, task) = setup();
        let gd = finetune_unlearn(&orig, &task, &hyper(Method::Gd, 3)).unwrap();
        let ngd = finetune_unlearn(&orig, &task, &MethodHyper { sigma: 0.0, ..hyper(Method::Ngd, 3) }).unwrap();
        let ng = finetune_unlearn(&orig, &task, &MethodHyper { beta: 0.0, ..hyper(Method::NeggradPlus, 3) }).unwrap();
        assert!(ngd.bit_identical(&gd));
        assert!(ng.bit_identical(&gd));
    }

    #[test]
    fn cf_k_only_moves_the_last_groups() {
        let (orig, task) = setup();
        let out = finetune_unlearn(&orig, &task, &hyper(Method::CfK, 3)).unwrap();
        assert_eq!(out.weights(0), orig.weights(0));
        assert_eq!(out.biases(0), orig.biases(0));
        assert_ne!(out.weights(1), orig.weights(1));
    }

    #[test]
    fn k_beyond_depth_is_a_config_error() {
        let (orig, task) = setup();
        let h = MethodHyper { k_layers: 3, ..hyper(Method::EuK, 1) };
        assert!(matches!(finetune_unlearn(&orig, &task, &h), Err(LabError::Config(_))));
    }

    #[test]
    fn ga_raises_the_forget_loss() {
        let (orig, task) = setup();
        let fb = task.dataset.batch(&task.forget_idx).unwrap();
        let h = MethodHyper { lr: 0.05, clip_norm: None, ..hyper(Method::Ga, 3) };
        let out = finetune_unlearn(&orig, &task, &h).unwrap();
        assert!(out.loss(&fb).unwrap() > orig.loss(&fb).unwrap());
    }

    #[test]
    fn ga_step_matches_a_convex_quadratic_oracle() {
        // Single-layer linear model, one forget sample, one step without
        // momentum, decay, or clipping: w1 = w0 + lr * grad CE(w0).
        let ds = Dataset::new("pt", vec![0.5, 0.25, 0.75, 1.0], vec![0, 1], 2, 2).unwrap();
        let task = UnlearnTask::from_indices(ds, vec![1], vec![0], vec![], ForgetMode::Sample, None).unwrap();
        let orig =
            MlpModel::from_parts(vec![2, 2], Activation::Relu, vec![vec![0.1, -0.2, 0.3, 0.05]], vec![vec![0.0, 0.1]]).unwrap();
        let h = MethodHyper { lr: 0.5, momentum: 0.0, weight_decay: 0.0, clip_norm: None, ..hyper(Method::Ga, 1) };
        let out = finetune_unlearn(&orig, &task, &h).unwrap();
        let x = [0.5, 0.25];
        let z: [f64; 2] = [0.1 * x[0] - 0.2 * x[1], 0.3 * x[0] + 0.05 * x[1] + 0.1];
        let e = [z[0].exp(), z[1].exp()];
        let p = [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])];
        let d = [p[0] - 1.0, p[1]];
        let expect_w = [0.1 + 0.5 * d[0] * x[0], -0.2 + 0.5 * d[0] * x[1], 0.3 + 0.5 * d[1] * x[0], 0.05 + 0.5 * d[1] * x[1]];
        for (a, b) in out.weights(0).iter().zip(expect_w) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn scrub_with_the_teacher_as_student_has_zero_kl_gradient() {
        let (orig, task) = setup();
        let b = task.dataset.batch(&task.forget_idx).unwrap();
        let g = distill_grad(&orig, &orig, &b, 1.0, 0.0).unwrap();
        assert!(g.norm() < 1e-15);
        assert!(distill_kl(&orig, &orig, &b).abs() < 1e-15);
    }

    #[test]
    fn forget_cycler_wraps_around() {
        let idx = [1, 2, 3];
        let mut c = ForgetCycler::new(&idx, 2, 9);
        let seen: Vec<usize> = (0..4).flat_map(|_| c.next_batch().unwrap()).collect();
        assert_eq!(seen.len(), 6);
        assert_eq!(seen.iter().filter(|&&i| i == 2).count(), 2);
        assert!(ForgetCycler::new(&[], 2, 9).next_batch().is_none());
    }

    #[test]
    fn observer_sees_every_step() {
        let (orig, task) = setup();
        let mut count = 0;
        finetune_unlearn_observed(&orig, &task, &hyper(Method::Gd, 2), &mut |_, _| count += 1).unwrap();
        let per_epoch = task.retain_idx.len().div_ceil(16);
        assert_eq!(count, 2 * per_epoch);
    }
}
