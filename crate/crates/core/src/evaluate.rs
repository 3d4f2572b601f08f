//! Unlearning metrics: accuracies, Avg. Gap, MIA failure rate, re-learn
//! time, and the residual-knowledge estimator with its disagreement bounds.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Serialize, Serializer};

use crate::attacks::{perturb, PerturbationSpec};
use crate::datasets::{Dataset, ForgetMode, UnlearnTask};
use crate::error::{config_err, LabError, Result};
use crate::nn::MlpModel;
use crate::rng::{par_map, substream, LabRng};
use crate::trainer::{run_epoch, Sgd, TrainConfig};

/// Fraction of `indices` that `model` classifies correctly.
pub fn accuracy(model: &MlpModel, dataset: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return config_err("accuracy over an empty index set");
    }
    let correct = indices.iter().filter(|&&i| model.predict(dataset.row(i)) == dataset.label(i)).count();
    Ok(correct as f64 / indices.len() as f64)
}

/// Epochs of fine-tuning needed to re-learn the forget set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelearnTime {
    Epochs(usize),
    Exceeded(usize),
}

impl RelearnTime {
    pub fn epochs(self) -> Option<usize> {
        match self {
            RelearnTime::Epochs(e) => Some(e),
            RelearnTime::Exceeded(_) => None,
        }
    }
}

impl std::fmt::Display for RelearnTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RelearnTime::Epochs(e) => write!(f, "{e}"),
            RelearnTime::Exceeded(max) => write!(f, ">{max}"),
        }
    }
}

impl Serialize for RelearnTime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RelearnTime::Epochs(e) => s.serialize_u64(*e as u64),
            RelearnTime::Exceeded(_) => s.serialize_str("exceeded"),
        }
    }
}

/// Fine-tunes `model` on the full training set until
/// `L(model, S_f) <= (1 + eta) * L(original, S_f)`, checking before the first
/// epoch and after every epoch.
pub fn relearn_time(
    model: &MlpModel,
    original: &MlpModel,
    task: &UnlearnTask,
    eta: f64,
    config: &TrainConfig,
    max_epochs: usize,
) -> Result<RelearnTime> {
    if !(eta >= 0.0) {
        return config_err(format!("eta must be non-negative, got {eta}"));
    }
    if task.forget_idx.is_empty() {
        return config_err("re-learn time needs a non-empty forget set");
    }
    config.validate()?;
    let forget = task.dataset.batch(&task.forget_idx)?;
    let threshold = (1.0 + eta) * original.loss(&forget)?;
    let train_idx = task.train_idx();
    let mut m = model.clone();
    let mut opt = Sgd::new(&m, config);
    for epoch in 0..=max_epochs {
        if epoch > 0 {
            run_epoch(&mut m, &mut opt, &task.dataset, &train_idx, config, epoch - 1)?;
        }
        if m.loss(&forget)? <= threshold {
            return Ok(RelearnTime::Epochs(epoch));
        }
    }
    Ok(RelearnTime::Exceeded(max_epochs))
}

/// One-dimensional l2-regularized logistic classifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Logistic1d {
    pub w: f64,
    pub b: f64,
}

impl Logistic1d {
    pub const L2: f64 = 1e-3;

    fn objective(&self, xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let nll: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let z = self.w * x + self.b;
                // log(1 + e^z) - y z, computed stably
                z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
            })
            .sum();
        nll / n + 0.5 * Self::L2 * (self.w * self.w + self.b * self.b)
    }

    /// Damped Newton fit; labels are 0 or 1.
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let has = |v: f64| ys.contains(&v);
        if !(has(0.0) && has(1.0)) {
            return config_err("MIA attacker training set contains a single class");
        }
        let n = xs.len() as f64;
        let mut cur = Logistic1d { w: 0.0, b: 0.0 };
        for _ in 0..100 {
            let (mut gw, mut gb, mut hww, mut hwb, mut hbb) = (Self::L2 * cur.w, Self::L2 * cur.b, Self::L2, 0.0, Self::L2);
            for (&x, &y) in xs.iter().zip(ys) {
                let s = 1.0 / (1.0 + (-(cur.w * x + cur.b)).exp());
                let r = s * (1.0 - s) / n;
                gw += (s - y) * x / n;
                gb += (s - y) / n;
                hww += r * x * x;
                hwb += r * x;
                hbb += r;
            }
            let det = hww * hbb - hwb * hwb;
            if !(det > 0.0) {
                return Err(LabError::Numeric("MIA attacker Hessian is singular".into()));
            }
            let dw = (hbb * gw - hwb * gb) / det;
            let db = (hww * gb - hwb * gw) / det;
            let f0 = cur.objective(xs, ys);
            let mut t = 1.0;
            let mut next = cur;
            while t > 1e-10 {
                next = Logistic1d { w: cur.w - t * dw, b: cur.b - t * db };
                if next.objective(xs, ys) <= f0 {
                    break;
                }
                t *= 0.5;
            }
            let moved = (next.w - cur.w).abs() + (next.b - cur.b).abs();
            cur = next;
            if moved < 1e-12 {
                break;
            }
        }
        Ok(cur)
    }

    pub fn predict(&self, x: f64) -> u8 {
        u8::from(self.w * x + self.b > 0.0)
    }
}

fn correct_class_prob(model: &MlpModel, ds: &Dataset, i: usize) -> f64 {
    model.probabilities(ds.row(i))[ds.label(i)]
}

/// Attack failure rate of a membership-inference attacker on the correct-class
/// probability.
///
/// Sample mode trains on retain (seen, 1) against test (unseen, 0) and scores
/// the forget set; class mode trains on retain against forget and scores the
/// held-out test rows of the forgotten class. The larger attacker class is
/// subsampled to the size of the smaller one with `attacker_seed`.
pub fn mia_accuracy(model: &MlpModel, task: &UnlearnTask, attacker_seed: u64) -> Result<f64> {
    let ds = &task.dataset;
    let (unseen, eval): (Vec<usize>, Vec<usize>) = match task.mode {
        ForgetMode::Sample => (task.test_idx.clone(), task.forget_idx.clone()),
        ForgetMode::Class => {
            let class = task.forget_class.unwrap_or_else(|| ds.label(task.forget_idx[0]));
            let held_out = task.test_idx.iter().copied().filter(|&i| ds.label(i) == class).collect();
            (task.forget_idx.clone(), held_out)
        }
    };
    if task.retain_idx.is_empty() || unseen.is_empty() {
        return config_err("MIA attacker training set contains a single class");
    }
    if eval.is_empty() {
        return config_err("MIA evaluation set is empty");
    }
    let mut seen = task.retain_idx.clone();
    let mut unseen = unseen;
    let mut rng = substream(attacker_seed, &[0x31A]);
    let m = seen.len().min(unseen.len());
    seen.shuffle(&mut rng);
    unseen.shuffle(&mut rng);
    let mut xs = Vec::with_capacity(2 * m);
    let mut ys = Vec::with_capacity(2 * m);
    for &i in &seen[..m] {
        xs.push(correct_class_prob(model, ds, i));
        ys.push(1.0);
    }
    for &i in &unseen[..m] {
        xs.push(correct_class_prob(model, ds, i));
        ys.push(0.0);
    }
    let attacker = Logistic1d::fit(&xs, &ys)?;
    let fails = eval.iter().filter(|&&i| attacker.predict(correct_class_prob(model, ds, i)) == 0).count();
    Ok(fails as f64 / eval.len() as f64)
}

/// Mean absolute gap, in percentage points, of four accuracy gaps given in
/// percentage points.
pub fn mean_gap(gaps_pp: [f64; 4]) -> f64 {
    gaps_pp.iter().map(|g| g.abs()).sum::<f64>() / 4.0
}

/// Shared-draw Monte-Carlo counts for one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RkCounts {
    pub draws: usize,
    /// Draws `m` classifies correctly.
    pub m_correct: usize,
    /// Draws `a` classifies correctly.
    pub a_correct: usize,
    /// Draws on which `m` and `a` predict different labels.
    pub disagree: usize,
}

impl RkCounts {
    /// Counts over the given perturbed inputs.
    pub fn from_draws<'a>(m: &MlpModel, a: &MlpModel, y: usize, draws: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut c = RkCounts::default();
        for x in draws {
            c.push(m.predict(x), a.predict(x), y);
        }
        c
    }

    fn push(&mut self, pm: usize, pa: usize, y: usize) {
        self.draws += 1;
        self.m_correct += usize::from(pm == y);
        self.a_correct += usize::from(pa == y);
        self.disagree += usize::from(pm != pa);
    }

    /// `r_hat`, or `None` when `a` is never correct (the +inf sentinel).
    pub fn ratio(&self) -> Option<f64> {
        (self.a_correct > 0).then(|| self.m_correct as f64 / self.a_correct as f64)
    }

    /// `r_hat` with `+inf` as the denominator-zero sentinel.
    pub fn r_hat(&self) -> f64 {
        self.ratio().unwrap_or(f64::INFINITY)
    }

    pub fn k_hat(&self) -> f64 {
        self.disagree as f64 / self.draws.max(1) as f64
    }

    pub fn p_a(&self) -> f64 {
        self.a_correct as f64 / self.draws.max(1) as f64
    }
}

/// Perturbation `draw` of sample `(x, y)`; the attack (if any) is computed
/// against `m`, and both models are scored on the result.
fn rk_sample(
    m: &MlpModel,
    a: &MlpModel,
    x: &[f64],
    y: usize,
    spec: &PerturbationSpec,
    mut rng_for: impl FnMut(usize) -> LabRng,
) -> Result<RkCounts> {
    let mut c = RkCounts::default();
    for i in 0..spec.c {
        let xp = perturb(m, x, y, spec, &mut rng_for(i))?;
        c.push(m.predict(&xp), a.predict(&xp), y);
    }
    Ok(c)
}

/// Residual knowledge `r_hat` of `m` relative to `a` at `(x, y)` from `spec.c`
/// shared draws; `+inf` flags a zero denominator.
pub fn residual_knowledge(
    m: &MlpModel,
    a: &MlpModel,
    x: &[f64],
    y: usize,
    spec: &PerturbationSpec,
    rng: &mut LabRng,
) -> Result<f64> {
    spec.validate()?;
    let mut c = RkCounts::default();
    for _ in 0..spec.c {
        let xp = perturb(m, x, y, spec, rng)?;
        c.push(m.predict(&xp), a.predict(&xp), y);
    }
    Ok(c.r_hat())
}

/// Adversarial disagreement `k_hat`: the share of draws on which `m` and `a`
/// predict different labels.
pub fn adversarial_disagreement(
    m: &MlpModel,
    a: &MlpModel,
    x: &[f64],
    y: usize,
    spec: &PerturbationSpec,
    rng: &mut LabRng,
) -> Result<f64> {
    spec.validate()?;
    let mut c = RkCounts::default();
    for _ in 0..spec.c {
        let xp = perturb(m, x, y, spec, rng)?;
        c.push(m.predict(&xp), a.predict(&xp), y);
    }
    Ok(c.k_hat())
}

/// The disagreement band `r p_a (1 - p_a) <= k <= 1 - r p_a^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RkBounds {
    pub lower: f64,
    pub upper: f64,
    pub r_hat: f64,
    pub p_a: f64,
}

/// Whether `k_hat` lies inside the band (widened by `slack`).
pub fn rk_bounds_check(r_hat: f64, p_a_hat: f64, k_hat: f64, slack: f64) -> (bool, RkBounds) {
    let b = RkBounds { lower: r_hat * p_a_hat * (1.0 - p_a_hat), upper: 1.0 - r_hat * p_a_hat * p_a_hat, r_hat, p_a: p_a_hat };
    (b.lower - slack <= k_hat && k_hat <= b.upper + slack, b)
}

/// Forget-set aggregates at one radius.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RkPoint {
    pub tau: f64,
    /// Mean `r_hat` over samples with a positive denominator (NaN if none).
    pub r_hat: f64,
    /// Mean `k_hat` over all forget samples.
    pub k_hat: f64,
    /// Share of samples with a positive denominator whose `r_hat > 1`.
    pub prevalence: f64,
    pub denominator_zero_count: usize,
}

/// Residual-knowledge curve of `m` against `a` over the forget set.
///
/// Draw `i` of sample `s` at radius index `t` uses the substream
/// `(seed, s, t, i)`, so results do not depend on scheduling.
pub fn rk_curve(
    m: &MlpModel,
    a: &MlpModel,
    task: &UnlearnTask,
    tau_grid: &[f64],
    template: &PerturbationSpec,
    seed: u64,
) -> Result<Vec<RkPoint>> {
    if tau_grid.is_empty() {
        return config_err("tau grid is empty");
    }
    for &tau in tau_grid {
        template.with_tau(tau).validate()?;
    }
    let ds = &task.dataset;
    let forget = &task.forget_idx;
    if forget.is_empty() {
        return config_err("residual knowledge needs a non-empty forget set");
    }
    let n = forget.len();
    let counts = par_map(tau_grid.len() * n, |job| {
        let (t, s) = (job / n, job % n);
        let spec = template.with_tau(tau_grid[t]);
        let i = forget[s];
        rk_sample(m, a, ds.row(i), ds.label(i), &spec, |d| substream(seed, &[0x5C, s as u64, t as u64, d as u64]))
    });
    let counts = counts.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(tau_grid
        .iter()
        .enumerate()
        .map(|(t, &tau)| {
            let row = &counts[t * n..(t + 1) * n];
            let ratios: Vec<f64> = row.iter().filter_map(RkCounts::ratio).collect();
            let valid = ratios.len();
            RkPoint {
                tau,
                r_hat: if valid > 0 { ratios.iter().sum::<f64>() / valid as f64 } else { f64::NAN },
                k_hat: row.iter().map(RkCounts::k_hat).sum::<f64>() / n as f64,
                prevalence: if valid > 0 { ratios.iter().filter(|&&r| r > 1.0).count() as f64 / valid as f64 } else { 0.0 },
                denominator_zero_count: n - valid,
            }
        })
        .collect())
}

pub fn rk_curve_csv(points: &[RkPoint]) -> String {
    let mut out = String::from("tau,r_hat,k_hat,prevalence,denominator_zero_count\n");
    for p in points {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6},{}", p.tau, p.r_hat, p.k_hat, p.prevalence, p.denominator_zero_count);
    }
    out
}

pub fn write_rk_curve(path: impl AsRef<Path>, points: &[RkPoint]) -> Result<()> {
    std::fs::write(path, rk_curve_csv(points))?;
    Ok(())
}

/// Metrics of one unlearned model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub retain_acc: f64,
    pub unlearn_acc: f64,
    pub test_acc: f64,
    pub mia_acc: f64,
    /// Percentage points against the re-train reference (0 for the reference itself).
    pub avg_gap: f64,
    pub relearn_epochs: Option<RelearnTime>,
    pub rk: Vec<RkPoint>,
}

impl EvalReport {
    /// Accuracies of `model` on the task; `avg_gap`, re-learn time and the
    /// curve are filled in separately.
    pub fn accuracies(model: &MlpModel, task: &UnlearnTask, mia_seed: u64) -> Result<Self> {
        let ds = &task.dataset;
        let unlearn_acc = if task.forget_idx.is_empty() { 0.0 } else { 1.0 - accuracy(model, ds, &task.forget_idx)? };
        Ok(Self {
            retain_acc: accuracy(model, ds, &task.retain_idx)?,
            unlearn_acc,
            test_acc: accuracy(model, ds, &task.test_idx)?,
            mia_acc: mia_accuracy(model, task, mia_seed)?,
            avg_gap: 0.0,
            relearn_epochs: None,
            rk: Vec::new(),
        })
    }

    pub fn accuracy_vector(&self) -> [f64; 4] {
        [self.retain_acc, self.unlearn_acc, self.test_acc, self.mia_acc]
    }
}

/// Avg. Gap of `report` from `reference`, in percentage points.
pub fn avg_gap(report: &EvalReport, reference: &EvalReport) -> f64 {
    let (a, b) = (report.accuracy_vector(), reference.accuracy_vector());
    mean_gap([0, 1, 2, 3].map(|i| 100.0 * (a[i] - b[i])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_blobs, split_unlearn};
    use crate::nn::{init_params, Activation};
    use crate::trainer::train;
    use rand::Rng;

    /// Predicts class 1 iff `x > t` (class 0 on ties).
    fn threshold(t: f64) -> MlpModel {
        MlpModel::from_parts(vec![1, 2], Activation::Relu, vec![vec![0.0, 1.0]], vec![vec![0.0, -t]]).unwrap()
    }

    fn uniform_ball_counts(m: &MlpModel, a: &MlpModel, x: f64, tau: f64, c: usize, seed: u64) -> RkCounts {
        let mut rng = substream(seed, &[1]);
        let draws: Vec<[f64; 1]> = (0..c).map(|_| [x + rng.random_range(-tau..tau)]).collect();
        RkCounts::from_draws(m, a, 1, draws.iter().map(|d| &d[..]))
    }

    #[test]
    fn threshold_pair_matches_the_interval_oracle() {
        let (m, a) = (threshold(0.50), threshold(0.60));
        let c = 100_000;
        let counts = uniform_ball_counts(&m, &a, 0.55, 0.10, c, 3);
        // exact shares of the ball [0.45, 0.65]
        let len = |lo: f64, hi: f64| (hi - lo) / 0.20;
        let (pm, pa, k) = (len(0.50, 0.65), len(0.60, 0.65), len(0.50, 0.60));
        let se = |p: f64| (p * (1.0 - p) / c as f64).sqrt();
        assert!((counts.m_correct as f64 / c as f64 - pm).abs() < 3.0 * se(pm));
        assert!((counts.p_a() - pa).abs() < 3.0 * se(pa));
        // delta method for the ratio of the two proportions
        let r_se = 3.0 * (se(pm) / pa + pm * se(pa) / (pa * pa));
        assert!((counts.r_hat() - 3.0).abs() < 3.0 * r_se);
        assert!((counts.k_hat() - k).abs() < 3.0 * se(k));
    }

    #[test]
    fn bounds_band_examples() {
        let (ok, b) = rk_bounds_check(1.0, 1.0, 0.0, 0.0);
        assert!(ok && b.lower == 0.0 && b.upper == 0.0);
        let (_, b) = rk_bounds_check(1.0, 0.5, 0.5, 0.0);
        assert_eq!((b.lower, b.upper), (0.25, 0.75));
        // negative control: the threshold pair (k = 0.5) violates the band
        let (ok, b) = rk_bounds_check(3.0, 0.25, 0.5, 0.0);
        assert_eq!((b.lower, b.upper), (0.5625, 0.8125));
        assert!(!ok);
    }

    #[test]
    fn nested_correct_sets_sit_on_the_band() {
        // m is correct on the whole ball [0.45, 0.65]; a only on (0.60, 0.65].
        // Exact: p_a = 0.25, r = 4, k = 0.75 = lower = upper.
        let (m, a) = (threshold(0.40), threshold(0.60));
        let (ok, b) = rk_bounds_check(4.0, 0.25, 0.75, 1e-12);
        assert!(ok && (b.lower - 0.75).abs() < 1e-12 && (b.upper - 0.75).abs() < 1e-12);
        let counts = uniform_ball_counts(&m, &a, 0.55, 0.10, 20_000, 4);
        let (ok, _) = rk_bounds_check(counts.r_hat(), counts.p_a(), counts.k_hat(), 1e-12);
        assert!(ok);
    }

    #[test]
    fn sentinel_on_zero_denominator() {
        let (m, a) = (threshold(0.50), threshold(0.60));
        let spec = PerturbationSpec::gaussian(0.0, 10);
        let r = residual_knowledge(&m, &a, &[0.55], 1, &spec, &mut substream(1, &[])).unwrap();
        assert_eq!(r, f64::INFINITY);
    }

    #[test]
    fn self_comparison_is_exactly_one_and_zero() {
        let m = threshold(0.5);
        let spec = PerturbationSpec::gaussian(0.2, 50);
        let r = residual_knowledge(&m, &m, &[0.55], 1, &spec, &mut substream(1, &[])).unwrap();
        let k = adversarial_disagreement(&m, &m, &[0.55], 1, &spec, &mut substream(1, &[])).unwrap();
        assert_eq!((r, k), (1.0, 0.0));
    }

    #[test]
    fn mia_separable_constructions() {
        let ds = Dataset::new("mia", vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0], vec![0, 0, 1, 1, 0, 1], 1, 2).unwrap();
        let constant = MlpModel::from_parts(vec![1, 2], Activation::Relu, vec![vec![0.0, 0.0]], vec![vec![40.0, 0.0]]).unwrap();
        // constant predicts class 0 with prob ~1: correct-class prob ~1 on label 0, ~0 on label 1.
        let forget_high =
            UnlearnTask::from_indices(ds.clone(), vec![0, 1], vec![4], vec![2, 3], ForgetMode::Sample, None).unwrap();
        assert_eq!(mia_accuracy(&constant, &forget_high, 1).unwrap(), 0.0);
        let forget_low = UnlearnTask::from_indices(ds, vec![0, 1], vec![5], vec![2, 3], ForgetMode::Sample, None).unwrap();
        assert_eq!(mia_accuracy(&constant, &forget_low, 1).unwrap(), 1.0);
    }

    #[test]
    fn mean_gap_examples() {
        assert!((mean_gap([0.45, 5.16, 0.70, 4.30]) - 2.6525).abs() < 1e-12);
        assert!((mean_gap([0.00, 9.47, 1.46, 22.43]) - 8.34).abs() < 1e-12);
    }

    fn trained() -> (MlpModel, UnlearnTask, TrainConfig) {
        let ds = gen_blobs(3, 20, 3, 0.3, 2).unwrap();
        let task = split_unlearn(&ds, ForgetMode::Sample, 0, 0.3, 0.2, 4).unwrap();
        let cfg = TrainConfig { epochs: 10, batch_size: 16, ..TrainConfig::default() };
        let init = init_params(&[3, 8, 3], Activation::Relu, 1).unwrap();
        (train(&init, &task.dataset, &task.train_idx(), &cfg).unwrap().0, task, cfg)
    }

    #[test]
    fn relearn_of_the_original_is_immediate() {
        let (m, task, cfg) = trained();
        assert_eq!(relearn_time(&m, &m, &task, 0.05, &cfg, 30).unwrap(), RelearnTime::Epochs(0));
    }

    #[test]
    fn uniform_logits_fall_back_to_class_zero() {
        let (_, task, _) = trained();
        let flat = MlpModel::from_parts(vec![3, 3], Activation::Relu, vec![vec![0.0; 9]], vec![vec![0.0; 3]]).unwrap();
        let all: Vec<usize> = (0..task.dataset.len()).collect();
        let share = task.dataset.class_count(0) as f64 / all.len() as f64;
        assert_eq!(accuracy(&flat, &task.dataset, &all).unwrap(), share);
        assert!(matches!(accuracy(&flat, &task.dataset, &[]), Err(LabError::Config(_))));
    }

    #[test]
    fn curve_is_scheduling_independent_and_order_symmetric() {
        let (m, task, _) = trained();
        let a = init_params(&[3, 8, 3], Activation::Relu, 9).unwrap();
        let spec = PerturbationSpec::gaussian(0.0, 20);
        let grid = [0.0, 0.05];
        let c1 = rk_curve(&m, &a, &task, &grid, &spec, 5).unwrap();
        let c2 = rk_curve(&m, &a, &task, &grid, &spec, 5).unwrap();
        assert_eq!(rk_curve_csv(&c1), rk_curve_csv(&c2));
        let same = rk_curve(&m, &m, &task, &grid, &spec, 5).unwrap();
        for p in &same {
            assert_eq!(p.k_hat, 0.0);
            assert!(p.r_hat == 1.0 || p.r_hat.is_nan());
            assert_eq!(p.prevalence, 0.0);
        }
    }
}
