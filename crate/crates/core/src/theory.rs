//! Numerical checks of the indistinguishability results: finite
//! (epsilon, delta) checks, the ratio-violation bound, hemisphere expansion on
//! the sphere, the disagreement probability bound, and a binned
//! adversarial-readout experiment on ensembles of linear models.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datasets::{gen_blobs, split_unlearn, ForgetMode, UnlearnTask};
use crate::error::{config_err, Result};
use crate::nn::{init_params, Activation, MlpModel};
use crate::rng::{par_map, substream};
use crate::trainer::{train, TrainConfig};
use crate::unlearn::{finetune_unlearn, retrain_oracle, Method, MethodHyper};

const NORM_TOL: f64 = 1e-12;

/// A distribution over finitely many named outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDist {
    support: Vec<String>,
    probs: Vec<f64>,
}

impl FiniteDist {
    pub fn new(support: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() || support.is_empty() {
            return config_err(format!("{} outcomes but {} probabilities", support.len(), probs.len()));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return config_err(format!("negative or non-finite probability {p}"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return config_err(format!("probabilities sum to {total}, not 1"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = support.iter().find(|s| !seen.insert(s.as_str())) {
            return config_err(format!("duplicate outcome `{dup}`"));
        }
        Ok(Self { support, probs })
    }

    /// Outcomes `"0".."n-1"` with the given probabilities.
    pub fn indexed(probs: Vec<f64>) -> Result<Self> {
        Self::new((0..probs.len()).map(|i| i.to_string()).collect(), probs)
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::indexed(vec![1.0 - p, p])
    }

    pub fn point(outcome: &str) -> Self {
        Self { support: vec![outcome.to_string()], probs: vec![1.0] }
    }

    pub fn prob(&self, outcome: &str) -> f64 {
        self.support.iter().position(|s| s == outcome).map_or(0.0, |i| self.probs[i])
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }
}

/// Union of both supports, in first-seen order, with aligned probabilities.
fn aligned(p: &FiniteDist, q: &FiniteDist) -> (Vec<String>, Vec<f64>, Vec<f64>) {
    let mut outcomes: Vec<String> = p.support.clone();
    for s in &q.support {
        if !outcomes.contains(s) {
            outcomes.push(s.clone());
        }
    }
    let pp = outcomes.iter().map(|o| p.prob(o)).collect();
    let qq = outcomes.iter().map(|o| q.prob(o)).collect();
    (outcomes, pp, qq)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndistParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Renyi order; carried for completeness, no check consumes it.
    pub alpha: f64,
}

impl IndistParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !(0.0..=1.0).contains(&self.delta) || !(self.alpha > 1.0) {
            return config_err(format!(
                "need epsilon >= 0, delta in [0, 1], alpha > 1; got {}, {}, {}",
                self.epsilon, self.delta, self.alpha
            ));
        }
        Ok(())
    }
}

/// Which inequality a witness violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `P(T) > e^eps Q(T) + delta`
    PoverQ,
    /// `Q(T) > e^eps P(T) + delta`
    QoverP,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndistVerdict {
    pub holds: bool,
    pub witness: Option<(Direction, Vec<String>)>,
    /// Smallest delta for which the pair is (epsilon, delta)-indistinguishable.
    pub delta_needed: f64,
}

/// Checks `P(T) <= e^eps Q(T) + delta` and the mirror for every event `T`,
/// via the extremal events `{P > e^eps Q}` and `{Q > e^eps P}`.
pub fn indist_check(p: &FiniteDist, q: &FiniteDist, epsilon: f64, delta: f64) -> Result<IndistVerdict> {
    if !(epsilon >= 0.0) || !(delta >= 0.0) {
        return config_err(format!("need epsilon, delta >= 0; got {epsilon}, {delta}"));
    }
    let (outcomes, pp, qq) = aligned(p, q);
    let e = epsilon.exp();
    let side = |a: &[f64], b: &[f64]| {
        let set: Vec<usize> = (0..a.len()).filter(|&i| a[i] > e * b[i]).collect();
        let excess = set.iter().map(|&i| a[i]).sum::<f64>() - e * set.iter().map(|&i| b[i]).sum::<f64>();
        (set, excess)
    };
    let (tp, ep) = side(&pp, &qq);
    let (tq, eq) = side(&qq, &pp);
    let names = |set: &[usize]| set.iter().map(|&i| outcomes[i].clone()).collect::<Vec<_>>();
    let witness = if ep > delta {
        Some((Direction::PoverQ, names(&tp)))
    } else if eq > delta {
        Some((Direction::QoverP, names(&tq)))
    } else {
        None
    };
    Ok(IndistVerdict { holds: witness.is_none(), witness, delta_needed: ep.max(eq).max(0.0) })
}

/// Exhaustive version of [`indist_check`] over every subset of the joint
/// support (at most 20 outcomes).
pub fn indist_check_exhaustive(p: &FiniteDist, q: &FiniteDist, epsilon: f64, delta: f64) -> Result<bool> {
    let (outcomes, pp, qq) = aligned(p, q);
    if outcomes.len() > 20 {
        return config_err("exhaustive check limited to 20 outcomes");
    }
    let e = epsilon.exp();
    for mask in 0u32..(1 << outcomes.len()) {
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..outcomes.len() {
            if mask >> i & 1 == 1 {
                a += pp[i];
                b += qq[i];
            }
        }
        if a > e * b + delta || b > e * a + delta {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Mass under `P` and under `Q` of outcomes whose ratio `P/Q` lies outside
/// `[e^{-2 eps}, e^{2 eps}]`.
pub fn ratio_violation_mass(p: &FiniteDist, q: &FiniteDist, epsilon: f64) -> Result<(f64, f64)> {
    if !(epsilon > 0.0) {
        return config_err(format!("violation bound needs epsilon > 0, got {epsilon}"));
    }
    let (_, pp, qq) = aligned(p, q);
    let e2 = (2.0 * epsilon).exp();
    let (mut mp, mut mq) = (0.0, 0.0);
    for (&a, &b) in pp.iter().zip(&qq) {
        if a > e2 * b || b > e2 * a {
            mp += a;
            mq += b;
        }
    }
    Ok((mp, mq))
}

/// `2 delta / (1 - e^{-eps})`.
pub fn violation_bound(epsilon: f64, delta: f64) -> f64 {
    2.0 * delta / (1.0 - (-epsilon).exp())
}

/// Outcome of a random-pair sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub pairs: usize,
    /// Pairs whose bound is below 1, i.e. informative.
    pub informative: usize,
    pub violations: usize,
    /// Largest `mass / bound` seen.
    pub worst_ratio: f64,
}

/// Random pairs on supports of size 2..=6 with dyadic probabilities (so every
/// event mass is exact), each certified at the smallest dyadic delta that
/// passes the exhaustive subset check; counts pairs whose violation mass
/// exceeds `2 delta / (1 - e^{-eps})`.
pub fn violation_sweep(pairs: usize, seed: u64) -> Result<SweepSummary> {
    const SCALE: u64 = 1 << 20;
    let draw = |rng: &mut crate::rng::LabRng, n: usize| -> Vec<f64> {
        let mut cuts: Vec<u64> = (0..n - 1).map(|_| rng.random_range(0..=SCALE)).collect();
        cuts.sort_unstable();
        let mut prev = 0;
        let mut out = Vec::with_capacity(n);
        for c in cuts.into_iter().chain(std::iter::once(SCALE)) {
            out.push((c - prev) as f64 / SCALE as f64);
            prev = c;
        }
        out
    };
    let results = par_map(pairs, |k| -> Result<(bool, bool, f64)> {
        let mut rng = substream(seed, &[0xA1, k as u64]);
        let n = rng.random_range(2..=6usize);
        let p = FiniteDist::indexed(draw(&mut rng, n))?;
        let q = FiniteDist::indexed(draw(&mut rng, n))?;
        let epsilon = [0.01, 0.05, 0.1, 0.5, 1.0, 2.0][rng.random_range(0..6usize)];
        let needed = indist_check(&p, &q, epsilon, 0.0)?.delta_needed;
        let mut delta = (needed * SCALE as f64).ceil() / SCALE as f64;
        while !indist_check_exhaustive(&p, &q, epsilon, delta)? {
            delta += 1.0 / SCALE as f64;
        }
        let bound = violation_bound(epsilon, delta);
        let (mp, mq) = ratio_violation_mass(&p, &q, epsilon)?;
        let worst = mp.max(mq);
        let ratio = if bound > 0.0 {
            worst / bound
        } else if worst > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        Ok((bound < 1.0, worst > bound, ratio))
    });
    let mut s = SweepSummary { pairs, informative: 0, violations: 0, worst_ratio: 0.0 };
    for r in results {
        let (informative, violated, ratio) = r?;
        s.informative += usize::from(informative);
        s.violations += usize::from(violated);
        s.worst_ratio = s.worst_ratio.max(ratio);
    }
    Ok(s)
}

/// `1 - sqrt(pi/8) exp(-(d-1) tau^2 / 2)`.
pub fn hemisphere_bound(d: usize, tau: f64) -> f64 {
    1.0 - (PI / 8.0).sqrt() * (-((d as f64 - 1.0) * tau * tau) / 2.0).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpansionResult {
    pub empirical: f64,
    pub bound: f64,
    /// Binomial standard error of `empirical`.
    pub std_err: f64,
}

/// Share of uniform points on the unit sphere in `R^d` within chord distance
/// `tau` of the hemisphere `{x_1 >= 0}`.
pub fn hemisphere_expansion(d: usize, tau: f64, n_samples: usize, seed: u64) -> Result<ExpansionResult> {
    if d < 3 {
        return config_err(format!("sphere dimension must be at least 3, got {d}"));
    }
    if !(tau >= 0.0) {
        return config_err(format!("tau must be non-negative, got {tau}"));
    }
    if n_samples < 10_000 {
        return config_err(format!("need at least 10000 sphere samples, got {n_samples}"));
    }
    let angle = 2.0 * (tau / 2.0).min(1.0).asin();
    let threshold = if angle >= PI / 2.0 { -1.0 } else { -angle.sin() };
    const CHUNK: usize = 4096;
    let chunks = n_samples.div_ceil(CHUNK);
    let hits: usize = par_map(chunks, |c| {
        let mut rng = substream(seed, &[0x5E, d as u64, tau.to_bits(), c as u64]);
        let count = CHUNK.min(n_samples - c * CHUNK);
        (0..count)
            .filter(|_| {
                let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v[0] / norm >= threshold
            })
            .count()
    })
    .into_iter()
    .sum();
    let p = hits as f64 / n_samples as f64;
    Ok(ExpansionResult { empirical: p, bound: hemisphere_bound(d, tau), std_err: (p * (1.0 - p) / n_samples as f64).sqrt() })
}

/// Lower bound on the probability of disagreement-inducing perturbations:
/// `(2 delta / (1 - e^{-eps})) (1 - sqrt(pi/8) e^{-2 eps - (d-1) tau^2 / 2})`,
/// clamped to `[0, 1]`.
pub fn prop2_bound(epsilon: f64, delta: f64, tau: f64, d: usize) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    if epsilon <= 0.0 {
        return 1.0;
    }
    let lead = violation_bound(epsilon, delta);
    let tail = 1.0 - (PI / 8.0).sqrt() * (-2.0 * epsilon - (d as f64 - 1.0) * tau * tau / 2.0).exp();
    (lead * tail).clamp(0.0, 1.0)
}

/// A binary linear classifier `sign(w.x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearBinary {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearBinary {
    /// Decision direction of a two-class model without hidden layers.
    pub fn from_model(model: &MlpModel) -> Result<Self> {
        if model.num_layers() != 1 || model.num_classes() != 2 {
            return config_err("expected a two-class model without hidden layers");
        }
        let d = model.input_dim();
        let w = model.weights(0);
        Ok(Self { w: (0..d).map(|i| w[d + i] - w[i]).collect(), b: model.biases(0)[1] - model.biases(0)[0] })
    }

    /// Minimum-l2 perturbation of `x` onto the decision boundary:
    /// `x - ((w.x + b) / |w|^2) w`.
    pub fn min_norm_adversarial(&self, x: &[f64]) -> Vec<f64> {
        let wx: f64 = self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b;
        let ww: f64 = self.w.iter().map(|a| a * a).sum();
        if ww == 0.0 {
            return x.to_vec();
        }
        x.iter().zip(&self.w).map(|(xi, wi)| xi - wx / ww * wi).collect()
    }
}

/// Empirical cell probabilities of two samples on a shared grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinRatio {
    pub cell: Vec<usize>,
    pub p_m: f64,
    pub p_a: f64,
}

impl BinRatio {
    /// `p_m / p_a`, infinite when only `m` lands in the cell.
    pub fn ratio(&self) -> f64 {
        if self.p_a > 0.0 {
            self.p_m / self.p_a
        } else if self.p_m > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    }
}

fn bin_table(xs: &[Vec<f64>], ys: &[Vec<f64>], bins: usize) -> Vec<BinRatio> {
    let d = xs[0].len();
    let (mut lo, mut hi) = (vec![f64::INFINITY; d], vec![f64::NEG_INFINITY; d]);
    for v in xs.iter().chain(ys) {
        for j in 0..d {
            lo[j] = lo[j].min(v[j]);
            hi[j] = hi[j].max(v[j]);
        }
    }
    let cell = |v: &[f64]| -> Vec<usize> {
        (0..d)
            .map(|j| {
                let w = hi[j] - lo[j];
                if w <= 0.0 {
                    0
                } else {
                    (((v[j] - lo[j]) / w * bins as f64) as usize).min(bins - 1)
                }
            })
            .collect()
    };
    let mut table: BTreeMap<Vec<usize>, (usize, usize)> = BTreeMap::new();
    for v in xs {
        table.entry(cell(v)).or_default().0 += 1;
    }
    for v in ys {
        table.entry(cell(v)).or_default().1 += 1;
    }
    table
        .into_iter()
        .map(|(cell, (a, b))| BinRatio { cell, p_m: a as f64 / xs.len() as f64, p_a: b as f64 / ys.len() as f64 })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop1Report {
    /// Largest absolute log-ratio over model-level cells hit by both ensembles.
    pub epsilon_hat: f64,
    pub model_cells: Vec<BinRatio>,
    pub readout_cells: Vec<BinRatio>,
    /// Readout cells with both masses positive and ratio outside
    /// `[e^{-2 eps_hat}, e^{2 eps_hat}]`.
    pub amplified: usize,
    /// Readout cells hit by only one ensemble.
    pub one_sided: usize,
}

/// Bins model parameters `(w, b)` and minimum-norm adversarial readouts at
/// `x` for both ensembles and compares per-cell frequencies.
pub fn prop1_experiment(ensemble_m: &[LinearBinary], ensemble_a: &[LinearBinary], x: &[f64], bins: usize) -> Result<Prop1Report> {
    if ensemble_m.len() < 100 || ensemble_a.len() < 100 {
        return config_err(format!("ensembles need at least 100 models each, got {} and {}", ensemble_m.len(), ensemble_a.len()));
    }
    if bins == 0 {
        return config_err("bins must be at least 1");
    }
    if ensemble_m.iter().chain(ensemble_a).any(|h| h.w.len() != x.len()) {
        return config_err("model and input dimensions differ");
    }
    let params = |e: &[LinearBinary]| -> Vec<Vec<f64>> {
        e.iter().map(|h| h.w.iter().copied().chain(std::iter::once(h.b)).collect()).collect()
    };
    let readouts = |e: &[LinearBinary]| -> Vec<Vec<f64>> { e.iter().map(|h| h.min_norm_adversarial(x)).collect() };
    let model_cells = bin_table(&params(ensemble_m), &params(ensemble_a), bins);
    let readout_cells = bin_table(&readouts(ensemble_m), &readouts(ensemble_a), bins);
    let epsilon_hat = model_cells.iter().filter(|c| c.p_m > 0.0 && c.p_a > 0.0).map(|c| c.ratio().ln().abs()).fold(0.0, f64::max);
    let band = (2.0 * epsilon_hat).exp();
    let amplified = readout_cells
        .iter()
        .filter(|c| c.p_m > 0.0 && c.p_a > 0.0)
        .filter(|c| c.ratio() > band || c.ratio() < 1.0 / band)
        .count();
    let one_sided = readout_cells.iter().filter(|c| (c.p_m > 0.0) != (c.p_a > 0.0)).count();
    Ok(Prop1Report { epsilon_hat, model_cells, readout_cells, amplified, one_sided })
}

/// Unlearned (GD) and re-trained linear ensembles on a two-class blobs task,
/// one pair per seed in `seeds`.
pub fn linear_ensembles(
    seeds: std::ops::Range<u64>,
    data_seed: u64,
) -> Result<(Vec<LinearBinary>, Vec<LinearBinary>, UnlearnTask)> {
    let ds = gen_blobs(2, 30, 2, 0.35, data_seed)?;
    let task = split_unlearn(&ds, ForgetMode::Sample, 0, 0.3, 0.2, data_seed)?;
    let pairs = par_map(seeds.clone().count(), |k| -> Result<(LinearBinary, LinearBinary)> {
        let seed = seeds.start + k as u64;
        let cfg = TrainConfig { lr0: 0.1, epochs: 20, batch_size: 8, seed, ..TrainConfig::default() };
        let init = init_params(&[2, 2], Activation::Relu, seed)?;
        let (original, _) = train(&init, &task.dataset, &task.train_idx(), &cfg)?;
        let hyper = MethodHyper { method: Method::Gd, lr: 0.1, epochs: 5, batch_size: 8, seed, ..MethodHyper::default() };
        let unlearned = finetune_unlearn(&original, &task, &hyper)?;
        let retrained = retrain_oracle(&task, &[2, 2], Activation::Relu, seed, &cfg)?;
        Ok((LinearBinary::from_model(&unlearned)?, LinearBinary::from_model(&retrained)?))
    });
    let mut m = Vec::new();
    let mut a = Vec::new();
    for p in pairs {
        let (u, r) = p?;
        m.push(u);
        a.push(r);
    }
    Ok((m, a, task))
}

/// Parameters of the `theory` block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryConfig {
    pub sweep_pairs: usize,
    pub sphere_samples: usize,
    pub dims: Vec<usize>,
    pub taus: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
    /// Models per ensemble for the readout experiment; 0 skips it.
    pub ensemble_size: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            sweep_pairs: 10_000,
            sphere_samples: 100_000,
            dims: vec![20, 50, 100],
            taus: vec![0.1, 0.2, 0.3, 0.5],
            epsilon: 1.0,
            delta: 0.05,
            ensemble_size: 100,
            bins: 4,
            seed: 2024,
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !(0.0..=1.0).contains(&self.delta) {
            return config_err(format!("theory needs epsilon >= 0 and delta in [0, 1], got {} and {}", self.epsilon, self.delta));
        }
        if let Some(d) = self.dims.iter().find(|&&d| d < 3) {
            return config_err(format!("sphere dimension must be at least 3, got {d}"));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t >= 0.0)) {
            return config_err(format!("tau must be non-negative, got {t}"));
        }
        if !self.dims.is_empty() && !self.taus.is_empty() && self.sphere_samples < 10_000 {
            return config_err(format!("need at least 10000 sphere samples, got {}", self.sphere_samples));
        }
        if self.ensemble_size != 0 && self.ensemble_size < 100 {
            return config_err(format!("ensemble_size must be 0 or at least 100, got {}", self.ensemble_size));
        }
        if self.ensemble_size != 0 && self.bins == 0 {
            return config_err("bins must be at least 1");
        }
        Ok(())
    }
}

/// One line of `theory_report.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryRow {
    pub name: String,
    pub parameters: String,
    pub bound: f64,
    pub empirical: f64,
    pub verdict: bool,
}

/// Runs every check configured in `cfg`.
pub fn theory_report(cfg: &TheoryConfig) -> Result<Vec<TheoryRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let row = |name: &str, parameters: String, bound: f64, empirical: f64, verdict: bool| TheoryRow {
        name: name.to_string(),
        parameters,
        bound,
        empirical,
        verdict,
    };

    let (p, q) = (FiniteDist::bernoulli(0.6)?, FiniteDist::bernoulli(0.5)?);
    for (eps, delta, expect) in
        [(0.0, 0.1, true), (1.2f64.ln(), 0.0, false), (1.25f64.ln() + 1e-9, 0.0, true), (0.0, 0.05, false)]
    {
        let v = indist_check(&p, &q, eps, delta)?;
        rows.push(row(
            "indist_bernoulli",
            format!("p=0.6;q=0.5;epsilon={eps:.6};delta={delta}"),
            delta,
            v.delta_needed,
            v.holds == expect,
        ));
    }

    if cfg.sweep_pairs > 0 {
        let s = violation_sweep(cfg.sweep_pairs, cfg.seed)?;
        rows.push(row(
            "violation_mass_sweep",
            format!("pairs={};informative={}", s.pairs, s.informative),
            1.0,
            s.worst_ratio,
            s.violations == 0,
        ));
    }

    for &d in &cfg.dims {
        for &tau in &cfg.taus {
            let e = hemisphere_expansion(d, tau, cfg.sphere_samples, cfg.seed)?;
            rows.push(row(
                "hemisphere_expansion",
                format!("d={d};tau={tau};samples={}", cfg.sphere_samples),
                e.bound,
                e.empirical,
                e.empirical >= e.bound - 3.0 * e.std_err,
            ));
        }
    }

    for &d in &cfg.dims {
        for &tau in &cfg.taus {
            let b = prop2_bound(cfg.epsilon, cfg.delta, tau, d);
            let cap = violation_bound(cfg.epsilon, cfg.delta).min(1.0);
            rows.push(row(
                "disagreement_probability_bound",
                format!("epsilon={};delta={};d={d};tau={tau}", cfg.epsilon, cfg.delta),
                cap,
                b,
                (0.0..=cap).contains(&b),
            ));
        }
    }

    if cfg.ensemble_size > 0 {
        let (m, a, task) = linear_ensembles(0..cfg.ensemble_size as u64, cfg.seed)?;
        let x = task.dataset.row(task.forget_idx[0]).to_vec();
        let rep = prop1_experiment(&m, &a, &x, cfg.bins)?;
        rows.push(row(
            "adversarial_readout_amplification",
            format!(
                "models={};bins={};epsilon_hat={:.6};one_sided={}",
                cfg.ensemble_size, cfg.bins, rep.epsilon_hat, rep.one_sided
            ),
            (2.0 * rep.epsilon_hat).exp(),
            rep.amplified as f64,
            true,
        ));
    }
    Ok(rows)
}

pub fn theory_report_csv(rows: &[TheoryRow]) -> String {
    let mut out = String::from("name,parameters,bound,empirical,verdict\n");
    for r in rows {
        let verdict = if r.verdict { "pass" } else { "fail" };
        let _ = writeln!(out, "{},{},{:.6e},{:.6e},{verdict}", r.name, r.parameters, r.bound, r.empirical);
    }
    out
}

pub fn write_theory_report(path: impl AsRef<Path>, rows: &[TheoryRow]) -> Result<()> {
    std::fs::write(path, theory_report_csv(rows))?;
    Ok(())
}
