//! End-to-end experiment runner: train, re-train, unlearn, evaluate, and
//! write every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::datasets::UnlearnTask;
use crate::error::{LabError, Result};
use crate::evaluate::{avg_gap, relearn_time, rk_curve, rk_curve_csv, EvalReport, RelearnTime, RkPoint};
use crate::nn::{checkpoint, init_params, MlpModel};
use crate::rng::derive_key;
use crate::theory::{theory_report, theory_report_csv};
use crate::trainer::{loss_history_csv, train, TrainConfig};
use crate::unlearn::{run_method, MethodHyper};

/// Models shared by every method of one trial.
#[derive(Clone, Debug)]
pub struct BaseModels {
    pub init: MlpModel,
    pub original: MlpModel,
    pub retrain: MlpModel,
    pub original_history: Vec<f64>,
    pub retrain_history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct UnlearnedModel {
    pub label: String,
    pub slug: String,
    pub model: MlpModel,
    pub warnings: Vec<String>,
}

/// Evaluated row of one trial.
#[derive(Clone, Debug, Serialize)]
pub struct TrialRow {
    pub method: String,
    pub slug: String,
    pub report: EvalReport,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub rows: Vec<TrialRow>,
}

fn seeded(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.clone() }
}

pub fn trial_dir(out: &Path, trial: usize, seed: u64) -> PathBuf {
    out.join(format!("trial_{trial}_seed_{seed}"))
}

fn with_context(stage: &str, e: LabError) -> LabError {
    match e {
        LabError::Numeric(m) => LabError::Numeric(format!("{stage}: {m}")),
        LabError::Shape(m) => LabError::Shape(format!("{stage}: {m}")),
        other => other,
    }
}

/// Initializes, trains the original on the full training set, and trains the
/// re-train reference on the retain set from the same initialization.
pub fn train_stage(cfg: &ExperimentConfig, task: &UnlearnTask, seed: u64) -> Result<BaseModels> {
    let dims = cfg.model.layer_dims(task.dataset.dim(), task.dataset.num_classes());
    let init = init_params(&dims, cfg.model.activation()?, seed)?;
    let (original, original_history) = train(&init, &task.dataset, &task.train_idx(), &seeded(&cfg.train, seed))
        .map_err(|e| with_context("trainer (original)", e))?;
    let (retrain, retrain_history) = train(&init, &task.dataset, &task.retain_idx, &seeded(&cfg.retrain_config(), seed))
        .map_err(|e| with_context("trainer (re-train)", e))?;
    Ok(BaseModels { init, original, retrain, original_history, retrain_history })
}

/// Slugs unique within one experiment (`rurk`, `rurk_2`, ...).
pub fn method_slugs(methods: &[MethodHyper]) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    methods
        .iter()
        .map(|h| {
            let base = serde_json::to_value(h.method)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| "method".into());
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                base
            } else {
                format!("{base}_{n}")
            }
        })
        .collect()
}

pub fn unlearn_stage(cfg: &ExperimentConfig, task: &UnlearnTask, base: &BaseModels, seed: u64) -> Result<Vec<UnlearnedModel>> {
    let methods = cfg.methods();
    methods
        .iter()
        .zip(method_slugs(&methods))
        .map(|(h, slug)| {
            let hyper = MethodHyper { seed, ..h.clone() };
            let out = run_method(&base.original, task, &hyper, Some(&base.init))
                .map_err(|e| with_context(&format!("unlearn ({})", h.method.label()), e))?;
            Ok(UnlearnedModel { label: h.method.label().to_string(), slug, model: out.model, warnings: out.warnings })
        })
        .collect()
}

/// Accuracies, MIA, re-learn time, and the residual-knowledge curve of
/// `model` against the re-train reference.
pub fn evaluate_model(
    cfg: &ExperimentConfig,
    task: &UnlearnTask,
    model: &MlpModel,
    base: &BaseModels,
    seed: u64,
) -> Result<EvalReport> {
    let ev = &cfg.eval;
    let mut report =
        EvalReport::accuracies(model, task, derive_key(ev.mia_seed, &[seed])).map_err(|e| with_context("evaluate", e))?;
    if ev.relearn && !task.forget_idx.is_empty() {
        report.relearn_epochs = Some(
            relearn_time(model, &base.original, task, ev.eta, &seeded(&cfg.train, seed), ev.max_relearn_epochs)
                .map_err(|e| with_context("evaluate (re-learn)", e))?,
        );
    }
    if !task.forget_idx.is_empty() {
        report.rk = rk_curve(model, &base.retrain, task, &ev.tau_grid, &ev.attack, derive_key(seed, &[0x2C]))
            .map_err(|e| with_context("evaluate (residual knowledge)", e))?;
    }
    Ok(report)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn save_base(dir: &Path, base: &BaseModels) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    checkpoint::save(&base.init, dir.join("init.toml"))?;
    checkpoint::save(&base.original, dir.join("original.toml"))?;
    checkpoint::save(&base.retrain, dir.join("retrain.toml"))?;
    write(&dir.join("loss_original.csv"), &loss_history_csv(&base.original_history))?;
    write(&dir.join("loss_retrain.csv"), &loss_history_csv(&base.retrain_history))?;
    Ok(())
}

/// Loads the trial's base checkpoints when all exist.
pub fn load_base(dir: &Path) -> Result<Option<BaseModels>> {
    let names = ["init.toml", "original.toml", "retrain.toml"];
    if !names.iter().all(|n| dir.join(n).exists()) {
        return Ok(None);
    }
    Ok(Some(BaseModels {
        init: checkpoint::load(dir.join(names[0]))?,
        original: checkpoint::load(dir.join(names[1]))?,
        retrain: checkpoint::load(dir.join(names[2]))?,
        original_history: Vec::new(),
        retrain_history: Vec::new(),
    }))
}

/// Evaluates the original (when methods are configured), the re-train
/// reference, and every unlearned model; fills in Avg. Gap.
pub fn evaluate_stage(
    cfg: &ExperimentConfig,
    task: &UnlearnTask,
    base: &BaseModels,
    unlearned: &[UnlearnedModel],
    seed: u64,
) -> Result<Vec<TrialRow>> {
    let reference = evaluate_model(cfg, task, &base.retrain, base, seed)?;
    let mut rows = Vec::new();
    if !unlearned.is_empty() {
        rows.push(TrialRow {
            method: "Original".into(),
            slug: "original".into(),
            report: evaluate_model(cfg, task, &base.original, base, seed)?,
            warnings: Vec::new(),
        });
    }
    rows.push(TrialRow { method: "Re-train".into(), slug: "retrain".into(), report: reference.clone(), warnings: Vec::new() });
    for u in unlearned {
        rows.push(TrialRow {
            method: u.label.clone(),
            slug: u.slug.clone(),
            report: evaluate_model(cfg, task, &u.model, base, seed)?,
            warnings: u.warnings.clone(),
        });
    }
    for r in &mut rows {
        r.report.avg_gap = avg_gap(&r.report, &reference);
    }
    Ok(rows)
}

/// Rounds every non-integer number to 6 significant digits.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            *v = format!("{x:.5e}").parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

pub fn to_pretty_json(value: &impl Serialize) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| LabError::Parse(e.to_string()))?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| LabError::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Runs one trial end to end and writes its directory.
pub fn run_trial(cfg: &ExperimentConfig, task: &UnlearnTask, trial: usize, seed: u64, out: &Path) -> Result<TrialResult> {
    let dir = trial_dir(out, trial, seed);
    let base = train_stage(cfg, task, seed)?;
    save_base(&dir, &base)?;
    let unlearned = unlearn_stage(cfg, task, &base, seed)?;
    for u in &unlearned {
        checkpoint::save(&u.model, dir.join(format!("{}.toml", u.slug)))?;
    }
    let rows = evaluate_stage(cfg, task, &base, &unlearned, seed)?;
    for r in &rows {
        if !r.report.rk.is_empty() {
            write(&dir.join(format!("rk_curve_{}.csv", r.slug)), &rk_curve_csv(&r.report.rk))?;
        }
    }
    let result = TrialResult { trial, seed, rows };
    write(&dir.join("report.json"), &to_pretty_json(&result)?)?;
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation of the finite values (NaN when none).
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, std: var.sqrt() }
    }
}

/// Across-trial summary of one method.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub slug: String,
    pub retain_acc: MeanStd,
    pub unlearn_acc: MeanStd,
    pub test_acc: MeanStd,
    pub mia_acc: MeanStd,
    pub avg_gap: MeanStd,
    pub relearn_epochs: Option<Value>,
    pub rk_curve: Vec<RkPoint>,
    pub warnings: Vec<String>,
}

/// Mean curve across trials; `r_hat` averages the trials where it is defined.
pub fn mean_curve(curves: &[&[RkPoint]]) -> Vec<RkPoint> {
    let Some(first) = curves.first() else { return Vec::new() };
    (0..first.len())
        .map(|t| {
            let pts: Vec<&RkPoint> = curves.iter().map(|c| &c[t]).collect();
            RkPoint {
                tau: first[t].tau,
                r_hat: MeanStd::of(pts.iter().map(|p| p.r_hat)).mean,
                k_hat: MeanStd::of(pts.iter().map(|p| p.k_hat)).mean,
                prevalence: MeanStd::of(pts.iter().map(|p| p.prevalence)).mean,
                denominator_zero_count: pts.iter().map(|p| p.denominator_zero_count).sum(),
            }
        })
        .collect()
}

pub fn summarize(trials: &[TrialResult]) -> Vec<SummaryRow> {
    let Some(first) = trials.first() else { return Vec::new() };
    (0..first.rows.len())
        .map(|i| {
            let rows: Vec<&TrialRow> = trials.iter().map(|t| &t.rows[i]).collect();
            let stat = |f: fn(&EvalReport) -> f64| MeanStd::of(rows.iter().map(|r| f(&r.report)));
            let relearn: Vec<RelearnTime> = rows.iter().filter_map(|r| r.report.relearn_epochs).collect();
            let relearn_epochs = (!relearn.is_empty()).then(|| {
                let finite = MeanStd::of(relearn.iter().filter_map(|r| r.epochs()).map(|e| e as f64));
                let exceeded = relearn.iter().filter(|r| r.epochs().is_none()).count();
                json!({ "mean": finite.mean, "std": finite.std, "exceeded": exceeded })
            });
            let curves: Vec<&[RkPoint]> = rows.iter().map(|r| r.report.rk.as_slice()).collect();
            let mut warnings: Vec<String> = rows.iter().flat_map(|r| r.warnings.iter().cloned()).collect();
            warnings.dedup();
            SummaryRow {
                method: rows[0].method.clone(),
                slug: rows[0].slug.clone(),
                retain_acc: stat(|r| r.retain_acc),
                unlearn_acc: stat(|r| r.unlearn_acc),
                test_acc: stat(|r| r.test_acc),
                mia_acc: stat(|r| r.mia_acc),
                avg_gap: stat(|r| r.avg_gap),
                relearn_epochs,
                rk_curve: if curves.iter().all(|c| !c.is_empty()) { mean_curve(&curves) } else { Vec::new() },
                warnings,
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub retain: usize,
    pub forget: usize,
    pub test: usize,
    pub rows: Vec<SummaryRow>,
    pub trials: Vec<TrialResult>,
}

/// All trials, the aggregated report, the curves, the optional theory table,
/// and a metadata file holding the only timestamp.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    let task = cfg.dataset.build()?;
    std::fs::create_dir_all(out)?;
    let trials =
        cfg.seeds.iter().enumerate().map(|(i, &seed)| run_trial(cfg, &task, i, seed, out)).collect::<Result<Vec<_>>>()?;
    let rows = summarize(&trials);
    let report = ExperimentReport {
        dataset: task.dataset.name.clone(),
        seeds: cfg.seeds.clone(),
        retain: task.retain_idx.len(),
        forget: task.forget_idx.len(),
        test: task.test_idx.len(),
        rows,
        trials,
    };
    write(&out.join("report.json"), &to_pretty_json(&report)?)?;
    for r in &report.rows {
        if !r.rk_curve.is_empty() {
            write(&out.join(format!("rk_curve_{}.csv", r.slug)), &rk_curve_csv(&r.rk_curve))?;
        }
    }
    let primary = report
        .rows
        .iter()
        .position(|r| r.slug != "original" && r.slug != "retrain")
        .or_else(|| report.rows.iter().position(|r| r.slug == "retrain"));
    if let Some(i) = primary {
        if !report.rows[i].rk_curve.is_empty() {
            write(&out.join("rk_curve.csv"), &rk_curve_csv(&report.rows[i].rk_curve))?;
        }
    }
    if let Some(theory) = &cfg.theory {
        write(&out.join("theory_report.csv"), &theory_report_csv(&theory_report(theory)?))?;
    }
    let stamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "tool": "unlearn-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "created_unix": stamp,
        "threads": std::env::var("UNLEARN_LAB_THREADS").ok(),
    });
    write(&out.join("metadata.json"), &format!("{}\n", serde_json::to_string_pretty(&meta).unwrap_or_default()))?;
    Ok(report)
}
