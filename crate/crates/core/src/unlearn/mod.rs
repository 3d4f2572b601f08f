//! Unlearning mechanisms `M(A(S), S, S_f)`.
//!
//! * fine-tuning family: GD, NGD, GA, NegGrad+, EU-k, CF-k, SCRUB ([`finetune`])
//! * closed-form and noise family: CR ([`newton`]), Fisher and SSD ([`fisher`]), NTK ([`ntk`])
//! * RURK ([`rurk`])
//!
//! Every method is a pure function of the original model, the task, and the
//! hyperparameters (seeds included).

pub mod finetune;
pub mod fisher;
pub mod newton;
pub mod ntk;
pub mod rurk;

use serde::{Deserialize, Serialize};

use crate::attacks::{VulnerableSearch, PGD_DEFAULT_STEP};
use crate::datasets::UnlearnTask;
use crate::error::{config_err, Result};
use crate::nn::{init_params, Activation, MlpModel};
use crate::trainer::{train, TrainConfig};

pub use finetune::finetune_unlearn;
pub use fisher::{diag_fisher, fisher_noise_unlearn, ssd_dampen};
pub use newton::{cr_unlearn, newton_removal};
pub use ntk::{ntk_removal, NtkOutcome};
pub use rurk::rurk_unlearn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Retrain,
    Gd,
    Ngd,
    Ga,
    NeggradPlus,
    EuK,
    CfK,
    Scrub,
    Fisher,
    Ssd,
    Cr,
    Ntk,
    Rurk,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Retrain => "Re-train",
            Method::Gd => "GD",
            Method::Ngd => "NGD",
            Method::Ga => "GA",
            Method::NeggradPlus => "NegGrad+",
            Method::EuK => "EU-k",
            Method::CfK => "CF-k",
            Method::Scrub => "SCRUB",
            Method::Fisher => "Fisher",
            Method::Ssd => "SSD",
            Method::Cr => "CR",
            Method::Ntk => "NTK",
            Method::Rurk => "RURK",
        }
    }

    pub fn is_finetune(self) -> bool {
        matches!(self, Method::Gd | Method::Ngd | Method::Ga | Method::NeggradPlus | Method::EuK | Method::CfK | Method::Scrub)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VulnerableMethod {
    #[default]
    Ball,
    Fgsm,
    Pgd,
}

/// RURK-specific knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RurkHyper {
    pub tau: f64,
    pub lambda_f: f64,
    pub lambda_a: f64,
    pub v: usize,
    pub attack_method: VulnerableMethod,
    pub attack_steps: usize,
    pub attack_step_size: f64,
    pub clamp: bool,
}

impl Default for RurkHyper {
    /// tau 0.03, v = 1 Gaussian ball draw, lambda_f = lambda_a = 0.03.
    fn default() -> Self {
        Self {
            tau: 0.03,
            lambda_f: 0.03,
            lambda_a: 0.03,
            v: 1,
            attack_method: VulnerableMethod::Ball,
            attack_steps: 10,
            attack_step_size: PGD_DEFAULT_STEP,
            clamp: true,
        }
    }
}

impl RurkHyper {
    pub fn search(&self) -> VulnerableSearch {
        match self.attack_method {
            VulnerableMethod::Ball => VulnerableSearch::Ball,
            VulnerableMethod::Fgsm => VulnerableSearch::TargetedAttack { step_size: self.attack_step_size, steps: 0 },
            VulnerableMethod::Pgd => {
                VulnerableSearch::TargetedAttack { step_size: self.attack_step_size, steps: self.attack_steps.max(1) }
            }
        }
    }
}

/// Method choice plus every hyperparameter any method reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodHyper {
    pub method: Method,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: Option<f64>,
    pub schedule_t: usize,
    pub seed: u64,
    /// NGD gradient-noise standard deviation.
    pub sigma: f64,
    /// NegGrad+ forget-loss weight.
    pub beta: f64,
    /// EU-k / CF-k: number of trailing parameter groups.
    pub k_layers: usize,
    pub scrub_alpha: f64,
    pub scrub_gamma: f64,
    pub fisher_alpha: f64,
    pub ssd_alpha: f64,
    pub ssd_lambda: f64,
    pub cr_lambda: f64,
    /// l2 strength of the CR one-vs-rest logistic heads.
    pub cr_l2: f64,
    pub rurk: RurkHyper,
}

impl Default for MethodHyper {
    fn default() -> Self {
        Self {
            method: Method::Gd,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            epochs: 2,
            clip_norm: Some(1.0),
            schedule_t: 200,
            seed: 7,
            sigma: 0.03,
            beta: 0.001,
            k_layers: 1,
            scrub_alpha: 0.001,
            scrub_gamma: 1.0,
            fisher_alpha: 1e-6,
            ssd_alpha: 10.0,
            ssd_lambda: 1.0,
            cr_lambda: 0.1,
            cr_l2: 1e-3,
            rurk: RurkHyper::default(),
        }
    }
}

impl MethodHyper {
    pub fn for_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            clip_norm: self.clip_norm,
            schedule_t: self.schedule_t,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        let non_negative = [
            ("sigma", self.sigma),
            ("beta", self.beta),
            ("scrub_alpha", self.scrub_alpha),
            ("scrub_gamma", self.scrub_gamma),
            ("fisher_alpha", self.fisher_alpha),
            ("cr_lambda", self.cr_lambda),
            ("rurk.tau", self.rurk.tau),
            ("rurk.lambda_f", self.rurk.lambda_f),
            ("rurk.lambda_a", self.rurk.lambda_a),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return config_err(format!("unlearn.{name} must be a non-negative number, got {v}"));
            }
        }
        for (name, v) in [("ssd_alpha", self.ssd_alpha), ("ssd_lambda", self.ssd_lambda), ("cr_l2", self.cr_l2)] {
            if !(v > 0.0 && v.is_finite()) {
                return config_err(format!("unlearn.{name} must be positive, got {v}"));
            }
        }
        if self.k_layers == 0 {
            return config_err("unlearn.k_layers must be at least 1");
        }
        if self.rurk.v == 0 {
            return config_err("unlearn.rurk.v must be at least 1");
        }
        Ok(())
    }
}

/// Result of an unlearning run, with any numeric warnings raised on the way.
#[derive(Clone, Debug)]
pub struct UnlearnOutcome {
    pub model: MlpModel,
    pub warnings: Vec<String>,
}

/// Exact unlearning: a fresh model trained on the retain set only.
pub fn retrain_oracle(
    task: &UnlearnTask,
    layer_dims: &[usize],
    activation: Activation,
    init_seed: u64,
    config: &TrainConfig,
) -> Result<MlpModel> {
    let fresh = init_params(layer_dims, activation, init_seed)?;
    Ok(train(&fresh, &task.dataset, &task.retain_idx, config)?.0)
}

/// Dispatches `hyper.method`.
///
/// `anchor` is the linearization reference for NTK (the original's
/// initialization); the retrain branch draws a fresh model with `hyper.seed`.
pub fn run_method(
    original: &MlpModel,
    task: &UnlearnTask,
    hyper: &MethodHyper,
    anchor: Option<&MlpModel>,
) -> Result<UnlearnOutcome> {
    hyper.validate()?;
    let plain = |model| Ok(UnlearnOutcome { model, warnings: Vec::new() });
    match hyper.method {
        Method::Retrain => {
            plain(retrain_oracle(task, original.layer_dims(), original.activation(), hyper.seed, &hyper.train_config())?)
        }
        m if m.is_finetune() => plain(finetune_unlearn(original, task, hyper)?),
        Method::Fisher => plain(fisher_noise_unlearn(original, task, hyper.fisher_alpha, hyper.seed)?),
        Method::Ssd => plain(ssd_dampen(original, task, hyper.ssd_alpha, hyper.ssd_lambda)?),
        Method::Cr => plain(cr_unlearn(original, task, hyper.cr_lambda, hyper.cr_l2)?),
        Method::Ntk => {
            let out = ntk_removal(original, anchor, task)?;
            Ok(UnlearnOutcome { model: out.model, warnings: out.warning.into_iter().collect() })
        }
        Method::Rurk => plain(rurk_unlearn(original, task, hyper, &mut |_, _| {})?),
        _ => unreachable!("fine-tuning methods handled above"),
    }
}
