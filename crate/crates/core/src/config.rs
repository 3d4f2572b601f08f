//! Experiment configuration (TOML).

use serde::{Deserialize, Serialize};

use crate::attacks::PerturbationSpec;
use crate::datasets::{gen_blobs, gen_moons, iris, load_csv, split_unlearn, ForgetMode, UnlearnTask};
use crate::error::{config_err, LabError, Result};
use crate::nn::Activation;
use crate::theory::TheoryConfig;
use crate::trainer::TrainConfig;
use crate::unlearn::MethodHyper;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Iris,
    Blobs,
    Moons,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Seed of the synthetic generators.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ForgetMode,
    #[serde(default)]
    pub forget_class: usize,
    #[serde(default = "default_forget_fraction")]
    pub forget_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Seed of the retain/forget/test split, shared by every trial.
    #[serde(default)]
    pub split_seed: u64,
}

fn default_classes() -> usize {
    3
}
fn default_per_class() -> usize {
    50
}
fn default_dim() -> usize {
    4
}
fn default_spread() -> f64 {
    0.3
}
fn default_noise() -> f64 {
    0.1
}
fn default_forget_fraction() -> f64 {
    0.1
}
fn default_test_fraction() -> f64 {
    0.2
}

impl DatasetConfig {
    pub fn build(&self) -> Result<UnlearnTask> {
        let ds = match self.source {
            DataSource::Iris => iris(),
            DataSource::Blobs => gen_blobs(self.classes, self.per_class, self.dim, self.spread, self.seed)?,
            DataSource::Moons => gen_moons(self.per_class, self.noise, self.seed)?,
            DataSource::Csv => match &self.path {
                Some(p) => load_csv(p)?,
                None => return config_err("dataset.path is required when dataset.source = \"csv\""),
            },
        };
        split_unlearn(&ds, self.mode, self.forget_class, self.forget_fraction, self.test_fraction, self.split_seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: String,
}

fn default_hidden() -> Vec<usize> {
    vec![100]
}
fn default_activation() -> String {
    "relu".into()
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: default_hidden(), activation: default_activation() }
    }
}

impl ModelConfig {
    pub fn activation(&self) -> Result<Activation> {
        Activation::parse(&self.activation)
            .ok_or_else(|| LabError::Config(format!("model.activation: unknown activation `{}`", self.activation)))
    }

    pub fn layer_dims(&self, input: usize, classes: usize) -> Vec<usize> {
        std::iter::once(input).chain(self.hidden.iter().copied()).chain(std::iter::once(classes)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_tau_grid")]
    pub tau_grid: Vec<f64>,
    #[serde(default)]
    pub attack: PerturbationSpec,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_max_relearn")]
    pub max_relearn_epochs: usize,
    #[serde(default = "default_true")]
    pub relearn: bool,
    #[serde(default)]
    pub mia_seed: u64,
}

fn default_tau_grid() -> Vec<f64> {
    vec![0.0, 0.01, 0.02, 0.03]
}
fn default_eta() -> f64 {
    0.05
}
fn default_max_relearn() -> usize {
    30
}
fn default_true() -> bool {
    true
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tau_grid: default_tau_grid(),
            attack: PerturbationSpec::default(),
            eta: default_eta(),
            max_relearn_epochs: default_max_relearn(),
            relearn: true,
            mia_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

fn default_out_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out_dir() }
    }
}

/// One `[unlearn]` table or several `[[unlearn]]` tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(t) => vec![t.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Training of the re-train reference; `train` when omitted.
    #[serde(default)]
    pub retrain: Option<TrainConfig>,
    #[serde(default)]
    pub unlearn: Option<OneOrMany<MethodHyper>>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub theory: Option<TheoryConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_trials() -> usize {
    3
}
fn default_seeds() -> Vec<u64> {
    vec![131, 42, 7]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return config_err("trials must be at least 1");
        }
        if self.seeds.len() != self.trials {
            return config_err(format!("seeds lists {} values but trials = {}", self.seeds.len(), self.trials));
        }
        self.model.activation()?;
        if self.model.hidden.contains(&0) {
            return config_err("model.hidden widths must be positive");
        }
        self.train.validate()?;
        if let Some(r) = &self.retrain {
            r.validate()?;
        }
        for h in self.methods() {
            h.validate()?;
        }
        if self.eval.tau_grid.is_empty() {
            return config_err("eval.tau_grid must not be empty");
        }
        for &tau in &self.eval.tau_grid {
            self.eval.attack.with_tau(tau).validate()?;
        }
        if !(self.eval.eta >= 0.0) {
            return config_err(format!("eval.eta must be non-negative, got {}", self.eval.eta));
        }
        if let Some(t) = &self.theory {
            t.validate()?;
        }
        Ok(())
    }

    pub fn methods(&self) -> Vec<MethodHyper> {
        self.unlearn.as_ref().map(OneOrMany::to_vec).unwrap_or_default()
    }

    pub fn retrain_config(&self) -> TrainConfig {
        self.retrain.clone().unwrap_or_else(|| self.train.clone())
    }

    /// Built-in Iris setting: 4-100-3 MLP, GD against RURK.
    pub fn demo_iris() -> Self {
        Self::from_toml(DEMO_IRIS).expect("built-in demo config is valid")
    }
}

pub const DEMO_IRIS: &str = r#"
trials = 3
seeds = [131, 42, 7]

[dataset]
source = "iris"
mode = "sample"
forget_class = 1
forget_fraction = 0.5
test_fraction = 0.2
split_seed = 3

[model]
hidden = [100]
activation = "relu"

[train]
lr = 0.1
epochs = 200
batch_size = 16
weight_decay = 0.0
clip_norm = 1.0
schedule_t = 2000

[[unlearn]]
method = "gd"
lr = 0.05
epochs = 20
batch_size = 16
schedule_t = 200

[[unlearn]]
method = "rurk"
lr = 0.05
epochs = 20
batch_size = 16
schedule_t = 200
rurk = { tau = 0.03, lambda_f = 0.03, lambda_a = 0.03, v = 1, attack_method = "ball" }

[eval]
tau_grid = [0.0, 0.01, 0.02, 0.03]
attack = { kind = "gaussian", c = 100 }
eta = 0.05
max_relearn_epochs = 30

[output]
dir = "out/demo-iris"
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unlearn::Method;

    const MINIMAL: &str = r#"
trials = 1
seeds = [5]
[dataset]
source = "blobs"
[train]
lr = 0.05
epochs = 3
"#;

    #[test]
    fn minimal_config_has_no_methods() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert!(cfg.methods().is_empty());
        assert_eq!(cfg.retrain_config(), cfg.train);
        assert_eq!(cfg.eval.tau_grid.len(), 4);
    }

    #[test]
    fn single_and_repeated_unlearn_tables() {
        let one = format!("{MINIMAL}\n[unlearn]\nmethod = \"ngd\"\nsigma = 0.0\n");
        let cfg = ExperimentConfig::from_toml(&one).unwrap();
        assert_eq!(cfg.methods()[0].method, Method::Ngd);
        assert_eq!(cfg.methods()[0].sigma, 0.0);
        let demo = ExperimentConfig::demo_iris();
        let methods: Vec<Method> = demo.methods().iter().map(|h| h.method).collect();
        assert_eq!(methods, vec![Method::Gd, Method::Rurk]);
        assert_eq!(demo.seeds, vec![131, 42, 7]);
    }

    #[test]
    fn errors_name_the_problem() {
        let unknown = format!("{MINIMAL}\n[eval]\nbogus = 1\n");
        match ExperimentConfig::from_toml(&unknown) {
            Err(LabError::Config(msg)) => assert!(msg.contains("bogus"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mismatch = MINIMAL.replace("seeds = [5]", "seeds = [5, 6]");
        assert!(matches!(ExperimentConfig::from_toml(&mismatch), Err(LabError::Config(_))));
        let bad_tau = format!("{MINIMAL}\n[eval]\ntau_grid = [-0.1]\n");
        assert!(matches!(ExperimentConfig::from_toml(&bad_tau), Err(LabError::Config(_))));
    }
}
