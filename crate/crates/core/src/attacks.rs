//! Perturbations inside the norm ball around an input: Gaussian noise,
//! FGSM, PGD, and the vulnerable-set search used by RURK.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, LabError, Result};
use crate::nn::MlpModel;
use crate::rng::LabRng;

/// Default PGD step size, 2/255.
pub const PGD_DEFAULT_STEP: f64 = 2.0 / 255.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    #[default]
    Gaussian,
    Fgsm,
    Pgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    #[default]
    RandomWrongLabel,
    FixedLabel(usize),
}

/// How perturbed copies of an input are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    #[serde(default)]
    pub kind: AttackKind,
    /// Implied by `kind` when omitted.
    #[serde(default)]
    pub p: Option<Norm>,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_true")]
    pub targeted: bool,
    #[serde(default)]
    pub target_rule: TargetRule,
    #[serde(default = "default_c")]
    pub c: usize,
    #[serde(default = "default_true")]
    pub clamp: bool,
}

fn default_step() -> f64 {
    PGD_DEFAULT_STEP
}

fn default_steps() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_c() -> usize {
    100
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self::gaussian(0.0, 100)
    }
}

impl PerturbationSpec {
    pub fn gaussian(tau: f64, c: usize) -> Self {
        Self {
            kind: AttackKind::Gaussian,
            p: Some(Norm::L2),
            tau,
            step_size: PGD_DEFAULT_STEP,
            steps: 10,
            targeted: true,
            target_rule: TargetRule::RandomWrongLabel,
            c,
            clamp: true,
        }
    }

    pub fn norm(&self) -> Norm {
        self.p.unwrap_or(match self.kind {
            AttackKind::Gaussian => Norm::L2,
            AttackKind::Fgsm | AttackKind::Pgd => Norm::Linf,
        })
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self { tau, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return config_err(format!("attack.tau must be non-negative, got {}", self.tau));
        }
        if self.c == 0 {
            return config_err("attack.c must be at least 1");
        }
        match (self.kind, self.norm()) {
            (AttackKind::Gaussian, Norm::L2) | (AttackKind::Fgsm | AttackKind::Pgd, Norm::Linf) => {}
            (kind, p) => return config_err(format!("attack.kind {kind:?} is incompatible with norm {p:?}")),
        }
        if self.kind == AttackKind::Pgd && !(self.step_size > 0.0) {
            return config_err(format!("attack.step_size must be positive, got {}", self.step_size));
        }
        Ok(())
    }
}

/// `sign(0) = 0`: a zero coordinate is left in place.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clamp_unit(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

fn check_target(model: &MlpModel, y: usize, targeted: bool, target: usize) -> Result<()> {
    let k = model.num_classes();
    if y >= k {
        return Err(LabError::Shape(format!("label {y} out of range for {k} classes")));
    }
    if targeted {
        if target >= k {
            return config_err(format!("target label {target} out of range for {k} classes"));
        }
        if target == y {
            return config_err(format!("target label {target} equals the true label"));
        }
    }
    Ok(())
}

/// `x + N(0, tau^2 I)`, optionally clamped into `[0, 1]`.
pub fn sample_gaussian(x: &[f64], tau: f64, clamp: bool, rng: &mut LabRng) -> Vec<f64> {
    let mut out: Vec<f64> = x
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(rng);
            v + tau * z
        })
        .collect();
    if clamp {
        clamp_unit(&mut out);
    }
    out
}

/// Signed gradient direction: ascent on the true-label loss when untargeted,
/// descent on the target-label loss when targeted.
fn step_direction(model: &MlpModel, x: &[f64], y: usize, targeted: bool, target: usize) -> Result<Vec<f64>> {
    if targeted {
        Ok(model.grad_input(x, target)?.iter().map(|&g| -sign(g)).collect())
    } else {
        Ok(model.grad_input(x, y)?.iter().map(|&g| sign(g)).collect())
    }
}

/// One signed-gradient step of size `tau`.
pub fn fgsm(model: &MlpModel, x: &[f64], y: usize, tau: f64, targeted: bool, target: usize, clamp: bool) -> Result<Vec<f64>> {
    check_target(model, y, targeted, target)?;
    let dir = step_direction(model, x, y, targeted, target)?;
    let mut out: Vec<f64> = x.iter().zip(&dir).map(|(&v, &s)| v + tau * s).collect();
    if clamp {
        clamp_unit(&mut out);
    }
    Ok(out)
}

fn project_linf(z: &mut [f64], center: &[f64], tau: f64) {
    for (v, &c) in z.iter_mut().zip(center) {
        *v = v.clamp(c - tau, c + tau);
    }
}

/// Projected gradient descent in the l-infinity ball with a uniform random start.
#[allow(clippy::too_many_arguments)]
pub fn pgd(
    model: &MlpModel,
    x: &[f64],
    y: usize,
    tau: f64,
    step_size: f64,
    steps: usize,
    targeted: bool,
    target: usize,
    rng: &mut LabRng,
    clamp: bool,
) -> Result<Vec<f64>> {
    check_target(model, y, targeted, target)?;
    let mut z: Vec<f64> = x.iter().map(|&v| if tau > 0.0 { v + rng.random_range(-tau..=tau) } else { v }).collect();
    project_linf(&mut z, x, tau);
    if clamp {
        clamp_unit(&mut z);
    }
    for _ in 0..steps {
        let dir = step_direction(model, &z, y, targeted, target)?;
        z.iter_mut().zip(&dir).for_each(|(v, &s)| *v += step_size * s);
        project_linf(&mut z, x, tau);
        if clamp {
            clamp_unit(&mut z);
        }
    }
    Ok(z)
}

/// Uniform draw from the labels other than `y`.
pub fn random_wrong_label(y: usize, classes: usize, rng: &mut LabRng) -> Result<usize> {
    if classes < 2 {
        return config_err("no wrong label exists with fewer than two classes");
    }
    let r = rng.random_range(0..classes - 1);
    Ok(if r >= y { r + 1 } else { r })
}

/// One perturbed copy of `x` per `spec`; attacks are computed against `model`.
pub fn perturb(model: &MlpModel, x: &[f64], y: usize, spec: &PerturbationSpec, rng: &mut LabRng) -> Result<Vec<f64>> {
    match spec.kind {
        AttackKind::Gaussian => Ok(sample_gaussian(x, spec.tau, spec.clamp, rng)),
        AttackKind::Fgsm | AttackKind::Pgd => {
            let target = if spec.targeted {
                match spec.target_rule {
                    TargetRule::RandomWrongLabel => random_wrong_label(y, model.num_classes(), rng)?,
                    TargetRule::FixedLabel(k) => k,
                }
            } else {
                y
            };
            if spec.kind == AttackKind::Fgsm {
                fgsm(model, x, y, spec.tau, spec.targeted, target, spec.clamp)
            } else {
                pgd(model, x, y, spec.tau, spec.step_size, spec.steps, spec.targeted, target, rng, spec.clamp)
            }
        }
    }
}

/// How `find_vulnerable` searches the ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum VulnerableSearch {
    /// Treat the whole ball as vulnerable and draw Gaussian samples from it.
    #[default]
    Ball,
    /// Push away from a random wrong label `y' != y` with FGSM (`steps = 0`) or PGD.
    TargetedAttack { step_size: f64, steps: usize },
}

/// `v` candidate perturbations of `(x, y)` that `model` should still map to `y`.
///
/// The attack variant ascends the loss of a random wrong label, which keeps
/// the candidate on the true-label side of the boundary.
#[allow(clippy::too_many_arguments)]
pub fn find_vulnerable(
    model: &MlpModel,
    x: &[f64],
    y: usize,
    tau: f64,
    v: usize,
    method: VulnerableSearch,
    clamp: bool,
    rng: &mut LabRng,
) -> Result<Vec<Vec<f64>>> {
    if v == 0 {
        return config_err("vulnerable-set size v must be at least 1");
    }
    if model.num_classes() < 2 {
        return config_err("vulnerable-set search needs at least two classes");
    }
    (0..v)
        .map(|_| match method {
            VulnerableSearch::Ball => Ok(sample_gaussian(x, tau, clamp, rng)),
            VulnerableSearch::TargetedAttack { step_size, steps } => {
                let wrong = random_wrong_label(y, model.num_classes(), rng)?;
                if steps == 0 {
                    fgsm(model, x, wrong, tau, false, wrong, clamp)
                } else {
                    pgd(model, x, wrong, tau, step_size, steps, false, wrong, rng, clamp)
                }
            }
        })
        .collect()
}
