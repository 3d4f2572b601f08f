use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use unlearn_lab::config::ExperimentConfig;
use unlearn_lab::evaluate::rk_curve_csv;
use unlearn_lab::nn::checkpoint;
use unlearn_lab::pipeline::{
    evaluate_stage, load_base, method_slugs, run_experiment, save_base, to_pretty_json, train_stage, trial_dir, unlearn_stage,
    BaseModels, TrialResult, UnlearnedModel,
};
use unlearn_lab::theory::{theory_report, theory_report_csv, TheoryConfig};
use unlearn_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "unlearn-lab", version, about = "Machine unlearning lab with residual-knowledge evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for single-trial subcommands; overrides the trial's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trial index for single-trial subcommands.
    #[arg(long, global = true, default_value_t = 0)]
    trial: usize,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Train the original and re-train models.
    Train,
    /// Run the configured unlearning methods.
    Unlearn,
    /// Evaluate every model of one trial.
    Evaluate,
    /// Residual-knowledge curves of one trial.
    RkCurve,
    /// Numerical checks of the indistinguishability results.
    Theory,
    /// Built-in Iris experiment: GD against RURK.
    DemoIris,
    /// Full pipeline over all trials.
    Run,
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    trial: usize,
    seed: u64,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let cfg = match (&cli.config, cli.command) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, Command::DemoIris) => ExperimentConfig::demo_iris(),
            (None, _) => return Err(LabError::Config("--config <path> is required".into())),
        };
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
        let seed = match cli.seed {
            Some(s) => s,
            None => *cfg
                .seeds
                .get(cli.trial)
                .ok_or_else(|| LabError::Config(format!("--trial {} out of range for {} seeds", cli.trial, cfg.seeds.len())))?,
        };
        Ok(Self { cfg, out, trial: cli.trial, seed })
    }

    fn dir(&self) -> PathBuf {
        trial_dir(&self.out, self.trial, self.seed)
    }
}

fn base_models(ctx: &Ctx, task: &unlearn_lab::datasets::UnlearnTask) -> Result<BaseModels> {
    if let Some(b) = load_base(&ctx.dir())? {
        return Ok(b);
    }
    let base = train_stage(&ctx.cfg, task, ctx.seed)?;
    save_base(&ctx.dir(), &base)?;
    Ok(base)
}

fn unlearned_models(ctx: &Ctx, task: &unlearn_lab::datasets::UnlearnTask, base: &BaseModels) -> Result<Vec<UnlearnedModel>> {
    let methods = ctx.cfg.methods();
    let slugs = method_slugs(&methods);
    let dir = ctx.dir();
    if !slugs.is_empty() && slugs.iter().all(|s| dir.join(format!("{s}.toml")).exists()) {
        return methods
            .iter()
            .zip(slugs)
            .map(|(h, slug)| {
                Ok(UnlearnedModel {
                    label: h.method.label().to_string(),
                    model: checkpoint::load(dir.join(format!("{slug}.toml")))?,
                    slug,
                    warnings: Vec::new(),
                })
            })
            .collect();
    }
    let models = unlearn_stage(&ctx.cfg, task, base, ctx.seed)?;
    for u in &models {
        checkpoint::save(&u.model, dir.join(format!("{}.toml", u.slug)))?;
    }
    Ok(models)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let ctx = Ctx::new(cli)?;
    match cli.command {
        Command::Run | Command::DemoIris => {
            let report = run_experiment(&ctx.cfg, &ctx.out)?;
            for r in &report.rows {
                let rk = r.rk_curve.last().map_or(f64::NAN, |p| p.r_hat);
                println!(
                    "{:<10} retain {:.4}  unlearn {:.4}  test {:.4}  mia {:.4}  gap {:.3}  r_hat(tau_max) {:.4}",
                    r.method, r.retain_acc.mean, r.unlearn_acc.mean, r.test_acc.mean, r.mia_acc.mean, r.avg_gap.mean, rk
                );
            }
            println!("wrote {}", ctx.out.display());
        }
        Command::Theory => {
            let tc = ctx.cfg.theory.clone().unwrap_or_else(TheoryConfig::default);
            let rows = theory_report(&tc)?;
            let path = ctx.out.join("theory_report.csv");
            write(&path, &theory_report_csv(&rows))?;
            let failed = rows.iter().filter(|r| !r.verdict).count();
            println!("{} checks, {failed} failed; wrote {}", rows.len(), path.display());
        }
        cmd => {
            let task = ctx.cfg.dataset.build()?;
            if cmd == Command::Train {
                let base = train_stage(&ctx.cfg, &task, ctx.seed)?;
                save_base(&ctx.dir(), &base)?;
                println!("wrote {}", ctx.dir().display());
                return Ok(());
            }
            let base = base_models(&ctx, &task)?;
            let unlearned = unlearned_models(&ctx, &task, &base)?;
            if cmd == Command::Unlearn {
                println!("wrote {} unlearned model(s) to {}", unlearned.len(), ctx.dir().display());
                return Ok(());
            }
            let rows = evaluate_stage(&ctx.cfg, &task, &base, &unlearned, ctx.seed)?;
            if cmd == Command::RkCurve {
                for r in &rows {
                    write(&ctx.dir().join(format!("rk_curve_{}.csv", r.slug)), &rk_curve_csv(&r.report.rk))?;
                }
                println!("wrote {} curve(s) to {}", rows.len(), ctx.dir().display());
            } else {
                let result = TrialResult { trial: ctx.trial, seed: ctx.seed, rows };
                write(&ctx.dir().join("report.json"), &to_pretty_json(&result)?)?;
                println!("wrote {}", ctx.dir().join("report.json").display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                LabError::Config(_) | LabError::Parse(_) | LabError::Version { .. } => 2,
                LabError::Numeric(_) | LabError::Shape(_) => 3,
                LabError::Io(_) => 1,
            };
            ExitCode::from(code)
        }
    }
}
