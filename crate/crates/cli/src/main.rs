//! `mvmc`: synthesize, fit, score, tune and benchmark multi-view completion models.

mod experiment;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvmc::admm::AdmmConfig;
use mvmc::apg::ApgConfig;
use mvmc::datagen::SynthSpec;
use mvmc::tune::{reparam_lambdas, CvMetric, ParamGrid};
use mvmc::{LossKind, ModelSpec, Variant};

use experiment::{ExperimentConfig, FoldSetup, Inputs, SolverKind, Task, TuneMode};

/// Error record printed to stderr as JSON.
#[derive(Debug)]
pub struct CliError {
    kind: String,
    message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        CliError {
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::new("io-error", format!("{}: {e}", path.display()))
    }
}

impl From<mvmc::Error> for CliError {
    fn from(e: mvmc::Error) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "mvmc", version, about = "Convex multi-view matrix completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a two-view synthetic problem with its ground truth.
    Synth(SynthArgs),
    /// Fit a model and write its blocks, predictions and traces.
    Solve(SolveArgs),
    /// Score predictions against held-out entries.
    Eval(EvalArgs),
    /// Choose hyperparameters by cross-validation.
    Tune(TuneArgs),
    /// Run ADMM and APG on the same problem and record objective against time.
    Bench(BenchArgs),
    /// Repeat an experiment from its meta.json.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d1: usize,
    #[arg(long)]
    d2: usize,
    #[arg(long)]
    r0: Option<usize>,
    #[arg(long)]
    r1: Option<usize>,
    #[arg(long)]
    r2: Option<usize>,
    #[arg(long)]
    outlier_density: Option<f64>,
    #[arg(long)]
    outlier_scale: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    observed_fraction: Option<f64>,
    /// squared or logistic
    #[arg(long, default_value = "squared")]
    second_view_loss: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    /// View files (`.coo`, or dense `.csv`), one per view.
    #[arg(long, num_args = 1.., conflicts_with_all = ["features", "labels"])]
    views: Vec<PathBuf>,
    /// Loss weight per view (comma separated); defaults to 1.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    /// Features CSV, one sample per row.
    #[arg(long, requires = "labels")]
    features: Option<PathBuf>,
    /// Labels CSV (0/1 or ±1), one sample per row.
    #[arg(long, requires = "features")]
    labels: Option<PathBuf>,
    /// Fraction of multi-label entries kept for training.
    #[arg(long, default_value_t = 0.8)]
    observed_fraction: f64,
}

#[derive(Args)]
struct ModelArgs {
    /// I00, I0R, J00, J0R, JL0 or JLR.
    #[arg(long, default_value = "JLR")]
    model: String,
    /// Overall trace-norm weight.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Split between shared and specific weights: λ0 = λ/(1-c), λk = λ/c.
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda_k: Vec<f64>,
    /// Sparsity weight, one value or one per view.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    alpha: Vec<f64>,
}

#[derive(Args)]
struct AdmmArgs {
    #[arg(long)]
    outer_iters: Option<usize>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    primal_tol: Option<f64>,
    #[arg(long)]
    mu_max: Option<f64>,
    #[arg(long)]
    mm_steps: Option<usize>,
}

#[derive(Args)]
struct ApgArgs {
    #[arg(long)]
    apg_max_iters: Option<usize>,
    #[arg(long)]
    apg_step: Option<f64>,
    #[arg(long)]
    apg_backtrack: Option<f64>,
    #[arg(long)]
    apg_tol: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "admm")]
    solver: SolverKind,
    #[command(flatten)]
    admm: AdmmArgs,
    #[command(flatten)]
    apg: ApgArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction CSVs, one per view.
    #[arg(long, num_args = 1.., required = true)]
    pred: Vec<PathBuf>,
    /// Held-out COO files, in the same view order.
    #[arg(long, num_args = 1.., required = true)]
    test: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[arg(long, default_value = "JLR")]
    model: String,
    #[arg(long, value_enum, default_value = "grid")]
    mode: TuneMode,
    /// Evaluation budget for gfo mode.
    #[arg(long, default_value_t = 100)]
    budget: usize,
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = 5, conflicts_with = "holdout")]
    folds: usize,
    /// Use a single split holding out this fraction instead of k folds.
    #[arg(long)]
    holdout: Option<f64>,
    /// held-out-loss, test-error:K or label-error:K (K is a 1-based view).
    #[arg(long, default_value = "held-out-loss")]
    metric: String,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    c_grid: Vec<f64>,
    #[command(flatten)]
    admm: AdmmArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    admm: AdmmArgs,
    #[command(flatten)]
    apg: ApgArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RerunArgs {
    #[arg(long)]
    meta: PathBuf,
    /// Output directory; defaults to the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

type Result<T> = std::result::Result<T, CliError>;

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| CliError::io(p, e))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::new("invalid-argument", msg)
}

impl InputArgs {
    fn resolve(&self) -> Result<Inputs> {
        match (&self.features, &self.labels) {
            (Some(f), Some(l)) => Ok(Inputs::Multilabel {
                features: absolute(f)?,
                labels: absolute(l)?,
                observed_fraction: self.observed_fraction,
            }),
            _ => {
                if self.views.is_empty() {
                    return Err(invalid("give --views or --features with --labels"));
                }
                let weights = match self.weights.len() {
                    0 => vec![1.0; self.views.len()],
                    1 => vec![self.weights[0]; self.views.len()],
                    _ => self.weights.clone(),
                };
                Ok(Inputs::Views {
                    paths: self.views.iter().map(|p| absolute(p)).collect::<Result<_>>()?,
                    weights,
                })
            }
        }
    }

    fn n_views(&self) -> usize {
        if self.features.is_some() {
            2
        } else {
            self.views.len()
        }
    }
}

fn per_view(values: &[f64], views: usize, name: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; views]),
        n if n == views => Ok(values.to_vec()),
        n => Err(invalid(format!("{n} values for --{name}, expected 1 or {views}"))),
    }
}

impl ModelArgs {
    fn resolve(&self, views: usize) -> Result<(Variant, ModelSpec)> {
        let variant: Variant = self.model.parse()?;
        let (shared, specific, _) = variant.flags();
        let (mut lambda0, mut lambda_k) = if shared && specific {
            reparam_lambdas(self.lambda, self.c, views)?
        } else {
            (self.lambda, vec![self.lambda; views])
        };
        if let Some(l0) = self.lambda0 {
            lambda0 = l0;
        }
        if !self.lambda_k.is_empty() {
            lambda_k = per_view(&self.lambda_k, views, "lambda-k")?;
        }
        let mut spec = ModelSpec::from_variant(variant, views, lambda0, 0.0, 0.0);
        spec.lambda_k = lambda_k;
        spec.alpha_k = per_view(&self.alpha, views, "alpha")?;
        spec.validate(views)?;
        Ok((variant, spec))
    }
}

impl AdmmArgs {
    fn resolve(&self, seed: u64) -> Result<AdmmConfig> {
        let d = AdmmConfig::default();
        let cfg = AdmmConfig {
            outer_iters: self.outer_iters.unwrap_or(d.outer_iters),
            inner_iters: self.inner_iters.unwrap_or(d.inner_iters),
            mu0: self.mu0.unwrap_or(d.mu0),
            rho: self.rho.unwrap_or(d.rho),
            primal_tol: self.primal_tol.unwrap_or(d.primal_tol),
            mu_max: self.mu_max.unwrap_or(d.mu_max),
            mm_steps: self.mm_steps.unwrap_or(d.mm_steps),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ApgArgs {
    fn resolve(&self) -> Result<ApgConfig> {
        let d = ApgConfig::default();
        let cfg = ApgConfig {
            max_iters: self.apg_max_iters.unwrap_or(d.max_iters),
            step: self.apg_step.unwrap_or(d.step),
            backtrack: self.apg_backtrack.unwrap_or(d.backtrack),
            tol: self.apg_tol.unwrap_or(d.tol),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_metric(s: &str) -> Result<CvMetric> {
    let view = |k: &str| -> Result<usize> {
        match k.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(k - 1),
            _ => Err(invalid(format!("bad view index in metric `{s}`"))),
        }
    };
    match s.split_once(':') {
        None if s == "held-out-loss" => Ok(CvMetric::HeldOutLoss),
        Some(("test-error", k)) => Ok(CvMetric::TestError(view(k)?)),
        Some(("label-error", k)) => Ok(CvMetric::LabelError(view(k)?)),
        _ => Err(invalid(format!("unknown metric `{s}`"))),
    }
}

fn build(command: Command) -> Result<ExperimentConfig> {
    let config = match command {
        Command::Synth(a) => {
            let mut s = SynthSpec::for_dims(a.n, a.d1, a.d2);
            s.r0 = a.r0.unwrap_or(s.r0);
            s.r1 = a.r1.unwrap_or(s.r1);
            s.r2 = a.r2.unwrap_or(s.r2);
            s.outlier_density = a.outlier_density.unwrap_or(s.outlier_density);
            s.noise_sd = a.noise_sd.unwrap_or(s.noise_sd);
            s.outlier_scale = a.outlier_scale.unwrap_or(10.0 * s.noise_sd);
            s.observed_fraction = a.observed_fraction.unwrap_or(s.observed_fraction);
            s.second_view_loss = a.second_view_loss.parse::<LossKind>()?;
            s.seed = a.seed;
            s.validate()?;
            ExperimentConfig::new(Task::Synth { synth: s }, absolute(&a.out)?, a.seed)
        }
        Command::Solve(a) => {
            let (model, spec) = a.model.resolve(a.inputs.n_views())?;
            let task = Task::Solve {
                model,
                solver: a.solver,
                spec,
                admm: a.admm.resolve(a.seed)?,
                apg: a.apg.resolve()?,
                inputs: a.inputs.resolve()?,
            };
            ExperimentConfig::new(task, absolute(&a.out)?, a.seed)
        }
        Command::Eval(a) => {
            let task = Task::Eval {
                predictions: a.pred.iter().map(|p| absolute(p)).collect::<Result<_>>()?,
                tests: a.test.iter().map(|p| absolute(p)).collect::<Result<_>>()?,
            };
            ExperimentConfig::new(task, absolute(&a.out)?, 0)
        }
        Command::Tune(a) => {
            let std = ParamGrid::standard();
            let or_std = |v: &Vec<f64>, d: Vec<f64>| if v.is_empty() { d } else { v.clone() };
            let grid = ParamGrid {
                lambda_values: or_std(&a.lambda_grid, std.lambda_values),
                alpha_values: or_std(&a.alpha_grid, std.alpha_values),
                c_values: or_std(&a.c_grid, std.c_values),
            };
            let folds = match a.holdout {
                Some(fraction) => FoldSetup::Holdout { fraction },
                None => FoldSetup::Kfold { k: a.folds },
            };
            let task = Task::Tune {
                model: a.model.parse()?,
                mode: a.mode,
                grid,
                budget: a.budget,
                folds,
                metric: parse_metric(&a.metric)?,
                admm: a.admm.resolve(a.seed)?,
                inputs: a.inputs.resolve()?,
            };
            ExperimentConfig::new(task, absolute(&a.out)?, a.seed)
        }
        Command::Bench(a) => {
            let (model, spec) = a.model.resolve(a.inputs.n_views())?;
            let task = Task::Bench {
                model,
                spec,
                admm: a.admm.resolve(a.seed)?,
                apg: a.apg.resolve()?,
                inputs: a.inputs.resolve()?,
            };
            ExperimentConfig::new(task, absolute(&a.out)?, a.seed)
        }
        Command::Rerun(a) => {
            let mut config = ExperimentConfig::load(&a.meta)?;
            if let Some(out) = a.out {
                config.output_dir = absolute(&out)?;
            }
            config
        }
    };
    Ok(config)
}

fn report(e: &CliError) {
    let record = serde_json::json!({ "error": { "kind": e.kind, "message": e.message } });
    eprintln!("{record}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report(&CliError::new("usage", e.render().to_string().trim_end()));
            return ExitCode::from(2);
        }
    };
    match build(cli.command).and_then(|config| experiment::run(&config)) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            report(&e);
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn metrics_use_one_based_views() {
        assert_eq!(parse_metric("held-out-loss").unwrap(), CvMetric::HeldOutLoss);
        assert_eq!(parse_metric("test-error:1").unwrap(), CvMetric::TestError(0));
        assert_eq!(parse_metric("label-error:2").unwrap(), CvMetric::LabelError(1));
        for bad in ["label-error:0", "test-error:x", "accuracy", "held-out-loss:1"] {
            assert_eq!(parse_metric(bad).unwrap_err().kind, "invalid-argument", "{bad}");
        }
    }

    #[test]
    fn model_weights_follow_the_c_split() {
        let args = ModelArgs {
            model: "jlr".into(),
            lambda: 2.0,
            c: 0.25,
            lambda0: None,
            lambda_k: vec![],
            alpha: vec![0.5, 3.0],
        };
        let (v, spec) = args.resolve(2).unwrap();
        assert_eq!(v, Variant::JLR);
        assert!((spec.lambda0 - 2.0 / 0.75).abs() < 1e-12);
        assert_eq!(spec.lambda_k, vec![8.0, 8.0]);
        assert_eq!(spec.alpha_k, vec![0.5, 3.0]);

        let single = ModelArgs {
            model: "J00".into(),
            lambda0: Some(5.0),
            ..args
        };
        let (_, spec) = single.resolve(2).unwrap();
        assert_eq!((spec.lambda0, spec.specific, spec.robust), (5.0, false, false));
        assert!(per_view(&[1.0, 2.0], 3, "alpha").is_err());
    }
}
