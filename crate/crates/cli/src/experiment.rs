//! Serializable experiment records and the code that executes them.
//!
//! Every run writes its [`ExperimentConfig`] to `meta.json`; feeding that file
//! back through [`run`] regenerates the same numeric outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mvmc::admm::{admm_solve, AdmmConfig, SolveResult};
use mvmc::apg::{apg_solve, ApgConfig};
use mvmc::datagen::{gen_synthetic_problem, SynthSpec};
use mvmc::io::{load_coo, load_dense_csv, load_multilabel, write_coo, write_dense_csv};
use mvmc::metrics::{label_error_percent, normalized_test_error, relative_reconstruction_error};
use mvmc::model::assemble_prediction;
use mvmc::tune::{cv_objective, gfo_minimize, grid_search, CvFolds, CvMetric, ParamGrid, SpecTemplate};
use mvmc::{LatentBlocks, LossKind, Matrix, ModelSpec, MultiViewProblem, Variant, ViewData};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Admm,
    Apg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TuneMode {
    Grid,
    Gfo,
}

/// Where a problem comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Inputs {
    /// One file per view: `.coo` (partially observed) or `.csv` (dense,
    /// fully observed, squared loss; one matrix row per line).
    Views { paths: Vec<PathBuf>, weights: Vec<f64> },
    /// Features and labels CSVs with one sample per row. The split seed is the
    /// experiment seed.
    Multilabel {
        features: PathBuf,
        labels: PathBuf,
        observed_fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FoldSetup {
    Kfold { k: usize },
    Holdout { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Task {
    Synth {
        synth: SynthSpec,
    },
    Solve {
        model: Variant,
        solver: SolverKind,
        spec: ModelSpec,
        admm: AdmmConfig,
        apg: ApgConfig,
        inputs: Inputs,
    },
    Eval {
        predictions: Vec<PathBuf>,
        tests: Vec<PathBuf>,
    },
    Tune {
        model: Variant,
        mode: TuneMode,
        grid: ParamGrid,
        budget: usize,
        folds: FoldSetup,
        metric: CvMetric,
        admm: AdmmConfig,
        inputs: Inputs,
    },
    Bench {
        model: Variant,
        spec: ModelSpec,
        admm: AdmmConfig,
        apg: ApgConfig,
        inputs: Inputs,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(flatten)]
    pub task: Task,
}

impl ExperimentConfig {
    pub fn new(task: Task, output_dir: PathBuf, seed: u64) -> Self {
        ExperimentConfig {
            version: env!("CARGO_PKG_VERSION").to_string(),
            output_dir,
            seed,
            task,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::new("parse-error", format!("{}: {e}", path.display())))
    }
}

/// Runs an experiment and writes its outputs, `meta.json` included. Returns
/// a short JSON summary for stdout.
pub fn run(config: &ExperimentConfig) -> Result<serde_json::Value> {
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let summary = match &config.task {
        Task::Synth { synth } => run_synth(synth, config.seed, out)?,
        Task::Solve {
            solver,
            spec,
            admm,
            apg,
            inputs,
            ..
        } => run_solve(*solver, spec, admm, apg, inputs, config.seed, out)?,
        Task::Eval { predictions, tests } => run_eval(predictions, tests, out)?,
        Task::Tune {
            model,
            mode,
            grid,
            budget,
            folds,
            metric,
            admm,
            inputs,
        } => run_tune(*model, *mode, grid, *budget, *folds, *metric, admm, inputs, config.seed, out)?,
        Task::Bench {
            spec, admm, apg, inputs, ..
        } => run_bench(spec, admm, apg, inputs, config.seed, out)?,
    };
    write_json(&out.join("meta.json"), config)?;
    Ok(summary)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::new("internal", e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| CliError::io(path, e))
}

/// Problem plus, for multi-label inputs, the hidden entries of each view.
struct Loaded {
    problem: MultiViewProblem,
    heldout: Option<Vec<ViewData>>,
}

fn load_inputs(inputs: &Inputs, seed: u64) -> Result<Loaded> {
    match inputs {
        Inputs::Views { paths, weights } => {
            if paths.is_empty() {
                return Err(CliError::new("invalid-argument", "at least one view is required"));
            }
            if weights.len() != paths.len() {
                return Err(CliError::new(
                    "invalid-argument",
                    format!("{} weights for {} views", weights.len(), paths.len()),
                ));
            }
            let mut n = None;
            let mut views = Vec::new();
            for (path, &w) in paths.iter().zip(weights) {
                let (cols, view) = if path.extension().is_some_and(|e| e == "csv") {
                    let m = load_dense_csv(path)?;
                    let entries = (0..m.ncols())
                        .flat_map(|j| (0..m.nrows()).map(move |i| (i, j)))
                        .map(|(i, j)| (i, j, m[(i, j)]))
                        .collect();
                    (m.ncols(), ViewData::new(m.nrows(), entries, LossKind::Squared))
                } else {
                    let coo = load_coo(path)?;
                    (coo.n, coo.view)
                };
                if *n.get_or_insert(cols) != cols {
                    return Err(CliError::new(
                        "dimension-mismatch",
                        format!("{} has {cols} columns, expected {}", path.display(), n.unwrap()),
                    ));
                }
                views.push(view.with_weight(w));
            }
            Ok(Loaded {
                problem: MultiViewProblem::new(n.unwrap(), views)?,
                heldout: None,
            })
        }
        Inputs::Multilabel {
            features,
            labels,
            observed_fraction,
        } => {
            let data = load_multilabel(features, labels, *observed_fraction, seed)?;
            let full = [&data.features, &data.labels];
            let heldout = data
                .heldout
                .iter()
                .enumerate()
                .map(|(k, set)| {
                    let entries = set.iter().map(|&(i, j)| (i, j, full[k][(i, j)])).collect();
                    ViewData::new(full[k].nrows(), entries, data.problem.views[k].loss)
                })
                .collect();
            Ok(Loaded {
                problem: data.problem,
                heldout: Some(heldout),
            })
        }
    }
}

fn write_heldout(loaded: &Loaded, out: &Path) -> Result<()> {
    if let Some(views) = &loaded.heldout {
        for (k, v) in views.iter().enumerate() {
            write_coo(v, loaded.problem.n, out.join(format!("view{}_test.coo", k + 1)))?;
        }
    }
    Ok(())
}

fn write_blocks(blocks: &LatentBlocks, out: &Path) -> Result<()> {
    if let Some(x0) = &blocks.x0 {
        write_dense_csv(x0, out.join("x0.csv"))?;
    }
    for (name, list) in [("x", &blocks.xk), ("s", &blocks.sk)] {
        for (k, m) in list.iter().flatten().enumerate() {
            write_dense_csv(m, out.join(format!("{name}{}.csv", k + 1)))?;
        }
    }
    Ok(())
}

fn run_synth(synth: &SynthSpec, seed: u64, out: &Path) -> Result<serde_json::Value> {
    let spec = SynthSpec { seed, ..synth.clone() };
    let inst = gen_synthetic_problem(&spec)?;
    let n = inst.problem.n;
    for (k, view) in inst.problem.views.iter().enumerate() {
        write_coo(view, n, out.join(format!("view{}.coo", k + 1)))?;
        let test = inst.test_sets[k].iter().map(|&(i, j)| (i, j, inst.full[k][(i, j)])).collect();
        write_coo(&ViewData::new(view.d, test, view.loss), n, out.join(format!("view{}_test.coo", k + 1)))?;
    }
    let truth = out.join("truth");
    fs::create_dir_all(&truth).map_err(|e| CliError::io(&truth, e))?;
    write_blocks(&inst.truth, &truth)?;
    for (k, y) in inst.full.iter().enumerate() {
        write_dense_csv(y, truth.join(format!("y{}.csv", k + 1)))?;
    }
    Ok(json!({
        "n": n,
        "dims": inst.problem.dims(),
        "observed": inst.problem.views.iter().map(|v| v.entries.len()).collect::<Vec<_>>(),
        "held_out": inst.test_sets.iter().map(Vec::len).collect::<Vec<_>>(),
    }))
}

fn solve_with(problem: &MultiViewProblem, spec: &ModelSpec, solver: SolverKind, admm: &AdmmConfig, apg: &ApgConfig) -> Result<SolveResult> {
    Ok(match solver {
        SolverKind::Admm => admm_solve(problem, spec, admm)?,
        SolverKind::Apg => apg_solve(problem, spec, apg)?,
    })
}

fn run_solve(
    solver: SolverKind,
    spec: &ModelSpec,
    admm: &AdmmConfig,
    apg: &ApgConfig,
    inputs: &Inputs,
    seed: u64,
    out: &Path,
) -> Result<serde_json::Value> {
    let loaded = load_inputs(inputs, seed)?;
    let problem = &loaded.problem;
    log::info!("solving {} views with {solver:?}", problem.n_views());
    let fit = solve_with(problem, spec, solver, admm, apg)?;
    let dims = problem.dims();
    write_blocks(&fit.blocks, out)?;
    for k in 0..dims.len() {
        write_dense_csv(&assemble_prediction(&fit.blocks, spec, &dims, k)?, out.join(format!("pred{}.csv", k + 1)))?;
    }
    write_heldout(&loaded, out)?;

    let mut trace = String::from("iteration,objective,residual\n");
    let mut timing = String::from("iteration,seconds\n");
    for (t, (o, r)) in fit.objective_trace.iter().zip(&fit.residual_trace).enumerate() {
        trace.push_str(&format!("{},{o},{r}\n", t + 1));
        timing.push_str(&format!("{},{}\n", t + 1, fit.time_trace[t]));
    }
    write_text(&out.join("trace.csv"), &trace)?;
    write_text(&out.join("timing.csv"), &timing)?;
    let summary = json!({
        "iterations_run": fit.iterations_run,
        "converged": fit.converged,
        "final_objective": fit.final_objective(),
        "final_residual": fit.final_residual(),
    });
    write_json(&out.join("fit.json"), &summary)?;
    Ok(summary)
}

fn run_eval(predictions: &[PathBuf], tests: &[PathBuf], out: &Path) -> Result<serde_json::Value> {
    if predictions.len() != tests.len() || predictions.is_empty() {
        return Err(CliError::new(
            "invalid-argument",
            format!("need matching prediction and test lists, got {} and {}", predictions.len(), tests.len()),
        ));
    }
    let mut views = Vec::new();
    for (k, (p, t)) in predictions.iter().zip(tests).enumerate() {
        let pred = load_dense_csv(p)?;
        let test = load_coo(t)?;
        if pred.shape() != (test.view.d, test.n) {
            return Err(CliError::new(
                "dimension-mismatch",
                format!("{} is {:?} but {} is {}x{}", p.display(), pred.shape(), t.display(), test.view.d, test.n),
            ));
        }
        let mut truth = Matrix::zeros(test.view.d, test.n);
        for &(i, j, v) in &test.view.entries {
            truth[(i, j)] = v;
        }
        let set = test.view.omega();
        let record = match test.view.loss {
            LossKind::Squared => json!({
                "view": k + 1,
                "loss": "squared",
                "entries": set.len(),
                "test_error_pct": normalized_test_error(&pred, &truth, &set)?,
                "relative_reconstruction_error": relative_reconstruction_error(&pred, &truth, &set)?,
            }),
            LossKind::Logistic => json!({
                "view": k + 1,
                "loss": "logistic",
                "entries": set.len(),
                "label_error_pct": label_error_percent(&pred, &truth, &set)?,
            }),
        };
        views.push(record);
    }
    let metrics = json!({ "views": views });
    write_json(&out.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

fn csv_line(values: impl IntoIterator<Item = String>) -> String {
    let mut s = values.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

#[allow(clippy::too_many_arguments)]
fn run_tune(
    model: Variant,
    mode: TuneMode,
    grid: &ParamGrid,
    budget: usize,
    folds: FoldSetup,
    metric: CvMetric,
    admm: &AdmmConfig,
    inputs: &Inputs,
    seed: u64,
    out: &Path,
) -> Result<serde_json::Value> {
    grid.validate()?;
    let loaded = load_inputs(inputs, seed)?;
    let problem = &loaded.problem;
    if let CvMetric::TestError(k) | CvMetric::LabelError(k) = metric {
        if k >= problem.n_views() {
            return Err(CliError::new(
                "invalid-argument",
                format!("metric view {} out of range for {} views", k + 1, problem.n_views()),
            ));
        }
    }
    let template = SpecTemplate::new(model, problem.n_views());
    let folds = match folds {
        FoldSetup::Kfold { k } => CvFolds::kfold(problem, k, seed)?,
        FoldSetup::Holdout { fraction } => CvFolds::holdout(problem, fraction, seed)?,
    };
    let labels = template.labels();
    let (best_params, best_score, rows) = match mode {
        TuneMode::Grid => {
            let res = grid_search(problem, &template, grid, &folds, metric, admm)?;
            let mut body = csv_line(std::iter::once("index".to_string()).chain(labels.iter().cloned()).chain(["score".into(), "error".into()]));
            for (i, row) in res.table.iter().enumerate() {
                let err = row.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
                body.push_str(&csv_line(
                    std::iter::once(i.to_string())
                        .chain(row.params.iter().map(f64::to_string))
                        .chain([row.score.to_string(), err]),
                ));
            }
            write_text(&out.join("scores.csv"), &body)?;
            let best = res.best_row();
            (best.params.clone(), best.score, res.table.len())
        }
        TuneMode::Gfo => {
            let bounds = template.search_bounds(grid);
            let objective = cv_objective(problem, template, &folds, metric, admm.clone(), bounds, budget);
            let res = gfo_minimize(&objective, &objective.bounds, seed)?;
            let mut body = csv_line(std::iter::once("eval".to_string()).chain(labels.iter().cloned()).chain(["score".into(), "best_so_far".into()]));
            for (i, e) in res.log.iter().enumerate() {
                body.push_str(&csv_line(
                    std::iter::once(i.to_string())
                        .chain(template.from_search(&e.x).iter().map(f64::to_string))
                        .chain([e.score.to_string(), e.best_so_far.to_string()]),
                ));
            }
            write_text(&out.join("scores.csv"), &body)?;
            (template.from_search(&res.best_x), res.best_score, res.log.len())
        }
    };
    let best = json!({
        "labels": labels,
        "params": best_params,
        "score": best_score,
        "spec": template.instantiate(&best_params)?,
        "evaluations": rows,
    });
    write_json(&out.join("best.json"), &best)?;
    Ok(best)
}

fn run_bench(spec: &ModelSpec, admm: &AdmmConfig, apg: &ApgConfig, inputs: &Inputs, seed: u64, out: &Path) -> Result<serde_json::Value> {
    let loaded = load_inputs(inputs, seed)?;
    let a = admm_solve(&loaded.problem, spec, admm)?;
    let p = apg_solve(&loaded.problem, spec, apg)?;
    let rows = a.objective_trace.len().max(p.objective_trace.len());
    let cell = |v: Option<&f64>| v.map(f64::to_string).unwrap_or_default();
    let mut body = String::from("iteration,admm_seconds,admm_objective,apg_seconds,apg_objective\n");
    for t in 0..rows {
        body.push_str(&csv_line([
            (t + 1).to_string(),
            cell(a.time_trace.get(t)),
            cell(a.objective_trace.get(t)),
            cell(p.time_trace.get(t)),
            cell(p.objective_trace.get(t)),
        ]));
    }
    write_text(&out.join("bench.csv"), &body)?;

    let target = a.final_objective().min(p.final_objective());
    let reach = |r: &SolveResult| {
        r.objective_trace
            .iter()
            .zip(&r.time_trace)
            .find(|(o, _)| **o <= target + 0.01 * target.abs())
            .map(|(_, t)| *t)
    };
    let summary = json!({
        "best_objective": target,
        "admm": { "final_objective": a.final_objective(), "iterations": a.iterations_run, "seconds": a.wall_time, "seconds_to_1pct": reach(&a) },
        "apg": { "final_objective": p.final_objective(), "iterations": p.iterations_run, "seconds": p.wall_time, "seconds_to_1pct": reach(&p) },
    });
    write_json(&out.join("bench.json"), &summary)?;
    Ok(summary)
}
