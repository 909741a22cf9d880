//! Hyperparameter search.
//!
//! Weights are searched through a template per variant: one global `λ`, a
//! mixing coefficient `c` for variants that have both a shared and
//! view-specific blocks (`λ0 = λ/(1−c)`, `λ_k = λ/c`), and one `α_k` per view
//! for robust variants. Candidates are scored by cross-validation over the
//! observed entries, either exhaustively on a grid or with a bounded
//! Nelder–Mead search working in `log10` space for `λ` and `α`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, AdmmConfig};
use crate::datagen::rng_for;
use crate::loss::loss_unchecked;
use crate::metrics::{label_error_percent, normalized_test_error};
use crate::model::{assemble_prediction, ModelSpec, MultiViewProblem, Variant, ViewData};
use crate::{Error, Matrix, Result};

/// Candidate values for each kind of hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub lambda_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub c_values: Vec<f64>,
}

impl ParamGrid {
    /// `λ, α ∈ {10⁻², …, 10²}`, `c ∈ {0.1, …, 0.9}`.
    pub fn standard() -> Self {
        ParamGrid {
            lambda_values: vec![1e-2, 1e-1, 1.0, 1e1, 1e2],
            alpha_values: vec![1e-2, 1e-1, 1.0, 1e1, 1e2],
            c_values: (1..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_values.is_empty() || self.alpha_values.is_empty() || self.c_values.is_empty() {
            return Err(Error::invalid("parameter grid lists must be non-empty"));
        }
        if self.lambda_values.iter().chain(&self.alpha_values).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("grid weights must be positive"));
        }
        if self.c_values.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
            return Err(Error::invalid("grid c values must lie strictly inside (0, 1)"));
        }
        Ok(())
    }
}

/// `λ0 = λ/(1 − c)` and `λ_k = λ/c` for every view.
pub fn reparam_lambdas(lambda: f64, c: f64, views: usize) -> Result<(f64, Vec<f64>)> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid(format!("c must lie in (0, 1), got {c}")));
    }
    Ok((lambda / (1.0 - c), vec![lambda / c; views]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Lambda,
    Mix,
    Alpha(usize),
}

impl ParamKind {
    fn is_log(self) -> bool {
        !matches!(self, ParamKind::Mix)
    }

    pub fn label(self) -> String {
        match self {
            ParamKind::Lambda => "lambda".into(),
            ParamKind::Mix => "c".into(),
            ParamKind::Alpha(k) => format!("alpha{}", k + 1),
        }
    }
}

/// Maps a flat parameter vector to a [`ModelSpec`] for one variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecTemplate {
    pub variant: Variant,
    pub views: usize,
}

impl SpecTemplate {
    pub fn new(variant: Variant, views: usize) -> Self {
        SpecTemplate { variant, views }
    }

    pub fn params(&self) -> Vec<ParamKind> {
        let (shared, specific, robust) = self.variant.flags();
        let mut out = vec![ParamKind::Lambda];
        if shared && specific {
            out.push(ParamKind::Mix);
        }
        if robust {
            out.extend((0..self.views).map(ParamKind::Alpha));
        }
        out
    }

    pub fn labels(&self) -> Vec<String> {
        self.params().into_iter().map(ParamKind::label).collect()
    }

    /// Builds a [`ModelSpec`] from natural-scale parameters laid out as [`Self::params`].
    pub fn instantiate(&self, values: &[f64]) -> Result<ModelSpec> {
        let kinds = self.params();
        if values.len() != kinds.len() {
            return Err(Error::invalid(format!("{} expects {} parameters, got {}", self.variant, kinds.len(), values.len())));
        }
        let (shared, specific, robust) = self.variant.flags();
        let lambda = values[0];
        let (lambda0, lambda_k) = if shared && specific {
            reparam_lambdas(lambda, values[1], self.views)?
        } else {
            (lambda, vec![lambda; self.views])
        };
        let alpha_k = if robust {
            values[values.len() - self.views..].to_vec()
        } else {
            vec![0.0; self.views]
        };
        let spec = ModelSpec {
            shared,
            specific,
            robust,
            lambda0,
            lambda_k,
            alpha_k,
        };
        spec.validate(self.views)?;
        Ok(spec)
    }

    /// Natural scale to search coordinates (`log10` for weights).
    pub fn to_search(&self, values: &[f64]) -> Vec<f64> {
        self.params()
            .iter()
            .zip(values)
            .map(|(k, v)| if k.is_log() { v.log10() } else { *v })
            .collect()
    }

    pub fn from_search(&self, coords: &[f64]) -> Vec<f64> {
        self.params()
            .iter()
            .zip(coords)
            .map(|(k, v)| if k.is_log() { 10f64.powf(*v) } else { *v })
            .collect()
    }

    /// Per-dimension candidate lists taken from `grid`.
    pub fn grid_axes(&self, grid: &ParamGrid) -> Vec<Vec<f64>> {
        self.params()
            .into_iter()
            .map(|k| match k {
                ParamKind::Lambda => grid.lambda_values.clone(),
                ParamKind::Mix => grid.c_values.clone(),
                ParamKind::Alpha(_) => grid.alpha_values.clone(),
            })
            .collect()
    }

    /// All grid cells in lexicographic order (first parameter varies slowest).
    pub fn grid_cells(&self, grid: &ParamGrid) -> Vec<Vec<f64>> {
        let axes = self.grid_axes(grid);
        let mut cells = vec![Vec::new()];
        for axis in &axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push(*v);
                        c
                    })
                })
                .collect();
        }
        cells
    }

    /// Search-space box spanned by the grid.
    pub fn search_bounds(&self, grid: &ParamGrid) -> Vec<(f64, f64)> {
        self.params()
            .iter()
            .zip(self.grid_axes(grid))
            .map(|(k, axis)| {
                let lo = axis.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = axis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if k.is_log() {
                    (lo.log10(), hi.log10())
                } else {
                    (lo, hi)
                }
            })
            .collect()
    }
}

/// Shuffles `0..n` and deals it into `k` folds whose sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("need 2 <= k <= n for k-fold split, got k={k}, n={n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// A single random held-out subset of `⌊fraction·n⌋` (at least one) indices.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<Vec<Vec<usize>>> {
    if !(fraction > 0.0 && fraction < 1.0) || n < 2 {
        return Err(Error::invalid(format!("holdout needs fraction in (0, 1) and n >= 2, got {fraction}, {n}")));
    }
    let count = ((fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed));
    let mut fold = idx[..count].to_vec();
    fold.sort_unstable();
    Ok(vec![fold])
}

/// Removed `(row, col, value)` entries, one list per view.
pub type HeldOut = Vec<Vec<(usize, usize, f64)>>;

/// Held-out entry indices, per view and per fold (`per_view[view][fold]`).
#[derive(Debug, Clone, PartialEq)]
pub struct CvFolds {
    pub per_view: Vec<Vec<Vec<usize>>>,
}

impl CvFolds {
    /// Entry-level k-fold split of every view's observed entries.
    pub fn kfold(problem: &MultiViewProblem, k: usize, seed: u64) -> Result<Self> {
        let per_view = problem
            .views
            .iter()
            .enumerate()
            .map(|(v, view)| kfold_split(view.entries.len(), k, seed.wrapping_add(v as u64)))
            .collect::<Result<_>>()?;
        Ok(CvFolds { per_view })
    }

    /// One held-out fraction of every view's observed entries.
    pub fn holdout(problem: &MultiViewProblem, fraction: f64, seed: u64) -> Result<Self> {
        let per_view = problem
            .views
            .iter()
            .enumerate()
            .map(|(v, view)| holdout_split(view.entries.len(), fraction, seed.wrapping_add(v as u64)))
            .collect::<Result<_>>()?;
        Ok(CvFolds { per_view })
    }

    pub fn n_folds(&self) -> usize {
        self.per_view.first().map_or(0, |f| f.len())
    }

    /// Training problem with fold `f` removed, and the removed entries per view.
    pub fn split(&self, problem: &MultiViewProblem, f: usize) -> (MultiViewProblem, HeldOut) {
        let mut views = Vec::with_capacity(problem.views.len());
        let mut held = Vec::with_capacity(problem.views.len());
        for (view, folds) in problem.views.iter().zip(&self.per_view) {
            let mut out = vec![false; view.entries.len()];
            for &i in &folds[f] {
                out[i] = true;
            }
            let (test, train): (Vec<_>, Vec<_>) = view.entries.iter().zip(&out).partition(|(_, o)| **o);
            views.push(ViewData {
                entries: train.into_iter().map(|(e, _)| *e).collect(),
                ..view.clone()
            });
            held.push(test.into_iter().map(|(e, _)| *e).collect());
        }
        (MultiViewProblem { n: problem.n, views }, held)
    }
}

/// How a fitted model is scored on held-out entries (lower is better).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvMetric {
    /// Mean over views of the mean per-entry loss.
    HeldOutLoss,
    /// Normalized test error (percent) on one view.
    TestError(usize),
    /// Sign error (percent) on one logistic view.
    LabelError(usize),
}

impl CvMetric {
    fn score(self, problem: &MultiViewProblem, preds: &[Matrix], held: &[Vec<(usize, usize, f64)>]) -> Result<f64> {
        let dense = |k: usize| {
            let mut t = Matrix::zeros(problem.views[k].d, problem.n);
            let mut set = Vec::with_capacity(held[k].len());
            for &(i, j, v) in &held[k] {
                t[(i, j)] = v;
                set.push((i, j));
            }
            (t, set)
        };
        match self {
            CvMetric::HeldOutLoss => {
                let mut total = 0.0;
                let mut counted = 0;
                for (k, view) in problem.views.iter().enumerate() {
                    if held[k].is_empty() {
                        continue;
                    }
                    let sum: f64 = held[k].iter().map(|&(i, j, y)| loss_unchecked(view.loss, preds[k][(i, j)], y)).sum();
                    total += sum / held[k].len() as f64;
                    counted += 1;
                }
                if counted == 0 {
                    return Err(Error::UndefinedMetric("no held-out entries".into()));
                }
                Ok(total / counted as f64)
            }
            CvMetric::TestError(k) | CvMetric::LabelError(k) => {
                if k >= preds.len() {
                    return Err(Error::invalid(format!("metric view {k} out of range")));
                }
                let (truth, set) = dense(k);
                if matches!(self, CvMetric::TestError(_)) {
                    normalized_test_error(&preds[k], &truth, &set)
                } else {
                    label_error_percent(&preds[k], &truth, &set)
                }
            }
        }
    }
}

/// Mean held-out score of `spec` across all folds.
pub fn cv_score(problem: &MultiViewProblem, spec: &ModelSpec, folds: &CvFolds, metric: CvMetric, admm: &AdmmConfig) -> Result<f64> {
    let dims = problem.dims();
    let mut total = 0.0;
    for f in 0..folds.n_folds() {
        let (train, held) = folds.split(problem, f);
        let fit = admm_solve(&train, spec, admm)?;
        let preds = (0..dims.len())
            .map(|k| assemble_prediction(&fit.blocks, spec, &dims, k))
            .collect::<Result<Vec<_>>>()?;
        total += metric.score(problem, &preds, &held)?;
    }
    Ok(total / folds.n_folds() as f64)
}

/// A deterministic objective for derivative-free search.
pub trait BlackBox {
    fn evaluate(&self, x: &[f64]) -> f64;
    /// Maximum number of evaluations a minimizer may spend.
    fn budget(&self) -> usize;
}

/// Adapter turning a closure into a [`BlackBox`].
pub struct FnBlackBox<F> {
    pub f: F,
    pub budget: usize,
}

impl<F: Fn(&[f64]) -> f64> BlackBox for FnBlackBox<F> {
    fn evaluate(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn budget(&self) -> usize {
        self.budget
    }
}

/// Outcome of one cross-validated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CvEvaluation {
    pub score: f64,
    /// Natural-scale parameters actually used.
    pub params: Vec<f64>,
    /// Whether the requested point lay outside the bounds and was clamped.
    pub clamped: bool,
    pub error: Option<String>,
}

/// Cross-validation score as a function of search coordinates.
pub struct CvObjective<'a> {
    pub problem: &'a MultiViewProblem,
    pub template: SpecTemplate,
    pub folds: &'a CvFolds,
    pub metric: CvMetric,
    pub admm: AdmmConfig,
    pub bounds: Vec<(f64, f64)>,
    pub budget: usize,
}

/// Wraps `(λ, c, α…) ↦ mean held-out metric` as a black box over search
/// coordinates bounded by `bounds`.
pub fn cv_objective<'a>(
    problem: &'a MultiViewProblem,
    template: SpecTemplate,
    folds: &'a CvFolds,
    metric: CvMetric,
    admm: AdmmConfig,
    bounds: Vec<(f64, f64)>,
    budget: usize,
) -> CvObjective<'a> {
    CvObjective {
        problem,
        template,
        folds,
        metric,
        admm,
        bounds,
        budget,
    }
}

impl CvObjective<'_> {
    pub fn evaluate_detailed(&self, coords: &[f64]) -> CvEvaluation {
        let mut clamped = false;
        let projected: Vec<f64> = coords
            .iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| {
                let c = v.clamp(*lo, *hi);
                clamped |= c != *v;
                c
            })
            .collect();
        let params = self.template.from_search(&projected);
        let scored = self
            .template
            .instantiate(&params)
            .and_then(|spec| cv_score(self.problem, &spec, self.folds, self.metric, &self.admm));
        match scored {
            Ok(score) if score.is_finite() => CvEvaluation {
                score,
                params,
                clamped,
                error: None,
            },
            Ok(score) => CvEvaluation {
                score: f64::INFINITY,
                params,
                clamped,
                error: Some(format!("non-finite score {score}")),
            },
            Err(e) => CvEvaluation {
                score: f64::INFINITY,
                params,
                clamped,
                error: Some(e.to_string()),
            },
        }
    }
}

impl BlackBox for CvObjective<'_> {
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluate_detailed(x).score
    }

    fn budget(&self) -> usize {
        self.budget
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub params: Vec<f64>,
    /// Search coordinates the cell was evaluated at.
    pub coords: Vec<f64>,
    pub score: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub labels: Vec<String>,
    pub best: usize,
    pub table: Vec<GridRow>,
}

impl GridResult {
    pub fn best_row(&self) -> &GridRow {
        &self.table[self.best]
    }
}

/// Scores every grid cell; the winner is the first minimum in grid order.
pub fn grid_search(
    problem: &MultiViewProblem,
    template: &SpecTemplate,
    grid: &ParamGrid,
    folds: &CvFolds,
    metric: CvMetric,
    admm: &AdmmConfig,
) -> Result<GridResult> {
    grid.validate()?;
    let cells = template.grid_cells(grid);
    let objective = cv_objective(
        problem,
        *template,
        folds,
        metric,
        admm.clone(),
        template.search_bounds(grid),
        cells.len(),
    );
    let mut table = Vec::with_capacity(cells.len());
    let mut best = 0;
    for (i, cell) in cells.into_iter().enumerate() {
        let coords = template.to_search(&cell);
        let eval = objective.evaluate_detailed(&coords);
        if let Some(e) = &eval.error {
            log::warn!("grid cell {cell:?} failed: {e}");
        }
        table.push(GridRow {
            params: cell,
            coords,
            score: eval.score,
            error: eval.error,
        });
        if table[i].score < table[best].score {
            best = i;
        }
    }
    Ok(GridResult {
        labels: template.labels(),
        best,
        table,
    })
}

/// One black-box evaluation made by [`gfo_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct GfoEval {
    pub x: Vec<f64>,
    pub score: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone)]
pub struct GfoResult {
    pub best_x: Vec<f64>,
    pub best_score: f64,
    pub log: Vec<GfoEval>,
}

struct Budgeted<'a> {
    f: &'a dyn BlackBox,
    bounds: &'a [(f64, f64)],
    budget: usize,
    log: Vec<GfoEval>,
    best: Option<(Vec<f64>, f64)>,
}

impl Budgeted<'_> {
    fn exhausted(&self) -> bool {
        self.log.len() >= self.budget
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
    }

    /// `None` once the budget is spent.
    fn eval(&mut self, x: &[f64]) -> Option<(Vec<f64>, f64)> {
        if self.exhausted() {
            return None;
        }
        let x = self.project(x);
        let raw = self.f.evaluate(&x);
        let score = if raw.is_nan() { f64::INFINITY } else { raw };
        if self.best.as_ref().is_none_or(|(_, b)| score < *b) {
            self.best = Some((x.clone(), score));
        }
        let best_so_far = self.best.as_ref().map_or(score, |(_, b)| *b);
        self.log.push(GfoEval {
            x: x.clone(),
            score,
            best_so_far,
        });
        Some((x, score))
    }
}

/// One Nelder–Mead run from `start` with initial edge lengths `scale`. Returns
/// when the simplex collapses or the budget runs out.
fn nelder_mead_run(state: &mut Budgeted<'_>, start: &[f64], scale: &[f64]) {
    let dim = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let Some(p) = state.eval(start) else { return };
    simplex.push(p);
    for i in 0..dim {
        let mut x = simplex[0].0.clone();
        let (lo, hi) = state.bounds[i];
        x[i] = if x[i] + scale[i] <= hi { x[i] + scale[i] } else { (x[i] - scale[i]).max(lo) };
        let Some(p) = state.eval(&x) else { return };
        simplex.push(p);
    }

    let widths: Vec<f64> = state.bounds.iter().map(|(lo, hi)| (hi - lo).max(f64::MIN_POSITIVE)).collect();
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| x.iter().zip(&simplex[0].0).zip(&widths).map(|((a, b), w)| ((a - b) / w).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let fspread = simplex[dim].1 - simplex[0].1;
        if spread < 1e-9 || (fspread.is_finite() && fspread <= 1e-14 * simplex[0].1.abs().max(1e-300)) {
            return;
        }

        let centroid: Vec<f64> = (0..dim).map(|i| simplex[..dim].iter().map(|(x, _)| x[i]).sum::<f64>() / dim as f64).collect();
        let worst = simplex[dim].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };

        let Some(reflected) = state.eval(&along(1.0)) else { return };
        if reflected.1 < simplex[0].1 {
            let Some(expanded) = state.eval(&along(2.0)) else { return };
            simplex[dim] = if expanded.1 < reflected.1 { expanded } else { reflected };
            continue;
        }
        if reflected.1 < simplex[dim - 1].1 {
            simplex[dim] = reflected;
            continue;
        }
        let contracted = if reflected.1 < worst.1 {
            state.eval(&along(0.5))
        } else {
            state.eval(&along(-0.5))
        };
        let Some(contracted) = contracted else { return };
        if contracted.1 < reflected.1.min(worst.1) {
            simplex[dim] = contracted;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = v.0.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect();
            let Some(p) = state.eval(&x) else { return };
            *v = p;
        }
    }
}

/// Bounded Nelder–Mead with restarts. The first run starts at the centre of
/// the box; later runs alternate between a tighter simplex around the best
/// point and a uniformly random start. Never evaluates more than
/// `f.budget()` points.
pub fn gfo_minimize(f: &dyn BlackBox, bounds: &[(f64, f64)], seed: u64) -> Result<GfoResult> {
    let dim = bounds.len();
    if dim == 0 {
        return Err(Error::invalid("gfo_minimize needs at least one dimension"));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::invalid("bounds must be finite with lo <= hi"));
    }
    if f.budget() < dim + 1 {
        return Err(Error::invalid(format!("budget {} below dimension + 1 = {}", f.budget(), dim + 1)));
    }
    let mut rng = rng_for(seed);
    let mut state = Budgeted {
        f,
        bounds,
        budget: f.budget(),
        log: Vec::new(),
        best: None,
    };
    let widths: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let centre: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let scale: Vec<f64> = widths.iter().map(|w| 0.25 * w).collect();
    nelder_mead_run(&mut state, &centre, &scale);

    let mut restart = 0;
    while !state.exhausted() {
        restart += 1;
        let before = state.log.len();
        if restart % 2 == 1 {
            let best = state.best.as_ref().map(|(x, _)| x.clone()).unwrap_or_else(|| centre.clone());
            let shrink = 0.1f64.powi(restart.min(6) / 2 + 1);
            let local: Vec<f64> = widths.iter().map(|w| (w * shrink).max(1e-12)).collect();
            nelder_mead_run(&mut state, &best, &local);
        } else {
            let start: Vec<f64> = bounds.iter().map(|(lo, hi)| if hi > lo { rng.random_range(*lo..=*hi) } else { *lo }).collect();
            nelder_mead_run(&mut state, &start, &scale);
        }
        if state.log.len() == before {
            break;
        }
    }

    let (best_x, best_score) = state.best.expect("at least one evaluation");
    Ok(GfoResult {
        best_x,
        best_score,
        log: state.log,
    })
}
