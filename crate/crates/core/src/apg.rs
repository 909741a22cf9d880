//! Accelerated proximal-gradient baseline (FISTA with backtracking and
//! function-value restart).
//!
//! The loss term is smooth in all blocks jointly, and the regularizer is
//! separable across blocks, so one iteration is a joint gradient step followed
//! by block-wise SVT / soft thresholding.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admm::SolveResult;
use crate::loss::{cumulative_loss, loss_derivative};
use crate::model::{assemble_prediction, concat_blocks, regularizer, validate_problem, LatentBlocks, ModelSpec, MultiViewProblem};
use crate::prox::{soft_threshold, svt};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApgConfig {
    pub max_iters: usize,
    /// Initial step, i.e. the inverse of the first Lipschitz estimate.
    pub step: f64,
    /// Factor by which the Lipschitz estimate grows during backtracking.
    pub backtrack: f64,
    /// Stop once the relative objective change falls to this level.
    pub tol: f64,
}

impl Default for ApgConfig {
    fn default() -> Self {
        ApgConfig {
            max_iters: 2000,
            step: 1.0,
            backtrack: 2.0,
            tol: 1e-10,
        }
    }
}

impl ApgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.step > 0.0) || !(self.backtrack > 1.0) || !(self.tol >= 0.0) {
            return Err(Error::invalid(format!("invalid APG config {self:?}")));
        }
        Ok(())
    }
}

/// Details of one accepted proximal-gradient step.
#[derive(Debug, Clone, Copy)]
pub struct ApgStep {
    pub iteration: usize,
    pub lipschitz: f64,
    /// Smooth loss at the accepted candidate.
    pub smooth_value: f64,
    /// Quadratic upper model at the candidate; `smooth_value <= bound`.
    pub bound: f64,
    pub restarted: bool,
}

/// Active blocks laid out as `[x0] ++ xk ++ sk`.
#[derive(Debug, Clone)]
struct Point {
    mats: Vec<Matrix>,
}

impl Point {
    fn from_blocks(b: &LatentBlocks) -> Self {
        let mut mats = Vec::new();
        mats.extend(b.x0.iter().cloned());
        mats.extend(b.xk.iter().flatten().cloned());
        mats.extend(b.sk.iter().flatten().cloned());
        Point { mats }
    }

    fn to_blocks(&self, spec: &ModelSpec, views: usize) -> LatentBlocks {
        let mut it = self.mats.iter().cloned();
        let x0 = spec.shared.then(|| it.next().expect("x0"));
        let xk = spec.specific.then(|| it.by_ref().take(views).collect());
        let sk = spec.robust.then(|| it.by_ref().take(views).collect());
        LatentBlocks { x0, xk, sk }
    }

    fn dot(&self, other: &Point) -> f64 {
        self.mats.iter().zip(&other.mats).map(|(a, b)| a.dot(b)).sum()
    }

    fn norm_squared(&self) -> f64 {
        self.mats.iter().map(|m| m.norm_squared()).sum()
    }

    /// `a·self + b·other`
    fn combine(&self, a: f64, other: &Point, b: f64) -> Point {
        Point {
            mats: self.mats.iter().zip(&other.mats).map(|(x, y)| x * a + y * b).collect(),
        }
    }
}

fn smooth_value(problem: &MultiViewProblem, spec: &ModelSpec, blocks: &LatentBlocks, dims: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for (k, view) in problem.views.iter().enumerate() {
        total += cumulative_loss(&assemble_prediction(blocks, spec, dims, k)?, view);
    }
    Ok(total)
}

/// Gradient of `Σ_k E_k(P_k X0 + X_k + S_k; Y_k)` with respect to every active
/// block.
pub fn smooth_grad(problem: &MultiViewProblem, spec: &ModelSpec, blocks: &LatentBlocks) -> Result<LatentBlocks> {
    let dims = problem.dims();
    blocks.check(spec, &dims, problem.n)?;
    let mut per_view = Vec::with_capacity(dims.len());
    for (k, view) in problem.views.iter().enumerate() {
        let pred = assemble_prediction(blocks, spec, &dims, k)?;
        let mut g = Matrix::zeros(view.d, problem.n);
        for &(i, j, y) in &view.entries {
            g[(i, j)] = view.weight * loss_derivative(view.loss, pred[(i, j)], y);
        }
        per_view.push(g);
    }
    Ok(LatentBlocks {
        x0: if spec.shared { Some(concat_blocks(&per_view)?) } else { None },
        xk: spec.specific.then(|| per_view.clone()),
        sk: spec.robust.then(|| per_view.clone()),
    })
}

fn prox(point: &Point, spec: &ModelSpec, views: usize, step: f64) -> Result<Point> {
    let mut out = Vec::with_capacity(point.mats.len());
    let mut it = point.mats.iter();
    if spec.shared {
        out.push(svt(it.next().expect("x0"), step * spec.lambda0)?);
    }
    if spec.specific {
        for k in 0..views {
            out.push(svt(it.next().expect("xk"), step * spec.lambda_k[k])?);
        }
    }
    if spec.robust {
        for k in 0..views {
            out.push(soft_threshold(it.next().expect("sk"), step * spec.alpha_k[k]));
        }
    }
    Ok(Point { mats: out })
}

pub fn apg_solve(problem: &MultiViewProblem, spec: &ModelSpec, config: &ApgConfig) -> Result<SolveResult> {
    apg_solve_monitored(problem, spec, config, &mut |_| {})
}

pub fn apg_solve_monitored(
    problem: &MultiViewProblem,
    spec: &ModelSpec,
    config: &ApgConfig,
    monitor: &mut dyn FnMut(&ApgStep),
) -> Result<SolveResult> {
    validate_problem(problem).map_err(Error::InvalidProblem)?;
    spec.validate(problem.n_views())?;
    config.validate()?;

    let start = Instant::now();
    let dims = problem.dims();
    let views = dims.len();
    let blocks_of = |p: &Point| p.to_blocks(spec, views);
    let total = |p: &Point| -> Result<(f64, f64)> {
        let b = blocks_of(p);
        let f = smooth_value(problem, spec, &b, &dims)?;
        Ok((f, f + regularizer(spec, &b)))
    };

    let mut x = Point::from_blocks(&LatentBlocks::zeros(spec, &dims, problem.n));
    let mut y = x.clone();
    let mut momentum: f64 = 1.0;
    let mut lipschitz = 1.0 / config.step;
    let (_, mut fx) = total(&x)?;

    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut time_trace = Vec::new();
    let mut converged = false;

    for iteration in 1..=config.max_iters {
        let fail = |e: Error| Error::NumericalFailure {
            iteration,
            reason: e.to_string(),
        };
        let mut restarted = false;
        let (candidate, cand_obj, step_norm) = loop {
            let yb = blocks_of(&y);
            let fy = smooth_value(problem, spec, &yb, &dims).map_err(fail)?;
            let grad = Point::from_blocks(&smooth_grad(problem, spec, &yb).map_err(fail)?);
            let (cand, f_cand, bound) = loop {
                let cand = prox(&y.combine(1.0, &grad, -1.0 / lipschitz), spec, views, 1.0 / lipschitz).map_err(fail)?;
                let diff = cand.combine(1.0, &y, -1.0);
                let f_cand = smooth_value(problem, spec, &blocks_of(&cand), &dims).map_err(fail)?;
                let bound = fy + grad.dot(&diff) + 0.5 * lipschitz * diff.norm_squared();
                if !f_cand.is_finite() || !bound.is_finite() {
                    return Err(Error::NumericalFailure {
                        iteration,
                        reason: "non-finite objective".into(),
                    });
                }
                if f_cand <= bound + 1e-12 * bound.abs().max(1.0) {
                    break (cand, f_cand, bound);
                }
                lipschitz *= config.backtrack;
            };
            monitor(&ApgStep {
                iteration,
                lipschitz,
                smooth_value: f_cand,
                bound,
                restarted,
            });
            let cand_obj = f_cand + regularizer(spec, &blocks_of(&cand));
            let step_norm = cand.combine(1.0, &y, -1.0).norm_squared().sqrt() * lipschitz;
            if cand_obj <= fx || restarted {
                break (cand, cand_obj, step_norm);
            }
            // Objective went up: drop the momentum and step from x instead.
            restarted = true;
            momentum = 1.0;
            y = x.clone();
        };

        let prev = fx;
        if cand_obj <= fx {
            let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next_momentum;
            y = candidate.combine(1.0 + beta, &x, -beta);
            x = candidate;
            fx = cand_obj;
            momentum = next_momentum;
        } else {
            // Even a plain step from x failed to descend (rounding); x is final.
            converged = true;
        }

        let scale = x.norm_squared().sqrt().max(1.0);
        objective_trace.push(fx);
        residual_trace.push(step_norm / scale);
        time_trace.push(start.elapsed().as_secs_f64());
        if converged || (prev - fx).abs() <= config.tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        blocks: blocks_of(&x),
        iterations_run: objective_trace.len(),
        objective_trace,
        residual_trace,
        time_trace,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
    })
}
