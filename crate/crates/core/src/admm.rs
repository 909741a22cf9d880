//! ADMM solver for every model variant.
//!
//! The constraint `Z_k = X_k + S_k + P_k X0` is dualized with multipliers
//! `B_k` and penalty `μ`. Each outer iteration runs `M` inner sweeps of exact
//! block minimization of the augmented Lagrangian (`X0`, then for every view
//! `X_k`, `S_k`, `Z_k`), then takes a multiplier step and grows `μ`
//! geometrically.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::loss::{cumulative_loss, z_update_logistic, z_update_squared, LossKind, TauState};
use crate::model::{assemble_prediction, concat_blocks, objective, regularizer, select_block, LatentBlocks, ModelSpec, MultiViewProblem};
use crate::prox::{soft_threshold, svt};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    /// Outer iterations `T` (multiplier updates).
    pub outer_iters: usize,
    /// Inner block-minimization sweeps `M` per outer iteration.
    pub inner_iters: usize,
    pub mu0: f64,
    pub rho: f64,
    /// Early stop once the relative primal residual drops to this level.
    pub primal_tol: f64,
    pub mu_max: f64,
    /// Majorize-minimize steps per logistic `Z_k` update.
    pub mm_steps: usize,
    /// Recorded for provenance; the solver itself draws no random numbers.
    pub seed: u64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            outer_iters: 30,
            inner_iters: 10,
            mu0: 0.01,
            rho: 1.5,
            primal_tol: 1e-6,
            mu_max: 1e12,
            mm_steps: 1,
            seed: 0,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.inner_iters == 0 || self.mm_steps == 0 {
            return Err(Error::invalid("outer_iters, inner_iters and mm_steps must be >= 1"));
        }
        if !(self.mu0 > 0.0) || !(self.mu_max >= self.mu0) {
            return Err(Error::invalid(format!("need 0 < mu0 <= mu_max, got {} and {}", self.mu0, self.mu_max)));
        }
        if !(self.rho > 1.0) {
            return Err(Error::invalid(format!("rho must be > 1, got {}", self.rho)));
        }
        if !(self.primal_tol >= 0.0) {
            return Err(Error::invalid("primal_tol must be >= 0"));
        }
        Ok(())
    }
}

/// Output of a solver run. Traces hold one value per outer iteration.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub blocks: LatentBlocks,
    pub objective_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
    /// Seconds since the start of the solve at which each trace value was taken.
    pub time_trace: Vec<f64>,
    pub wall_time: f64,
    pub iterations_run: usize,
    pub converged: bool,
}

impl SolveResult {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// ADMM variable set: latent blocks, splitting variables, multipliers, penalty.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub blocks: LatentBlocks,
    pub z: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub mu: f64,
    /// Majorizer curvature per view (only read for logistic views).
    pub tau: Vec<TauState>,
    dims: Vec<usize>,
}

/// Which block an inner update touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    X0,
    Xk(usize),
    Sk(usize),
    Zk(usize),
}

/// Augmented Lagrangian value around a single block update.
#[derive(Debug, Clone, Copy)]
pub struct BlockUpdate {
    pub outer: usize,
    pub inner: usize,
    pub block: Block,
    pub before: f64,
    pub after: f64,
}

impl SolverState {
    /// Everything zero, `μ = mu0`.
    pub fn new(problem: &MultiViewProblem, spec: &ModelSpec, mu0: f64) -> Self {
        let dims = problem.dims();
        let n = problem.n;
        SolverState {
            blocks: LatentBlocks::zeros(spec, &dims, n),
            z: dims.iter().map(|&d| Matrix::zeros(d, n)).collect(),
            b: dims.iter().map(|&d| Matrix::zeros(d, n)).collect(),
            mu: mu0,
            tau: vec![TauState::default(); dims.len()],
            dims,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `X_k + S_k + P_k X0` for view `k`.
    pub fn prediction(&self, spec: &ModelSpec, k: usize) -> Result<Matrix> {
        assemble_prediction(&self.blocks, spec, &self.dims, k)
    }

    /// `Z_k + B_k/μ` minus the listed blocks of view `k`.
    fn shifted_target(&self, spec: &ModelSpec, k: usize, skip: Block) -> Result<Matrix> {
        let mut arg = &self.z[k] + &self.b[k] / self.mu;
        if spec.shared && skip != Block::X0 {
            let x0 = self.blocks.x0.as_ref().expect("shared block");
            arg -= select_block(x0, k, &self.dims)?;
        }
        if spec.specific && skip != Block::Xk(k) {
            arg -= &self.blocks.xk.as_ref().expect("specific blocks")[k];
        }
        if spec.robust && skip != Block::Sk(k) {
            arg -= &self.blocks.sk.as_ref().expect("sparse blocks")[k];
        }
        Ok(arg)
    }

    /// `X0 ← D_{λ0/μ}([Z_k + B_k/μ − X_k − S_k]_k)`.
    pub fn update_x0(&mut self, spec: &ModelSpec) -> Result<()> {
        if !spec.shared {
            return Ok(());
        }
        let parts = (0..self.dims.len())
            .map(|k| self.shifted_target(spec, k, Block::X0))
            .collect::<Result<Vec<_>>>()?;
        let x0 = svt(&concat_blocks(&parts)?, spec.lambda0 / self.mu)?;
        self.blocks.x0 = Some(x0);
        Ok(())
    }

    /// `X_k ← D_{λ_k/μ}(Z_k + B_k/μ − P_k X0 − S_k)`.
    pub fn update_xk(&mut self, spec: &ModelSpec, k: usize) -> Result<()> {
        if !spec.specific {
            return Ok(());
        }
        let arg = self.shifted_target(spec, k, Block::Xk(k))?;
        let xk = svt(&arg, spec.lambda_k[k] / self.mu)?;
        self.blocks.xk.as_mut().expect("specific blocks")[k] = xk;
        Ok(())
    }

    /// `S_k ← S_{α_k/μ}(Z_k + B_k/μ − P_k X0 − X_k)`.
    pub fn update_sk(&mut self, spec: &ModelSpec, k: usize) -> Result<()> {
        if !spec.robust {
            return Ok(());
        }
        let arg = self.shifted_target(spec, k, Block::Sk(k))?;
        let sk = soft_threshold(&arg, spec.alpha_k[k] / self.mu);
        self.blocks.sk.as_mut().expect("sparse blocks")[k] = sk;
        Ok(())
    }

    /// Minimizes the augmented Lagrangian over `Z_k`: exactly for squared
    /// loss, through `mm_steps` majorize-minimize steps for logistic loss.
    pub fn update_zk(&mut self, problem: &MultiViewProblem, spec: &ModelSpec, k: usize, mm_steps: usize) -> Result<()> {
        let view = &problem.views[k];
        let m = self.prediction(spec, k)?;
        match view.loss {
            LossKind::Squared => {
                self.z[k] = z_update_squared(&m, &self.b[k], self.mu, view)?;
            }
            LossKind::Logistic => {
                for _ in 0..mm_steps {
                    let (z, tau) = z_update_logistic(&m, &self.b[k], self.mu, view, &self.z[k], self.tau[k])?;
                    self.z[k] = z;
                    self.tau[k] = tau;
                }
            }
        }
        Ok(())
    }

    /// `B_k ← B_k − μ(X_k + S_k + P_k X0 − Z_k)`, then `μ ← min(ρμ, mu_max)`.
    pub fn update_multipliers(&mut self, spec: &ModelSpec, rho: f64, mu_max: f64) -> Result<()> {
        for k in 0..self.dims.len() {
            let r = self.prediction(spec, k)? - &self.z[k];
            self.b[k] -= r * self.mu;
        }
        self.mu = (self.mu * rho).min(mu_max);
        Ok(())
    }

    /// `max_k ‖X_k + S_k + P_k X0 − Z_k‖_F / max(1, ‖Z_k‖_F)`.
    pub fn primal_residual(&self, spec: &ModelSpec) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 0..self.dims.len() {
            let r = (self.prediction(spec, k)? - &self.z[k]).norm();
            worst = worst.max(r / self.z[k].norm().max(1.0));
        }
        Ok(worst)
    }

    fn all_finite(&self) -> bool {
        let finite = |m: &Matrix| m.iter().all(|v| v.is_finite());
        self.z.iter().all(finite)
            && self.b.iter().all(finite)
            && self.blocks.x0.iter().all(finite)
            && self.blocks.xk.iter().flatten().all(finite)
            && self.blocks.sk.iter().flatten().all(finite)
    }
}

/// Augmented Lagrangian at the current state:
/// regularizers + Σ E_k(Z_k) − Σ tr(B_kᵀ R_k) + (μ/2) Σ ‖R_k‖²_F with
/// `R_k = X_k + S_k + P_k X0 − Z_k`.
pub fn augmented_lagrangian(state: &SolverState, problem: &MultiViewProblem, spec: &ModelSpec) -> Result<f64> {
    let mut total = regularizer(spec, &state.blocks);
    for (k, view) in problem.views.iter().enumerate() {
        total += cumulative_loss(&state.z[k], view);
        let r = state.prediction(spec, k)? - &state.z[k];
        total += -state.b[k].dot(&r) + 0.5 * state.mu * r.norm_squared();
    }
    Ok(total)
}

fn check_inputs(problem: &MultiViewProblem, spec: &ModelSpec) -> Result<()> {
    crate::model::validate_problem(problem).map_err(Error::InvalidProblem)?;
    spec.validate(problem.n_views())
}

pub fn admm_solve(problem: &MultiViewProblem, spec: &ModelSpec, config: &AdmmConfig) -> Result<SolveResult> {
    run(problem, spec, config, None)
}

/// Like [`admm_solve`], additionally reporting the augmented Lagrangian before
/// and after every inner block update. Evaluating it costs extra SVDs, so this
/// is meant for diagnostics and tests.
pub fn admm_solve_monitored(
    problem: &MultiViewProblem,
    spec: &ModelSpec,
    config: &AdmmConfig,
    monitor: &mut dyn FnMut(&BlockUpdate),
) -> Result<SolveResult> {
    run(problem, spec, config, Some(monitor))
}

fn run(
    problem: &MultiViewProblem,
    spec: &ModelSpec,
    config: &AdmmConfig,
    mut monitor: Option<&mut dyn FnMut(&BlockUpdate)>,
) -> Result<SolveResult> {
    check_inputs(problem, spec)?;
    config.validate()?;
    let start = Instant::now();
    let mut state = SolverState::new(problem, spec, config.mu0);
    let views = problem.n_views();

    let mut objective_trace = Vec::with_capacity(config.outer_iters);
    let mut residual_trace = Vec::with_capacity(config.outer_iters);
    let mut time_trace = Vec::with_capacity(config.outer_iters);
    let mut converged = false;

    for outer in 1..=config.outer_iters {
        let fail = |e: Error| match e {
            Error::NumericalFailure { reason, .. } => Error::NumericalFailure { iteration: outer, reason },
            other => Error::NumericalFailure {
                iteration: outer,
                reason: other.to_string(),
            },
        };
        for inner in 1..=config.inner_iters {
            let mut step = |state: &mut SolverState, block: Block| -> Result<()> {
                let before = match monitor {
                    Some(_) => augmented_lagrangian(state, problem, spec)?,
                    None => 0.0,
                };
                match block {
                    Block::X0 => state.update_x0(spec)?,
                    Block::Xk(k) => state.update_xk(spec, k)?,
                    Block::Sk(k) => state.update_sk(spec, k)?,
                    Block::Zk(k) => state.update_zk(problem, spec, k, config.mm_steps)?,
                }
                if let Some(m) = monitor.as_mut() {
                    let after = augmented_lagrangian(state, problem, spec)?;
                    m(&BlockUpdate {
                        outer,
                        inner,
                        block,
                        before,
                        after,
                    });
                }
                Ok(())
            };
            if spec.shared {
                step(&mut state, Block::X0).map_err(fail)?;
            }
            for k in 0..views {
                if spec.specific {
                    step(&mut state, Block::Xk(k)).map_err(fail)?;
                }
                if spec.robust {
                    step(&mut state, Block::Sk(k)).map_err(fail)?;
                }
                step(&mut state, Block::Zk(k)).map_err(fail)?;
            }
        }

        if !state.all_finite() {
            return Err(Error::NumericalFailure {
                iteration: outer,
                reason: "non-finite iterate".into(),
            });
        }
        let obj = objective(problem, spec, &state.blocks).map_err(fail)?;
        let res = state.primal_residual(spec).map_err(fail)?;
        objective_trace.push(obj);
        residual_trace.push(res);
        time_trace.push(start.elapsed().as_secs_f64());
        log::trace!("admm outer {outer}: objective {obj:.6e} residual {res:.3e} mu {:.3e}", state.mu);

        if res <= config.primal_tol {
            converged = true;
            break;
        }
        state.update_multipliers(spec, config.rho, config.mu_max).map_err(fail)?;
    }

    Ok(SolveResult {
        iterations_run: objective_trace.len(),
        blocks: state.blocks,
        objective_trace,
        residual_trace,
        time_trace,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
    })
}
