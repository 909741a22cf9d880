//! Per-entry losses and the closed-form / majorized `Z_k` updates of the ADMM
//! inner loop.
//!
//! The `Z_k` subproblem is
//!
//! ```text
//! min_Z  w·E_k(Z; Y_k) + tr(Bᵀ Z) + (μ/2)‖M − Z‖²_F
//! ```
//!
//! where `M = X_k + S_k + P_k X0` and `w` is the view weight. It separates over
//! entries: off the observed set the minimizer is `m − b/μ`; on it the squared
//! loss has a closed form and the logistic loss is replaced by a quadratic
//! upper bound around the previous iterate.

use serde::{Deserialize, Serialize};

use crate::model::ViewData;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Squared,
    Logistic,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::Logistic => "logistic",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(LossKind::Squared),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::invalid(format!("unknown loss kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `log(1 + exp(t))` without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn loss_unchecked(kind: LossKind, x: f64, y: f64) -> f64 {
    match kind {
        LossKind::Squared => 0.5 * (x - y) * (x - y),
        LossKind::Logistic => softplus(-x * y),
    }
}

/// Derivative of the loss with respect to the prediction `x`.
#[inline]
pub fn loss_derivative(kind: LossKind, x: f64, y: f64) -> f64 {
    match kind {
        LossKind::Squared => x - y,
        // -y / (1 + e^{yx}), written to stay finite for large |x|
        LossKind::Logistic => {
            let t = y * x;
            if t > 0.0 {
                let e = (-t).exp();
                -y * e / (1.0 + e)
            } else {
                -y / (1.0 + t.exp())
            }
        }
    }
}

fn check_target(kind: LossKind, y: f64) -> Result<()> {
    if kind == LossKind::Logistic && y != 1.0 && y != -1.0 {
        return Err(Error::invalid(format!("logistic target must be ±1, got {y}")));
    }
    Ok(())
}

/// Scalar loss `½(x − y)²` or `log(1 + e^{−xy})`.
pub fn loss_value(kind: LossKind, x: f64, y: f64) -> Result<f64> {
    check_target(kind, y)?;
    Ok(loss_unchecked(kind, x, y))
}

/// Weighted sum of the view's loss over its observed entries.
pub fn cumulative_loss(x: &Matrix, view: &ViewData) -> f64 {
    let total: f64 = view
        .entries
        .iter()
        .map(|&(i, j, y)| loss_unchecked(view.loss, x[(i, j)], y))
        .sum();
    view.weight * total
}

fn check_update_inputs(m: &Matrix, b: &Matrix, mu: f64, view: &ViewData) -> Result<()> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("penalty mu must be > 0, got {mu}")));
    }
    if m.shape() != b.shape() || m.nrows() != view.d {
        return Err(Error::dims(format!(
            "z-update: m is {:?}, b is {:?}, view has {} rows",
            m.shape(),
            b.shape(),
            view.d
        )));
    }
    Ok(())
}

/// Exact minimizer of the squared-loss `Z_k` subproblem.
///
/// Off the observed set `z = m − b/μ`; on it `z = (μm − b + w·y)/(w + μ)`.
pub fn z_update_squared(m: &Matrix, b: &Matrix, mu: f64, view: &ViewData) -> Result<Matrix> {
    check_update_inputs(m, b, mu, view)?;
    let mut z = m - b / mu;
    let w = view.weight;
    for &(i, j, y) in &view.entries {
        z[(i, j)] = (mu * m[(i, j)] - b[(i, j)] + w * y) / (w + mu);
    }
    Ok(z)
}

/// Line-search state for the logistic majorizer curvature τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauState {
    pub tau: f64,
    pub growth: f64,
    pub shrink: f64,
}

impl Default for TauState {
    fn default() -> Self {
        // 1/4 bounds the second derivative of the logistic loss everywhere.
        TauState {
            tau: 0.25,
            growth: 2.0,
            shrink: 0.8,
        }
    }
}

impl TauState {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.growth > 1.0) || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::invalid(format!("invalid tau state {self:?}")));
        }
        Ok(())
    }
}

/// `ȳ = z̄ − ℓ'(z̄)/τ`, the target of the quadratic majorizer of the logistic
/// loss expanded at `z̄`.
pub fn majorizer_target(zbar: f64, y: f64, tau: f64) -> f64 {
    zbar - loss_derivative(LossKind::Logistic, zbar, y) / tau
}

/// Quadratic upper bound of the logistic loss expanded at `zbar`, evaluated at
/// `z`: `ℓ(z̄) + ℓ'(z̄)(z − z̄) + (τ/2)(z − z̄)²`.
pub fn majorizer_value(z: f64, zbar: f64, y: f64, tau: f64) -> f64 {
    let dz = z - zbar;
    loss_unchecked(LossKind::Logistic, zbar, y)
        + loss_derivative(LossKind::Logistic, zbar, y) * dz
        + 0.5 * tau * dz * dz
}

/// Whether `ℓ(z) ≤ q(z)` holds, up to rounding.
#[inline]
pub fn bound_holds(z: f64, zbar: f64, y: f64, tau: f64) -> bool {
    let lhs = loss_unchecked(LossKind::Logistic, z, y);
    let rhs = majorizer_value(z, zbar, y, tau);
    lhs <= rhs + 1e-12 * (1.0 + lhs.abs())
}

// Backtracking never needs to push τ far past 1/4; this only guards against
// pathological rounding.
const MAX_BACKTRACKS: usize = 64;

/// One majorize-minimize step for a logistic view.
///
/// The logistic loss is replaced on the observed set by its quadratic bound
/// around `zprev`, and the resulting separable problem is solved exactly:
/// off the observed set `z = m − b/μ`, on it `z = (wτȳ − b + μm)/(wτ + μ)`.
/// If the bound fails at any accepted entry, τ grows and the step is redone;
/// after acceptance τ is shrunk for the next call.
pub fn z_update_logistic(
    m: &Matrix,
    b: &Matrix,
    mu: f64,
    view: &ViewData,
    zprev: &Matrix,
    tau_state: TauState,
) -> Result<(Matrix, TauState)> {
    check_update_inputs(m, b, mu, view)?;
    tau_state.validate()?;
    if zprev.shape() != m.shape() {
        return Err(Error::dims("z-update: expansion point shape differs from m"));
    }
    let w = view.weight;
    let mut state = tau_state;
    let mut z = m - b / mu;

    for _ in 0..MAX_BACKTRACKS {
        let tau = state.tau;
        let mut ok = true;
        for &(i, j, y) in &view.entries {
            let zbar = zprev[(i, j)];
            let target = majorizer_target(zbar, y, tau);
            let v = (w * tau * target - b[(i, j)] + mu * m[(i, j)]) / (w * tau + mu);
            z[(i, j)] = v;
            if !bound_holds(v, zbar, y, tau) {
                ok = false;
            }
        }
        if ok {
            // optimistic shrink for the next call
            state.tau = (tau * state.shrink).max(1e-8);
            return Ok((z, state));
        }
        state.tau = tau * state.growth;
    }
    Err(Error::NumericalFailure {
        iteration: 0,
        reason: "logistic majorizer line search did not terminate".into(),
    })
}
