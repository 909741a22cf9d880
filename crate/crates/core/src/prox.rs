//! Proximal maps and norms: singular-value thresholding, entry-wise soft
//! thresholding, observation projection.

use nalgebra::linalg::SVD;

use crate::{Error, Index, Matrix, Result};

/// Singular values below this fraction of the largest one count as zero when
/// reporting rank.
pub const RANK_TOL: f64 = 1e-12;

/// Thin SVD `X = U diag(sigma) Vᵀ` with `sigma` sorted non-increasing.
///
/// Each left singular vector is oriented so that its first non-negligible
/// component is non-negative, which makes the factors (and everything built
/// from them) reproducible bit for bit.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        numerical_rank(&self.sigma)
    }

    /// `U diag(weights) Vᵀ` restricted to the leading `weights.len()` triplets.
    pub fn recompose_with(&self, weights: &[f64]) -> Matrix {
        let r = weights.len();
        let mut scaled = self.u.columns(0, r).into_owned();
        for (j, w) in weights.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*w);
        }
        scaled * self.v.columns(0, r).transpose()
    }
}

fn ensure_finite(x: &Matrix, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what}: matrix has non-finite entries")))
    }
}

pub fn svd(x: &Matrix) -> Result<SvdFactors> {
    ensure_finite(x, "svd")?;
    let (d, n) = x.shape();
    if d == 0 || n == 0 {
        return Ok(SvdFactors {
            u: Matrix::zeros(d, 0),
            sigma: Vec::new(),
            v: Matrix::zeros(n, 0),
        });
    }
    let dec = SVD::try_new(x.clone(), true, true, f64::EPSILON, 0).ok_or_else(|| {
        Error::NumericalFailure {
            iteration: 0,
            reason: "SVD did not converge".into(),
        }
    })?;
    let mut u = dec.u.expect("left singular vectors requested");
    let mut v = dec.v_t.expect("right singular vectors requested").transpose();
    let sigma: Vec<f64> = dec.singular_values.iter().copied().collect();

    for j in 0..sigma.len() {
        let col = u.column(j);
        let flip = col
            .iter()
            .find(|c| c.abs() > 1e-12)
            .is_some_and(|c| *c < 0.0);
        if flip {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(SvdFactors { u, sigma, v })
}

/// Number of singular values above `RANK_TOL · σ_max`.
pub fn numerical_rank(sigma: &[f64]) -> usize {
    let max = sigma.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sigma.iter().filter(|s| **s > RANK_TOL * max).count()
}

/// Singular-value thresholding `D_β(X) = U (Σ − βI)₊ Vᵀ`, the proximal map of
/// `β‖·‖_*`.
pub fn svt(x: &Matrix, beta: f64) -> Result<Matrix> {
    svt_with_rank(x, beta).map(|(m, _)| m)
}

/// Same as [`svt`], also returning the number of singular values that survive
/// the shrinkage.
pub fn svt_with_rank(x: &Matrix, beta: f64) -> Result<(Matrix, usize)> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("svt threshold must be >= 0, got {beta}")));
    }
    let f = svd(x)?;
    let shrunk: Vec<f64> = f
        .sigma
        .iter()
        .map(|s| (s - beta).max(0.0))
        .take_while(|s| *s > 0.0)
        .collect();
    if shrunk.is_empty() {
        return Ok((Matrix::zeros(x.nrows(), x.ncols()), 0));
    }
    let rank = shrunk.len();
    Ok((f.recompose_with(&shrunk), rank))
}

/// Scalar soft threshold `sgn(v)·max(|v| − α, 0)`.
#[inline]
pub fn shrink(v: f64, alpha: f64) -> f64 {
    if v > alpha {
        v - alpha
    } else if v < -alpha {
        v + alpha
    } else {
        0.0
    }
}

/// Entry-wise soft thresholding, the proximal map of `α‖·‖₁`.
pub fn soft_threshold(x: &Matrix, alpha: f64) -> Matrix {
    x.map(|v| shrink(v, alpha))
}

/// Keeps the entries of `x` listed in `omega` and zeroes the rest.
pub fn project_obs(x: &Matrix, omega: &[Index]) -> Result<Matrix> {
    let (d, n) = x.shape();
    let mut out = Matrix::zeros(d, n);
    for &(i, j) in omega {
        if i >= d || j >= n {
            return Err(Error::invalid(format!(
                "observation ({i}, {j}) outside {d}x{n} matrix"
            )));
        }
        out[(i, j)] = x[(i, j)];
    }
    Ok(out)
}

/// Sum of singular values. Returns NaN for non-finite input.
pub fn nuclear_norm(x: &Matrix) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return f64::NAN;
    }
    x.singular_values().sum()
}

pub fn l1_norm(x: &Matrix) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn fro_norm(x: &Matrix) -> f64 {
    x.norm()
}
