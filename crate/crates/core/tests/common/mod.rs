#![allow(dead_code)]

use mvmc::datagen::{gen_synthetic_problem, SynthSpec, SyntheticInstance};
use mvmc::{Matrix, ModelSpec, Variant};
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Nuclear norm from the eigenvalues of `XᵀX` (or `XXᵀ`), no SVD involved.
pub fn nuclear_norm_eig(x: &Matrix) -> f64 {
    let gram = if x.nrows() >= x.ncols() { x.transpose() * x } else { x * x.transpose() };
    SymmetricEigen::new(gram).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum()
}

pub fn nuclear_prox_objective(x: &Matrix, y: &Matrix, beta: f64) -> f64 {
    0.5 * (y - x).norm_squared() + beta * nuclear_norm_eig(x)
}

/// Minimizes `½‖Y − X‖² + β‖X‖_*` through the factorization `X = U Vᵀ`,
/// using `‖X‖_* = min ½(‖U‖² + ‖V‖²)`, by alternating ridge regressions from
/// several random starts. Returns the best product found.
pub fn nuclear_prox_als(y: &Matrix, beta: f64, starts: usize, seed: u64) -> Matrix {
    let (d, n) = y.shape();
    let r = d.min(n);
    let mut rng = rng(seed);
    let ridge = |a: &Matrix| -> Matrix {
        let k = a.ncols();
        let gram = a.transpose() * a + Matrix::identity(k, k) * beta;
        gram.try_inverse().expect("ridge system is positive definite")
    };
    let mut best: Option<(Matrix, f64)> = None;
    for _ in 0..starts {
        let mut u = gaussian(&mut rng, d, r, 1.0);
        let mut v = gaussian(&mut rng, n, r, 1.0);
        let mut x = &u * v.transpose();
        for _ in 0..200_000 {
            u = y * &v * ridge(&v);
            v = y.transpose() * &u * ridge(&u);
            let next = &u * v.transpose();
            let change = (&next - &x).amax();
            x = next;
            if change < 1e-15 {
                break;
            }
        }
        let f = nuclear_prox_objective(&x, y, beta);
        if best.as_ref().is_none_or(|(_, b)| f < *b) {
            best = Some((x, f));
        }
    }
    best.unwrap().0
}

/// Central-difference derivative of `f` at `x`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Fixed two-view instance with `n = 20` samples and `d1 = d2 = 10`, so the
/// stacked matrix is 20×20.
pub fn reference_instance() -> SyntheticInstance {
    let mut s = SynthSpec::for_dims(20, 10, 10);
    s.seed = 42;
    gen_synthetic_problem(&s).expect("reference instance")
}

pub fn reference_spec() -> ModelSpec {
    ModelSpec::from_variant(Variant::JLR, 2, 2.0, 2.0, 0.5)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
