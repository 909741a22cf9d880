//! Synthetic multi-view instances: low-rank shared and view-specific parts,
//! sparse uniform outliers, Gaussian noise, and uniformly sampled observation
//! masks.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::loss::LossKind;
use crate::model::{select_block, LatentBlocks, MultiViewProblem, ViewData};
use crate::{Error, Index, Matrix, Result};

/// Parameters of a two-view synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    /// Rank of the shared block `X0` (`(d1 + d2) × n`).
    pub r0: usize,
    pub r1: usize,
    pub r2: usize,
    /// Fraction of entries of each `S_k` that are non-zero.
    pub outlier_density: f64,
    /// Outlier values are uniform on `[-a, a]`.
    pub outlier_scale: f64,
    pub noise_sd: f64,
    /// Fraction of entries observed for training.
    pub observed_fraction: f64,
    /// Loss of the second view. A logistic second view holds the signs of the
    /// generated values, as in multi-label data.
    pub second_view_loss: LossKind,
    pub seed: u64,
}

impl SynthSpec {
    /// Default instance for the given shape: ranks `⌈0.05·min(d, n)⌉`,
    /// outlier density 0.1 and scale `10·noise_sd`, unit noise, half the
    /// entries observed.
    pub fn for_dims(n: usize, d1: usize, d2: usize) -> Self {
        let rank = |d: usize| ((0.05 * d.min(n) as f64).ceil() as usize).max(1);
        SynthSpec {
            n,
            d1,
            d2,
            r0: rank(d1.min(d2)),
            r1: rank(d1),
            r2: rank(d2),
            outlier_density: 0.1,
            outlier_scale: 10.0,
            noise_sd: 1.0,
            observed_fraction: 0.5,
            second_view_loss: LossKind::Squared,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(Error::invalid("synthetic dimensions must be >= 1"));
        }
        if self.r0 > (self.d1 + self.d2).min(self.n) || self.r1 > self.d1.min(self.n) || self.r2 > self.d2.min(self.n) {
            return Err(Error::invalid("rank exceeds matrix dimensions"));
        }
        if !(0.0..=1.0).contains(&self.outlier_density) {
            return Err(Error::invalid("outlier density must lie in [0, 1]"));
        }
        if !(self.outlier_scale > 0.0) || !(self.noise_sd >= 0.0) {
            return Err(Error::invalid("outlier scale must be > 0 and noise sd >= 0"));
        }
        if !(self.observed_fraction > 0.0 && self.observed_fraction <= 1.0) {
            return Err(Error::invalid("observed fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Train/test split of the `d × n` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    pub train: Vec<Index>,
    pub test: Vec<Index>,
}

/// A generated instance together with everything needed to score fits.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub problem: MultiViewProblem,
    /// Generating `X0`, `X_k`, `S_k`.
    pub truth: LatentBlocks,
    /// Complete generated views `Y_k` (noise and outliers included).
    pub full: Vec<Matrix>,
    /// Held-out coordinates per view.
    pub test_sets: Vec<Vec<Index>>,
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn low_rank_with<R: Rng>(rng: &mut R, d: usize, n: usize, r: usize) -> Result<Matrix> {
    if r > d.min(n) {
        return Err(Error::invalid(format!("rank {r} exceeds min({d}, {n})")));
    }
    if r == 0 {
        return Ok(Matrix::zeros(d, n));
    }
    let u = Matrix::from_fn(d, r, |_, _| StandardNormal.sample(rng));
    let v = Matrix::from_fn(n, r, |_, _| StandardNormal.sample(rng));
    Ok(u * v.transpose())
}

/// `U Vᵀ` with `U` (`d × r`) and `V` (`n × r`) i.i.d. standard normal.
pub fn gen_low_rank(d: usize, n: usize, r: usize, seed: u64) -> Result<Matrix> {
    low_rank_with(&mut rng_for(seed), d, n, r)
}

fn outliers_with<R: Rng>(rng: &mut R, d: usize, n: usize, density: f64, a: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&density) || !(a > 0.0) {
        return Err(Error::invalid("need density in [0, 1] and a > 0"));
    }
    let count = (density * (d * n) as f64).floor() as usize;
    let mut s = Matrix::zeros(d, n);
    let values = Uniform::new_inclusive(-a, a).expect("finite bounds");
    for flat in sample(rng, d * n, count) {
        // column-major flat index
        s[(flat % d, flat / d)] = values.sample(rng);
    }
    Ok(s)
}

/// Sparse matrix with exactly `⌊density·d·n⌋` uniformly placed entries drawn
/// from `Uniform[-a, a]`.
pub fn gen_sparse_outliers(d: usize, n: usize, density: f64, a: f64, seed: u64) -> Result<Matrix> {
    outliers_with(&mut rng_for(seed), d, n, density, a)
}

fn mask_with<R: Rng>(rng: &mut R, d: usize, n: usize, fraction: f64) -> Result<ObservationMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("observed fraction must lie in (0, 1], got {fraction}")));
    }
    let total = d * n;
    let count = (fraction * total as f64).floor() as usize;
    let mut chosen = vec![false; total];
    for flat in sample(rng, total, count) {
        chosen[flat] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(count), Vec::with_capacity(total - count));
    for j in 0..n {
        for i in 0..d {
            if chosen[j * d + i] {
                train.push((i, j));
            } else {
                test.push((i, j));
            }
        }
    }
    Ok(ObservationMask { train, test })
}

/// Exactly `⌊fraction·d·n⌋` distinct training coordinates drawn uniformly;
/// the rest of the grid is the test set. Both lists are in column-major order.
pub fn sample_mask(d: usize, n: usize, fraction: f64, seed: u64) -> Result<ObservationMask> {
    mask_with(&mut rng_for(seed), d, n, fraction)
}

/// Draws `Y_k = P_k X0 + X_k + S_k + E_k` for both views and hides a random
/// subset of entries.
pub fn gen_synthetic_problem(spec: &SynthSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed);
    let dims = [spec.d1, spec.d2];
    let ranks = [spec.r1, spec.r2];
    let n = spec.n;

    let x0 = low_rank_with(&mut rng, spec.d1 + spec.d2, n, spec.r0)?;
    let mut xk = Vec::with_capacity(2);
    let mut sk = Vec::with_capacity(2);
    for k in 0..2 {
        xk.push(low_rank_with(&mut rng, dims[k], n, ranks[k])?);
    }
    for &d in &dims {
        sk.push(outliers_with(&mut rng, d, n, spec.outlier_density, spec.outlier_scale)?);
    }

    let mut full = Vec::with_capacity(2);
    let mut views = Vec::with_capacity(2);
    let mut test_sets = Vec::with_capacity(2);
    for k in 0..2 {
        let d = dims[k];
        let noise = Matrix::from_fn(d, n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            spec.noise_sd * z
        });
        let mut y = select_block(&x0, k, &dims)? + &xk[k] + &sk[k] + noise;
        let loss = if k == 1 { spec.second_view_loss } else { LossKind::Squared };
        if loss == LossKind::Logistic {
            y.iter_mut().for_each(|v| *v = if *v >= 0.0 { 1.0 } else { -1.0 });
        }
        let mask = mask_with(&mut rng, d, n, spec.observed_fraction)?;
        let entries = mask.train.iter().map(|&(i, j)| (i, j, y[(i, j)])).collect();
        views.push(ViewData::new(d, entries, loss));
        test_sets.push(mask.test);
        full.push(y);
    }

    Ok(SyntheticInstance {
        problem: MultiViewProblem::new(n, views)?,
        truth: LatentBlocks {
            x0: Some(x0),
            xk: Some(xk),
            sk: Some(sk),
        },
        full,
        test_sets,
    })
}
