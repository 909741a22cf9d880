//! Problem definition, the six model variants and block bookkeeping.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::loss::{cumulative_loss, LossKind};
use crate::prox::{l1_norm, nuclear_norm};
use crate::{Error, Index, Matrix, Result};

/// One view: a `d × n` matrix observed on a set of coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewData {
    pub d: usize,
    /// Observed `(row, col, value)` triples.
    pub entries: Vec<(usize, usize, f64)>,
    pub loss: LossKind,
    /// Multiplier on this view's loss term.
    pub weight: f64,
}

impl ViewData {
    pub fn new(d: usize, entries: Vec<(usize, usize, f64)>, loss: LossKind) -> Self {
        ViewData {
            d,
            entries,
            loss,
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn omega(&self) -> Vec<Index> {
        self.entries.iter().map(|&(i, j, _)| (i, j)).collect()
    }

    /// Observed values scattered into a dense `d × n` matrix, zero elsewhere.
    pub fn observed_dense(&self, n: usize) -> Matrix {
        let mut y = Matrix::zeros(self.d, n);
        for &(i, j, v) in &self.entries {
            y[(i, j)] = v;
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewProblem {
    /// Number of samples (columns), shared by every view.
    pub n: usize,
    pub views: Vec<ViewData>,
}

/// A single invariant violation found by [`validate_problem`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoViews,
    EmptyDimension { view: usize },
    IndexOutOfRange { view: usize, row: usize, col: usize },
    DuplicateEntry { view: usize, row: usize, col: usize },
    NonBinaryTarget { view: usize, row: usize, col: usize, value: f64 },
    NonFiniteValue { view: usize, row: usize, col: usize },
    BadWeight { view: usize, weight: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoViews => write!(f, "problem has no views"),
            Violation::EmptyDimension { view } => write!(f, "view {view}: zero-sized dimension"),
            Violation::IndexOutOfRange { view, row, col } => {
                write!(f, "view {view}: entry ({row}, {col}) out of range")
            }
            Violation::DuplicateEntry { view, row, col } => {
                write!(f, "view {view}: duplicate entry ({row}, {col})")
            }
            Violation::NonBinaryTarget { view, row, col, value } => write!(
                f,
                "view {view}: logistic target {value} at ({row}, {col}) is not ±1"
            ),
            Violation::NonFiniteValue { view, row, col } => {
                write!(f, "view {view}: non-finite value at ({row}, {col})")
            }
            Violation::BadWeight { view, weight } => {
                write!(f, "view {view}: loss weight {weight} must be finite and >= 0")
            }
        }
    }
}

/// Reports every invariant violation of `problem`, or `Ok(())` if there is none.
pub fn validate_problem(problem: &MultiViewProblem) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if problem.views.is_empty() {
        out.push(Violation::NoViews);
    }
    for (k, view) in problem.views.iter().enumerate() {
        if view.d == 0 || problem.n == 0 {
            out.push(Violation::EmptyDimension { view: k });
        }
        if !(view.weight >= 0.0 && view.weight.is_finite()) {
            out.push(Violation::BadWeight { view: k, weight: view.weight });
        }
        let mut seen = HashSet::with_capacity(view.entries.len());
        for &(row, col, value) in &view.entries {
            if row >= view.d || col >= problem.n {
                out.push(Violation::IndexOutOfRange { view: k, row, col });
                continue;
            }
            if !seen.insert((row, col)) {
                out.push(Violation::DuplicateEntry { view: k, row, col });
            }
            if !value.is_finite() {
                out.push(Violation::NonFiniteValue { view: k, row, col });
            } else if view.loss == LossKind::Logistic && value != 1.0 && value != -1.0 {
                out.push(Violation::NonBinaryTarget { view: k, row, col, value });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

impl MultiViewProblem {
    /// Builds a problem, rejecting it if any invariant is violated.
    pub fn new(n: usize, views: Vec<ViewData>) -> Result<Self> {
        let p = MultiViewProblem { n, views };
        validate_problem(&p).map_err(Error::InvalidProblem)?;
        Ok(p)
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.d).collect()
    }

    pub fn total_rows(&self) -> usize {
        self.views.iter().map(|v| v.d).sum()
    }
}

/// The six named model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    I00,
    I0R,
    J00,
    J0R,
    JL0,
    JLR,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::I00,
        Variant::I0R,
        Variant::J00,
        Variant::J0R,
        Variant::JL0,
        Variant::JLR,
    ];

    /// `(shared, specific, robust)` block flags.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Variant::I00 => (false, true, false),
            Variant::I0R => (false, true, true),
            Variant::J00 => (true, false, false),
            Variant::J0R => (true, false, true),
            Variant::JL0 => (true, true, false),
            Variant::JLR => (true, true, true),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::I00 => "I00",
            Variant::I0R => "I0R",
            Variant::J00 => "J00",
            Variant::J0R => "J0R",
            Variant::JL0 => "JL0",
            Variant::JLR => "JLR",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown model `{s}` (expected I00|I0R|J00|J0R|JL0|JLR)")))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which latent blocks are present, and their regularization weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub shared: bool,
    pub specific: bool,
    pub robust: bool,
    pub lambda0: f64,
    pub lambda_k: Vec<f64>,
    pub alpha_k: Vec<f64>,
}

impl ModelSpec {
    /// Spec for `variant` with the same `lambda_k` and `alpha_k` on every view.
    pub fn from_variant(variant: Variant, views: usize, lambda0: f64, lambda_k: f64, alpha_k: f64) -> Self {
        let (shared, specific, robust) = variant.flags();
        ModelSpec {
            shared,
            specific,
            robust,
            lambda0,
            lambda_k: vec![lambda_k; views],
            alpha_k: vec![alpha_k; views],
        }
    }

    /// The named variant matching the block flags, if any.
    pub fn variant(&self) -> Option<Variant> {
        let flags = (self.shared, self.specific, self.robust);
        Variant::ALL.into_iter().find(|v| v.flags() == flags)
    }

    pub fn validate(&self, views: usize) -> Result<()> {
        if !self.shared && !self.specific {
            return Err(Error::invalid("model needs a shared or a view-specific block"));
        }
        let ok = |w: f64| w >= 0.0 && !w.is_nan();
        if self.shared && !ok(self.lambda0) {
            return Err(Error::invalid(format!("lambda0 must be >= 0, got {}", self.lambda0)));
        }
        if self.specific {
            if self.lambda_k.len() != views {
                return Err(Error::invalid(format!(
                    "expected {views} lambda_k weights, got {}",
                    self.lambda_k.len()
                )));
            }
            if let Some(w) = self.lambda_k.iter().find(|w| !ok(**w)) {
                return Err(Error::invalid(format!("lambda_k must be >= 0, got {w}")));
            }
        }
        if self.robust {
            if self.alpha_k.len() != views {
                return Err(Error::invalid(format!(
                    "expected {views} alpha_k weights, got {}",
                    self.alpha_k.len()
                )));
            }
            if let Some(w) = self.alpha_k.iter().find(|w| !ok(**w)) {
                return Err(Error::invalid(format!("alpha_k must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Fitted (or candidate) latent matrices. Absent blocks are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBlocks {
    pub x0: Option<Matrix>,
    pub xk: Option<Vec<Matrix>>,
    pub sk: Option<Vec<Matrix>>,
}

impl LatentBlocks {
    /// All blocks active under `spec`, set to zero.
    pub fn zeros(spec: &ModelSpec, dims: &[usize], n: usize) -> Self {
        let total: usize = dims.iter().sum();
        let per_view = || dims.iter().map(|&d| Matrix::zeros(d, n)).collect::<Vec<_>>();
        LatentBlocks {
            x0: spec.shared.then(|| Matrix::zeros(total, n)),
            xk: spec.specific.then(per_view),
            sk: spec.robust.then(per_view),
        }
    }

    pub fn check(&self, spec: &ModelSpec, dims: &[usize], n: usize) -> Result<()> {
        let total: usize = dims.iter().sum();
        match (&self.x0, spec.shared) {
            (Some(x0), true) if x0.shape() != (total, n) => {
                return Err(Error::dims(format!("x0 is {:?}, expected ({total}, {n})", x0.shape())))
            }
            (None, true) => return Err(Error::dims("shared block missing")),
            _ => {}
        }
        for (blocks, active, name) in [(&self.xk, spec.specific, "x_k"), (&self.sk, spec.robust, "s_k")] {
            if !active {
                continue;
            }
            let Some(blocks) = blocks else {
                return Err(Error::dims(format!("{name} blocks missing")));
            };
            if blocks.len() != dims.len() {
                return Err(Error::dims(format!("{} {name} blocks for {} views", blocks.len(), dims.len())));
            }
            for (k, (b, &d)) in blocks.iter().zip(dims).enumerate() {
                if b.shape() != (d, n) {
                    return Err(Error::dims(format!("{name}[{k}] is {:?}, expected ({d}, {n})", b.shape())));
                }
            }
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        let finite = |m: &Matrix| m.iter().all(|v| v.is_finite());
        self.x0.iter().all(finite)
            && self.xk.iter().flatten().all(finite)
            && self.sk.iter().flatten().all(finite)
    }
}

fn row_offset(dims: &[usize], k: usize) -> Result<usize> {
    if k >= dims.len() {
        return Err(Error::invalid(format!("view index {k} out of range for {} views", dims.len())));
    }
    Ok(dims[..k].iter().sum())
}

/// `P_k X0`: the rows of the stacked matrix that belong to view `k`.
pub fn select_block(x0: &Matrix, k: usize, dims: &[usize]) -> Result<Matrix> {
    let total: usize = dims.iter().sum();
    if x0.nrows() != total {
        return Err(Error::dims(format!("stacked matrix has {} rows, views sum to {total}", x0.nrows())));
    }
    let start = row_offset(dims, k)?;
    Ok(x0.rows(start, dims[k]).into_owned())
}

/// Row-wise stacking of the per-view parts, in view order.
pub fn concat_blocks(parts: &[Matrix]) -> Result<Matrix> {
    let Some(first) = parts.first() else {
        return Err(Error::invalid("concat_blocks: no parts"));
    };
    let n = first.ncols();
    if let Some(p) = parts.iter().find(|p| p.ncols() != n) {
        return Err(Error::dims(format!("concat_blocks: column counts {n} and {}", p.ncols())));
    }
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Matrix::zeros(rows, n);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.nrows()).copy_from(p);
        at += p.nrows();
    }
    Ok(out)
}

/// `P_k X0 + X_k + S_k`, summing only the blocks active under `spec`.
pub fn assemble_prediction(blocks: &LatentBlocks, spec: &ModelSpec, dims: &[usize], k: usize) -> Result<Matrix> {
    let start = row_offset(dims, k)?;
    let d = dims[k];
    let mut pred: Option<Matrix> = None;
    let mut add = |m: Matrix| match pred.as_mut() {
        Some(p) => *p += m,
        None => pred = Some(m),
    };
    if spec.shared {
        let x0 = blocks.x0.as_ref().ok_or_else(|| Error::dims("shared block missing"))?;
        if x0.nrows() < start + d {
            return Err(Error::dims("shared block has too few rows"));
        }
        add(x0.rows(start, d).into_owned());
    }
    if spec.specific {
        let xk = blocks.xk.as_ref().ok_or_else(|| Error::dims("x_k blocks missing"))?;
        add(xk.get(k).ok_or_else(|| Error::dims("x_k block missing"))?.clone());
    }
    if spec.robust {
        let sk = blocks.sk.as_ref().ok_or_else(|| Error::dims("s_k blocks missing"))?;
        add(sk.get(k).ok_or_else(|| Error::dims("s_k block missing"))?.clone());
    }
    pred.ok_or_else(|| Error::invalid("model has no active blocks"))
}

/// Regularization part `λ0‖X0‖_* + Σ λ_k‖X_k‖_* + Σ α_k‖S_k‖₁`.
pub fn regularizer(spec: &ModelSpec, blocks: &LatentBlocks) -> f64 {
    let mut total = 0.0;
    if spec.shared {
        if let Some(x0) = &blocks.x0 {
            total += spec.lambda0 * nuclear_norm(x0);
        }
    }
    if spec.specific {
        if let Some(xk) = &blocks.xk {
            total += xk.iter().zip(&spec.lambda_k).map(|(x, l)| l * nuclear_norm(x)).sum::<f64>();
        }
    }
    if spec.robust {
        if let Some(sk) = &blocks.sk {
            total += sk.iter().zip(&spec.alpha_k).map(|(s, a)| a * l1_norm(s)).sum::<f64>();
        }
    }
    total
}

/// Full penalized training objective of `spec` at `blocks`.
pub fn objective(problem: &MultiViewProblem, spec: &ModelSpec, blocks: &LatentBlocks) -> Result<f64> {
    let dims = problem.dims();
    blocks.check(spec, &dims, problem.n)?;
    if !blocks.all_finite() {
        return Err(Error::invalid("objective: blocks contain non-finite entries"));
    }
    let mut total = regularizer(spec, blocks);
    for (k, view) in problem.views.iter().enumerate() {
        let pred = assemble_prediction(blocks, spec, &dims, k)?;
        total += cumulative_loss(&pred, view);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn seq(d: usize, n: usize) -> Matrix {
        Matrix::from_fn(d, n, |i, j| (i * n + j) as f64)
    }

    #[test]
    fn select_block_rows() {
        let x0 = seq(5, 3);
        assert_eq!(select_block(&x0, 0, &[2, 3]).unwrap(), x0.rows(0, 2).into_owned());
        assert_eq!(select_block(&x0, 1, &[2, 3]).unwrap(), x0.rows(2, 3).into_owned());
        assert!(select_block(&x0, 2, &[2, 3]).is_err());
        assert!(matches!(select_block(&x0, 0, &[2, 2]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn concat_examples() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = Matrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let c = concat_blocks(&[a.clone(), b]).unwrap();
        assert_eq!(c, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(concat_blocks(std::slice::from_ref(&a)).unwrap(), a);
        assert!(concat_blocks(&[a, Matrix::zeros(1, 3)]).is_err());
    }

    #[test]
    fn prediction_uses_active_blocks() {
        let dims = [2, 3];
        let x0 = seq(5, 4);
        let xk = vec![Matrix::from_element(2, 4, 1.0), Matrix::from_element(3, 4, 2.0)];
        let sk = vec![Matrix::from_element(2, 4, 10.0), Matrix::from_element(3, 4, 20.0)];
        let blocks = LatentBlocks {
            x0: Some(x0.clone()),
            xk: Some(xk.clone()),
            sk: Some(sk.clone()),
        };
        let j00 = ModelSpec::from_variant(Variant::J00, 2, 1.0, 1.0, 1.0);
        assert_eq!(assemble_prediction(&blocks, &j00, &dims, 1).unwrap(), x0.rows(2, 3).into_owned());
        let i00 = ModelSpec::from_variant(Variant::I00, 2, 1.0, 1.0, 1.0);
        assert_eq!(assemble_prediction(&blocks, &i00, &dims, 0).unwrap(), xk[0]);
        let jlr = ModelSpec::from_variant(Variant::JLR, 2, 1.0, 1.0, 1.0);
        let zero_shared = LatentBlocks {
            x0: Some(Matrix::zeros(5, 4)),
            ..blocks
        };
        assert_eq!(assemble_prediction(&zero_shared, &jlr, &dims, 1).unwrap(), &xk[1] + &sk[1]);
    }

    fn small_problem(loss: LossKind) -> MultiViewProblem {
        let v1 = ViewData::new(2, vec![(0, 0, 1.0), (1, 2, -1.0), (0, 1, 1.0)], loss);
        let v2 = ViewData::new(1, vec![(0, 0, -1.0), (0, 2, 1.0)], loss);
        MultiViewProblem::new(3, vec![v1, v2]).unwrap()
    }

    #[test]
    fn objective_at_zero() {
        for variant in Variant::ALL {
            let spec = ModelSpec::from_variant(variant, 2, 1.0, 1.0, 1.0);
            let sq = small_problem(LossKind::Squared);
            let zeros = LatentBlocks::zeros(&spec, &sq.dims(), sq.n);
            assert_abs_diff_eq!(objective(&sq, &spec, &zeros).unwrap(), 0.5 * 5.0);
            let lg = small_problem(LossKind::Logistic);
            assert_abs_diff_eq!(objective(&lg, &spec, &zeros).unwrap(), 5.0 * 2f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn objective_rejects_non_finite_and_misshapen_blocks() {
        let p = small_problem(LossKind::Squared);
        let spec = ModelSpec::from_variant(Variant::JL0, 2, 1.0, 1.0, 1.0);
        let mut blocks = LatentBlocks::zeros(&spec, &p.dims(), p.n);
        blocks.x0.as_mut().unwrap()[(0, 0)] = f64::INFINITY;
        assert!(matches!(objective(&p, &spec, &blocks), Err(Error::InvalidArgument(_))));
        blocks.x0 = Some(Matrix::zeros(2, 3));
        assert!(matches!(objective(&p, &spec, &blocks), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn validation_reports_every_violation() {
        assert!(validate_problem(&small_problem(LossKind::Squared)).is_ok());

        let dup = MultiViewProblem {
            n: 2,
            views: vec![ViewData::new(2, vec![(0, 0, 1.0), (0, 0, 2.0)], LossKind::Squared)],
        };
        assert_eq!(
            validate_problem(&dup).unwrap_err(),
            vec![Violation::DuplicateEntry { view: 0, row: 0, col: 0 }]
        );

        let nonbinary = MultiViewProblem {
            n: 2,
            views: vec![ViewData::new(2, vec![(1, 1, 0.5)], LossKind::Logistic)],
        };
        assert!(matches!(
            validate_problem(&nonbinary).unwrap_err()[..],
            [Violation::NonBinaryTarget { value, .. }] if value == 0.5
        ));

        let many = MultiViewProblem {
            n: 2,
            views: vec![
                ViewData::new(2, vec![(5, 0, 1.0), (0, 9, 1.0)], LossKind::Squared),
                ViewData::new(0, vec![], LossKind::Squared),
            ],
        };
        assert_eq!(validate_problem(&many).unwrap_err().len(), 3);
        assert!(MultiViewProblem::new(2, vec![]).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let spec = ModelSpec::from_variant(v, 2, 1.0, 1.0, 1.0);
            assert_eq!(spec.variant(), Some(v));
        }
        assert!("XYZ".parse::<Variant>().is_err());
        let bad = ModelSpec {
            shared: false,
            specific: false,
            robust: true,
            lambda0: 1.0,
            lambda_k: vec![],
            alpha_k: vec![1.0],
        };
        assert!(bad.validate(1).is_err());
        let negative = ModelSpec::from_variant(Variant::JLR, 2, -1.0, 1.0, 1.0);
        assert!(negative.validate(2).is_err());
    }

    fn arb_parts() -> impl Strategy<Value = Vec<Matrix>> {
        (1usize..5, proptest::collection::vec(1usize..5, 1..4)).prop_flat_map(|(n, dims)| {
            dims.into_iter()
                .map(|d| proptest::collection::vec(-5.0f64..5.0, d * n).prop_map(move |v| Matrix::from_vec(d, n, v)))
                .collect::<Vec<_>>()
        })
    }

    proptest! {
        #[test]
        fn select_and_concat_are_inverse(parts in arb_parts()) {
            let dims: Vec<usize> = parts.iter().map(|p| p.nrows()).collect();
            let stacked = concat_blocks(&parts).unwrap();
            for (k, p) in parts.iter().enumerate() {
                prop_assert_eq!(&select_block(&stacked, k, &dims).unwrap(), p);
            }
            let again: Vec<Matrix> = (0..dims.len()).map(|k| select_block(&stacked, k, &dims).unwrap()).collect();
            prop_assert_eq!(concat_blocks(&again).unwrap(), stacked);
        }
    }
}
