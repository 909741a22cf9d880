//! Held-out evaluation metrics.
//!
//! Conventions: `normalized_test_error` and `label_error_percent` are
//! percentages; `relative_reconstruction_error` is a plain ratio.

use crate::{Error, Index, Matrix, Result};

fn restricted_ratio(pred: &Matrix, truth: &Matrix, set: &[Index], what: &str) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::dims(format!("{what}: prediction {:?} vs truth {:?}", pred.shape(), truth.shape())));
    }
    if set.is_empty() {
        return Err(Error::UndefinedMetric(format!("{what}: empty evaluation set")));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(i, j) in set {
        if i >= truth.nrows() || j >= truth.ncols() {
            return Err(Error::invalid(format!("{what}: index ({i}, {j}) out of range")));
        }
        let t = truth[(i, j)];
        num += (pred[(i, j)] - t).powi(2);
        den += t * t;
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric(format!("{what}: truth is zero on the evaluation set")));
    }
    Ok((num / den).sqrt())
}

/// `100 · ‖P_T(pred − truth)‖_F / ‖P_T(truth)‖_F`.
pub fn normalized_test_error(pred: &Matrix, truth: &Matrix, test_set: &[Index]) -> Result<f64> {
    restricted_ratio(pred, truth, test_set, "test error").map(|r| 100.0 * r)
}

/// Percentage of entries in `test_set` whose predicted sign differs from the
/// ±1 label. A zero prediction counts as `+1`.
pub fn label_error_percent(pred: &Matrix, labels: &Matrix, test_set: &[Index]) -> Result<f64> {
    if pred.shape() != labels.shape() {
        return Err(Error::dims("label error: prediction and labels differ in shape"));
    }
    if test_set.is_empty() {
        return Err(Error::UndefinedMetric("label error: empty test set".into()));
    }
    let mut wrong = 0usize;
    for &(i, j) in test_set {
        if i >= labels.nrows() || j >= labels.ncols() {
            return Err(Error::invalid(format!("label error: index ({i}, {j}) out of range")));
        }
        let label = labels[(i, j)];
        if label != 1.0 && label != -1.0 {
            return Err(Error::invalid(format!("label error: label {label} at ({i}, {j}) is not ±1")));
        }
        let sign = if pred[(i, j)] >= 0.0 { 1.0 } else { -1.0 };
        if sign != label {
            wrong += 1;
        }
    }
    Ok(100.0 * wrong as f64 / test_set.len() as f64)
}

/// `‖P_M(pred − truth)‖_F / ‖P_M(truth)‖_F` over the held-out feature entries.
pub fn relative_reconstruction_error(pred: &Matrix, truth: &Matrix, missing: &[Index]) -> Result<f64> {
    restricted_ratio(pred, truth, missing, "reconstruction error")
}
