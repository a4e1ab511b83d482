//! Evaluation: approximation ratio, thresholded classification metrics and
//! the expected kernel read off a lifted matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::lifted::SelectionSet;

/// `sdp_objective / sgd_objective`.
pub fn approximation_ratio(sdp_objective: f64, sgd_objective: f64) -> Result<f64> {
    if !(sgd_objective > 0.0 && sgd_objective.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sgd_objective",
            reason: format!("must be positive and finite, got {sgd_objective}"),
        });
    }
    if !sdp_objective.is_finite() {
        return Err(Error::NonFinite("sdp_objective"));
    }
    Ok(sdp_objective / sgd_objective)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of test points whose true class this is.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub best_threshold: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub threshold_rule: String,
}

pub const THRESHOLD_RULE: &str =
    "argmax over classes with score >= tau, global argmax if none; tau in 0.00..=1.00 step 0.01, smallest tau on ties";

fn argmax(row: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in row.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Predicted class of each row at threshold `tau`.
///
/// Whenever any class clears `tau` the global maximum does too, so the
/// result coincides with the plain argmax for every `tau`.
pub fn predict_with_threshold(scores: &DMatrix<f64>, tau: f64) -> Vec<usize> {
    (0..scores.nrows())
        .map(|i| {
            let row = scores.row(i);
            let cleared = argmax(row.iter().map(|&s| if s >= tau { s } else { f64::NEG_INFINITY }));
            match cleared {
                Some(k) if row[k] >= tau => k,
                _ => argmax(row.iter().copied()).unwrap_or(0),
            }
        })
        .collect()
}

fn truth_classes(y: &DMatrix<f64>) -> Result<Vec<usize>> {
    (0..y.nrows())
        .map(|i| {
            let row = y.row(i);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::InvalidParameter {
                    name: "y_test",
                    reason: format!("row {i} is not one-hot"),
                });
            }
            Ok(row.iter().position(|&v| v == 1.0).expect("one entry is 1"))
        })
        .collect()
}

fn report(truth: &[usize], pred: &[usize], c: usize, tau: f64) -> MetricsReport {
    let mut confusion = vec![vec![0usize; c]; c];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t][p] += 1;
    }
    let total = truth.len();
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = (0..c).map(|t| confusion[t][k]).sum();
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let weighted_f1 = per_class.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / total as f64;
    MetricsReport {
        accuracy: correct as f64 / total as f64,
        weighted_f1,
        best_threshold: tau,
        per_class,
        confusion,
        threshold_rule: THRESHOLD_RULE.to_string(),
    }
}

/// Sweep the threshold over `0.00, 0.01, …, 1.00`, keep the most accurate
/// (smallest on ties) and score it.
pub fn classify_and_score(scores: &DMatrix<f64>, y_test: &DMatrix<f64>) -> Result<MetricsReport> {
    if scores.nrows() == 0 {
        return Err(Error::EmptyDimension("test set"));
    }
    if scores.shape() != y_test.shape() {
        return Err(mismatch(
            "classify_and_score",
            format!("{}x{}", y_test.nrows(), y_test.ncols()),
            format!("{}x{}", scores.nrows(), scores.ncols()),
        ));
    }
    let c = scores.ncols();
    if c < 2 {
        return Err(Error::InvalidParameter {
            name: "classes",
            reason: format!("need at least 2, got {c}"),
        });
    }
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let truth = truth_classes(y_test)?;
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for step in 0..=100 {
        let tau = step as f64 / 100.0;
        let pred = predict_with_threshold(scores, tau);
        let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
        if best.as_ref().is_none_or(|b| correct > b.0) {
            best = Some((correct, tau, pred));
        }
    }
    let (_, tau, pred) = best.expect("sweep is nonempty");
    Ok(report(&truth, &pred, c, tau))
}

/// `X0 (P_u Λ P_uᵀ) X1ᵀ`.
pub fn kernel_matrix(
    lambda: &DMatrix<f64>,
    sel: &SelectionSet,
    x0: &DMatrix<f64>,
    x1: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if lambda.nrows() != sel.p() || lambda.ncols() != sel.p() {
        return Err(mismatch("kernel_matrix lifted matrix", sel.p(), lambda.nrows()));
    }
    if x0.ncols() != sel.d() {
        return Err(mismatch("kernel_matrix X0 columns", sel.d(), x0.ncols()));
    }
    if x1.ncols() != sel.d() {
        return Err(mismatch("kernel_matrix X1 columns", sel.d(), x1.ncols()));
    }
    let uu = sel.block(lambda, sel.u(), sel.u());
    Ok(x0 * uu * x1.transpose())
}
