//! Reconstruction quality against a known ground truth.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{fmt17, frobenius};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub frobenius_rel_error: f64,
    pub max_abs_error: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold_used: f64,
}

/// Compares matrices entrywise and their off-diagonal edge sets
/// (`|entry| > edge_threshold`).
///
/// The relative error falls back to the absolute error when the truth is zero.
/// Precision (recall) of an empty predicted (true) edge set is 1 when the other
/// set is also empty and 0 otherwise.
pub fn compare(
    truth: &DMatrix<f64>,
    recovered: &DMatrix<f64>,
    edge_threshold: f64,
) -> Result<EvalResult> {
    if truth.shape() != recovered.shape() {
        return Err(Error::DimensionMismatch {
            expected: truth.nrows(),
            found: recovered.nrows(),
        });
    }
    let diff = truth - recovered;
    let abs_err = frobenius(&diff);
    let norm = frobenius(truth);
    let frobenius_rel_error = if norm == 0.0 { abs_err } else { abs_err / norm };
    let max_abs_error = diff.amax();

    let (mut tp, mut n_truth, mut n_pred) = (0usize, 0usize, 0usize);
    for i in 0..truth.nrows() {
        for j in 0..truth.ncols() {
            if i == j {
                continue;
            }
            let t = truth[(i, j)].abs() > edge_threshold;
            let r = recovered[(i, j)].abs() > edge_threshold;
            n_truth += usize::from(t);
            n_pred += usize::from(r);
            tp += usize::from(t && r);
        }
    }
    let ratio = |num: usize, den: usize, other: usize| {
        if den > 0 {
            num as f64 / den as f64
        } else if other == 0 {
            1.0
        } else {
            0.0
        }
    };
    let precision = ratio(tp, n_pred, n_truth);
    let recall = ratio(tp, n_truth, n_pred);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvalResult {
        frobenius_rel_error,
        max_abs_error,
        precision,
        recall,
        f1,
        threshold_used: edge_threshold,
    })
}

impl EvalResult {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k} {}", fmt17(v));
        }
        out
    }

    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("frobenius_rel_error", self.frobenius_rel_error),
            ("max_abs_error", self.max_abs_error),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("threshold_used", self.threshold_used),
        ]
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = EvalResult {
            frobenius_rel_error: f64::NAN,
            max_abs_error: f64::NAN,
            precision: f64::NAN,
            recall: f64::NAN,
            f1: f64::NAN,
            threshold_used: f64::NAN,
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| Error::Parse(format!("bad evaluation line {line:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad evaluation value {line:?}")))?;
            let slot = match k {
                "frobenius_rel_error" => &mut r.frobenius_rel_error,
                "max_abs_error" => &mut r.max_abs_error,
                "precision" => &mut r.precision,
                "recall" => &mut r.recall,
                "f1" => &mut r.f1,
                "threshold_used" => &mut r.threshold_used,
                _ => return Err(Error::Parse(format!("unknown evaluation key {k:?}"))),
            };
            *slot = v;
        }
        if r.fields().iter().any(|(_, v)| v.is_nan()) {
            return Err(Error::Parse("incomplete evaluation block".into()));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p3(w01: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            3,
            3,
            &[w01, -w01, 0.0, -w01, w01 + 1.0, -1.0, 0.0, -1.0, 1.0],
        )
    }

    #[test]
    fn identical_matrices() {
        let r = compare(&p3(1.0), &p3(1.0), 1e-9).unwrap();
        assert_eq!(r.frobenius_rel_error, 0.0);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 1.0);
    }

    #[test]
    fn zero_recovery_has_no_recall() {
        let r = compare(&p3(1.0), &DMatrix::zeros(3, 3), 1e-9).unwrap();
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.frobenius_rel_error, 1.0);
    }

    #[test]
    fn one_weight_off_by_ten_percent() {
        let r = compare(&p3(1.0), &p3(1.1), 1e-9).unwrap();
        assert_eq!(r.f1, 1.0);
        // Four entries differ by 0.1; ||P3||_F = sqrt(1+1+1+4+1+1+1) = sqrt(10).
        assert_relative_eq!(r.frobenius_rel_error, 0.2 / 10f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r.max_abs_error, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn zero_truth_uses_absolute_error() {
        let z = DMatrix::zeros(2, 2);
        let mut r = z.clone();
        r[(0, 1)] = 0.5;
        let e = compare(&z, &r, 0.1).unwrap();
        assert_eq!(e.frobenius_rel_error, 0.5);
        assert_eq!(compare(&z, &z, 0.1).unwrap().f1, 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(compare(&DMatrix::zeros(2, 2), &DMatrix::zeros(3, 3), 0.1).is_err());
    }

    #[test]
    fn text_round_trip() {
        let r = compare(&p3(1.0), &p3(1.3), 0.05).unwrap();
        assert_eq!(EvalResult::from_text(&r.to_text()).unwrap(), r);
    }

    proptest! {
        #[test]
        fn swapping_exchanges_precision_and_recall(
            a in proptest::collection::vec(0u8..3, 16),
            b in proptest::collection::vec(0u8..3, 16),
        ) {
            let t = DMatrix::from_iterator(4, 4, a.iter().map(|&x| x as f64));
            let r = DMatrix::from_iterator(4, 4, b.iter().map(|&x| x as f64));
            let fwd = compare(&t, &r, 0.5).unwrap();
            let back = compare(&r, &t, 0.5).unwrap();
            prop_assert_eq!(fwd.precision, back.recall);
            prop_assert_eq!(fwd.recall, back.precision);
            prop_assert_eq!(fwd.f1, back.f1);
            prop_assert!((0.0..=1.0).contains(&fwd.f1));
        }
    }
}
