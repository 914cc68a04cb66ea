//! Normalization and evaluation metrics.
//!
//! RMSE is reported in two forms. The standard form divides the squared
//! error by the number of missing cells before the square root. The
//! literal form divides the Frobenius norm of the missing-cell error by the
//! missing-cell count, which shrinks with matrix size; it is kept so numbers
//! can be compared with results quoted in that form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkern::Matrix;

/// Default lower end of the normalized range, keeping KL terms away from 0.
pub const DEFAULT_NORM_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScope {
    #[default]
    Column,
    Global,
}

/// Min-max parameters mapping observed values onto `[floor, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub scope: NormScope,
    pub floor: f64,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Columns with no observed cell. Their parameters are `min = max = 0`.
    pub empty_columns: Vec<usize>,
}

impl NormParams {
    fn col(&self, j: usize) -> usize {
        match self.scope {
            NormScope::Column => j,
            NormScope::Global => 0,
        }
    }

    pub fn forward_value(&self, j: usize, x: f64) -> f64 {
        let c = self.col(j);
        let (lo, hi) = (self.min[c], self.max[c]);
        if hi > lo {
            self.floor + (1.0 - self.floor) * (x - lo) / (hi - lo)
        } else {
            self.floor
        }
    }

    pub fn inverse_value(&self, j: usize, y: f64) -> f64 {
        let c = self.col(j);
        let (lo, hi) = (self.min[c], self.max[c]);
        if hi > lo {
            lo + (y - self.floor) / (1.0 - self.floor) * (hi - lo)
        } else {
            lo
        }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| self.forward_value(j, x[(i, j)]))
    }

    pub fn denormalize(&self, y: &Matrix) -> Matrix {
        Matrix::from_fn(y.rows(), y.cols(), |i, j| self.inverse_value(j, y[(i, j)]))
    }
}

/// Min-max normalization over observed cells only. Missing cells stay 0.
pub fn normalize_with(x: &Matrix, mask: &Matrix, scope: NormScope, floor: f64) -> Result<(Matrix, NormParams)> {
    x.check_same_shape("normalize", mask)?;
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::Spec(format!("normalization floor must be in [0, 1), got {floor}")));
    }
    let (m, n) = x.shape();
    let groups = match scope {
        NormScope::Column => n,
        NormScope::Global => 1,
    };
    let mut min = vec![f64::INFINITY; groups];
    let mut max = vec![f64::NEG_INFINITY; groups];
    for i in 0..m {
        for j in 0..n {
            if mask[(i, j)] == 1.0 {
                let g = if groups == 1 { 0 } else { j };
                min[g] = min[g].min(x[(i, j)]);
                max[g] = max[g].max(x[(i, j)]);
            }
        }
    }
    for g in 0..groups {
        if min[g] > max[g] {
            min[g] = 0.0;
            max[g] = 0.0;
        }
    }
    let empty_columns = (0..n)
        .filter(|&j| (0..m).all(|i| mask[(i, j)] == 0.0))
        .collect();
    let params = NormParams {
        scope,
        floor,
        min,
        max,
        empty_columns,
    };
    let y = Matrix::from_fn(m, n, |i, j| {
        if mask[(i, j)] == 1.0 {
            params.forward_value(j, x[(i, j)])
        } else {
            0.0
        }
    });
    Ok((y, params))
}

/// Per-column normalization with the default floor.
pub fn normalize(x: &Matrix, mask: &Matrix) -> Result<(Matrix, NormParams)> {
    normalize_with(x, mask, NormScope::Column, DEFAULT_NORM_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsePair {
    /// `sqrt(Σ err² / count)` over missing cells.
    pub standard: f64,
    /// `‖err ⊙ (1 − M)‖_F / count`.
    pub paper_form: f64,
}

/// RMSE over cells where `mask == 0`; observed cells are ignored.
pub fn rmse_missing(imputed: &Matrix, truth: &Matrix, mask: &Matrix) -> Result<RmsePair> {
    imputed.check_same_shape("rmse_missing", truth)?;
    imputed.check_same_shape("rmse_missing", mask)?;
    let mut sq = 0.0;
    let mut count = 0usize;
    for ((a, b), m) in imputed.as_slice().iter().zip(truth.as_slice()).zip(mask.as_slice()) {
        if *m == 0.0 {
            sq += (a - b) * (a - b);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Evaluation("no missing cells to evaluate".into()));
    }
    let c = count as f64;
    Ok(RmsePair {
        standard: (sq / c).sqrt(),
        paper_form: sq.sqrt() / c,
    })
}

/// `Σ|pred − actual| / Σ|actual|`.
pub fn wmape(pred: &Matrix, actual: &Matrix) -> Result<f64> {
    pred.check_same_shape("wmape", actual)?;
    let denom: f64 = actual.as_slice().iter().map(|v| v.abs()).sum();
    if denom <= 0.0 {
        return Err(Error::Evaluation("WMAPE undefined: actual values are all zero".into()));
    }
    let num: f64 = pred
        .as_slice()
        .iter()
        .zip(actual.as_slice())
        .map(|(p, a)| (p - a).abs())
        .sum();
    Ok(num / denom)
}

/// One method's scores on one masked instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub pattern: String,
    pub rate: f64,
    pub seed: u64,
    pub rmse_standard: f64,
    pub rmse_paper_form: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wmape: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_column() {
        let x = Matrix::from_rows(&[[0.0], [5.0], [10.0]]).unwrap();
        let (y, _) = normalize_with(&x, &Matrix::ones(3, 1), NormScope::Column, 0.0).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_floor() {
        let x = Matrix::from_rows(&[[3.0, 1.0], [3.0, 2.0]]).unwrap();
        let (y, p) = normalize(&x, &Matrix::ones(2, 2)).unwrap();
        assert_eq!(y.column(0), vec![DEFAULT_NORM_FLOOR; 2]);
        assert_eq!(p.denormalize(&y).column(0), vec![3.0, 3.0]);
    }

    #[test]
    fn round_trip() {
        let x = Matrix::from_fn(6, 4, |i, j| (i as f64 * 1.7 - j as f64 * 3.1).sin() * 100.0 + j as f64);
        for scope in [NormScope::Column, NormScope::Global] {
            let (y, p) = normalize_with(&x, &Matrix::ones(6, 4), scope, DEFAULT_NORM_FLOOR).unwrap();
            assert!(y.as_slice().iter().all(|&v| (DEFAULT_NORM_FLOOR..=1.0).contains(&v)));
            let back = p.denormalize(&y);
            for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn empty_column_flagged() {
        let x = Matrix::from_rows(&[[1.0, 9.0], [2.0, 9.0]]).unwrap();
        let mask = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let (_, p) = normalize(&x, &mask).unwrap();
        assert_eq!(p.empty_columns, vec![1]);
    }

    #[test]
    fn normalization_ignores_missing_cells() {
        let x = Matrix::from_rows(&[[0.0], [1e9], [10.0]]).unwrap();
        let mask = Matrix::from_rows(&[[1.0], [0.0], [1.0]]).unwrap();
        let (y, _) = normalize_with(&x, &mask, NormScope::Column, 0.0).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn rmse_hand_values() {
        let truth = Matrix::zeros(2, 2);
        let imputed = Matrix::from_rows(&[[0.5, 7.0], [0.5, 7.0]]).unwrap();
        let mask = Matrix::from_rows(&[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let r = rmse_missing(&imputed, &truth, &mask).unwrap();
        assert!((r.standard - 0.5).abs() < 1e-12);
        assert!((r.paper_form - 0.5f64.sqrt() / 2.0).abs() < 1e-12);
        let exact = rmse_missing(&truth, &truth, &mask).unwrap();
        assert_eq!((exact.standard, exact.paper_form), (0.0, 0.0));
        assert!(matches!(
            rmse_missing(&truth, &truth, &Matrix::ones(2, 2)),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn wmape_hand_values() {
        let actual = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let pred = Matrix::from_rows(&[[1.1, 1.9, 3.3]]).unwrap();
        assert!((wmape(&pred, &actual).unwrap() - 0.5 / 6.0).abs() < 1e-12);
        assert_eq!(wmape(&actual, &actual).unwrap(), 0.0);
        assert_eq!(wmape(&Matrix::zeros(1, 3), &actual).unwrap(), 1.0);
        assert!(wmape(&actual, &Matrix::zeros(1, 3)).is_err());
    }
}
