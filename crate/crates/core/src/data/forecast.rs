use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::wmape;
use crate::numkern::Matrix;

/// Predicts the row after the last one as the mean successor of the `k`
/// historical rows closest (Euclidean) to the last row.
///
/// Candidates are rows `0..rows-1` (each has a successor); ties are broken
/// by the earlier row.
pub fn forecast_next(history: &Matrix, k: usize) -> Result<Matrix> {
    let rows = history.rows();
    if k == 0 || k >= rows {
        return Err(Error::Spec(format!(
            "forecast needs 1 <= k < history rows, got k={k} with {rows} rows"
        )));
    }
    if !history.all_finite() {
        return Err(Error::Spec("forecast history contains non-finite values".into()));
    }
    let last = history.row(rows - 1);
    let mut scored: Vec<(f64, usize)> = (0..rows - 1)
        .map(|t| {
            let d: f64 = history
                .row(t)
                .iter()
                .zip(last)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, t)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut pred = Matrix::zeros(1, history.cols());
    for &(_, t) in &scored[..k] {
        for (p, v) in pred.as_mut_slice().iter_mut().zip(history.row(t + 1)) {
            *p += v;
        }
    }
    pred.map_inplace(|v| v / k as f64);
    Ok(pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub k: usize,
    /// Number of trailing rows predicted one step ahead.
    pub holdout: usize,
}

impl ForecastConfig {
    /// k = 5, holdout = last 10% of rows (at least one).
    pub fn for_rows(rows: usize) -> Self {
        ForecastConfig {
            k: 5,
            holdout: (rows / 10).max(1),
        }
    }

    /// Stable identifier of the forecaster and its features; identical for
    /// every variant scored in one report.
    pub fn config_hash(&self) -> String {
        let desc = format!("knn-next-row;features=full-row;k={};holdout={}", self.k, self.holdout);
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in desc.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamRow {
    pub variant: String,
    pub wmape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamReport {
    pub config: ForecastConfig,
    pub config_hash: String,
    /// Score of the unmasked original data.
    pub reference: f64,
    /// `original` first, then each variant in input order.
    pub rows: Vec<DownstreamRow>,
}

impl DownstreamReport {
    pub fn get(&self, variant: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.variant == variant).map(|r| r.wmape)
    }
}

/// Rolling one-step-ahead WMAPE over the last `holdout` rows.
fn rolling_wmape(data: &Matrix, truth: &Matrix, cfg: &ForecastConfig) -> Result<f64> {
    let rows = truth.rows();
    let mut preds = Vec::with_capacity(cfg.holdout * truth.cols());
    let mut actual = Vec::with_capacity(cfg.holdout * truth.cols());
    for t in rows - cfg.holdout..rows {
        let history = data.select_rows(&(0..t).collect::<Vec<_>>());
        preds.extend_from_slice(forecast_next(&history, cfg.k)?.as_slice());
        actual.extend_from_slice(truth.row(t));
    }
    let n = truth.cols();
    wmape(
        &Matrix::from_vec(cfg.holdout, n, preds)?,
        &Matrix::from_vec(cfg.holdout, n, actual)?,
    )
}

/// Scores each variant by forecasting the true next rows from the variant's
/// history. The original data is always scored first as `original`.
pub fn eval_downstream(truth: &Matrix, variants: &[(String, Matrix)], cfg: ForecastConfig) -> Result<DownstreamReport> {
    if cfg.holdout == 0 || cfg.holdout >= truth.rows() {
        return Err(Error::Spec(format!(
            "holdout must be in 1..{}, got {}",
            truth.rows(),
            cfg.holdout
        )));
    }
    let reference = rolling_wmape(truth, truth, &cfg)?;
    let mut rows = vec![DownstreamRow {
        variant: "original".into(),
        wmape: reference,
    }];
    for (name, data) in variants {
        data.check_same_shape("eval_downstream", truth)?;
        rows.push(DownstreamRow {
            variant: name.clone(),
            wmape: rolling_wmape(data, truth, &cfg)?,
        });
    }
    Ok(DownstreamReport {
        config: cfg,
        config_hash: cfg.config_hash(),
        reference,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_forecast_themselves() {
        let h = Matrix::from_fn(6, 3, |_, j| j as f64 + 0.5);
        assert_eq!(forecast_next(&h, 2).unwrap().row(0), h.row(0));
    }

    #[test]
    fn periodic_history_k1_is_exact() {
        let p = 5;
        let f = |i: usize, j: usize| ((i % p) as f64 * 1.3 + j as f64).sin() + 2.0;
        let h = Matrix::from_fn(23, 4, f);
        let pred = forecast_next(&h, 1).unwrap();
        for j in 0..4 {
            assert!((pred[(0, j)] - f(23, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn all_rows_constant_data() {
        let h = Matrix::filled(7, 2, 4.0);
        assert_eq!(forecast_next(&h, 6).unwrap(), Matrix::filled(1, 2, 4.0));
        assert!(forecast_next(&h, 7).is_err());
        assert!(forecast_next(&h, 0).is_err());
    }

    #[test]
    fn original_is_reference_and_self_match() {
        let x = Matrix::from_fn(40, 3, |i, j| ((i % 8) as f64 + j as f64).cos() + 3.0);
        let cfg = ForecastConfig { k: 2, holdout: 5 };
        let rep = eval_downstream(&x, &[("copy".into(), x.clone())], cfg).unwrap();
        assert_eq!(rep.rows[0].variant, "original");
        assert_eq!(rep.get("copy"), Some(rep.reference));
        assert!(eval_downstream(&x, &[], ForecastConfig { k: 2, holdout: 40 }).is_err());
    }
}
