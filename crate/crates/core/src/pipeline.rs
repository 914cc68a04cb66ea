//! End-to-end imputation: normalize, estimate, map back, and copy the
//! observed cells over the estimate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{colmean_impute, gain_impute, knn_impute, mean_impute, GainConfig};
use crate::error::{Error, Result};
use crate::gan::{self, BlockEchoConfig, ConfigOverrides, EvalCounts, LossMode, LossRecord};
use crate::masking::{apply_mask, MaskedMatrix};
use crate::metrics::normalize;
use crate::mf::{pretrain, PretrainOptions};
use crate::numkern::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(rename = "blockecho")]
    BlockEcho,
    Mf,
    GanOnly,
    Mean,
    Colmean,
    Knn,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::BlockEcho,
        Method::Mf,
        Method::GanOnly,
        Method::Mean,
        Method::Colmean,
        Method::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::BlockEcho => "blockecho",
            Method::Mf => "mf",
            Method::GanOnly => "gan_only",
            Method::Mean => "mean",
            Method::Colmean => "colmean",
            Method::Knn => "knn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Spec(format!(
                    "unknown method `{s}` (expected one of blockecho, mf, gan_only, mean, colmean, knn)"
                ))
            })
    }
}

/// Ablation variants of the adversarial imputer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoD1,
    NoD2,
    /// `alpha = 0`: adversarial terms only.
    AdvOnly,
    MseLoss,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoD1,
        Variant::NoD2,
        Variant::AdvOnly,
        Variant::MseLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoD1 => "no_d1",
            Variant::NoD2 => "no_d2",
            Variant::AdvOnly => "adv_only",
            Variant::MseLoss => "mse_loss",
        }
    }

    /// Human-readable component list.
    pub fn components(self) -> &'static str {
        match self {
            Variant::Full => "G+D1+D2+KL",
            Variant::NoD1 => "G+D2+KL",
            Variant::NoD2 => "G+D1+KL",
            Variant::AdvOnly => "G+D1+D2",
            Variant::MseLoss => "G+D1+D2+MSE",
        }
    }

    pub fn apply(self, mut cfg: BlockEchoConfig) -> BlockEchoConfig {
        match self {
            Variant::Full => {}
            Variant::NoD1 => cfg.use_d1 = false,
            Variant::NoD2 => cfg.use_d2 = false,
            Variant::AdvOnly => cfg.alpha = 0.0,
            Variant::MseLoss => cfg.loss_mode = LossMode::Mse,
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            Error::Spec(format!(
                "unknown ablation variant `{s}` (expected one of full, no_d1, no_d2, adv_only, mse_loss)"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeOptions {
    /// Adversarial trainer settings; `iters`, `batch_rows`, `hint_rate` and
    /// `lr_g` also drive the GAIN-style baseline, `h` drives `mf`.
    pub config: ConfigOverrides,
    pub knn_k: usize,
    pub pretrain: PretrainOptions,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        ImputeOptions {
            config: ConfigOverrides::default(),
            knn_k: 5,
            pretrain: PretrainOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutput {
    pub method: Method,
    /// Input scale; observed cells copied bit-exactly.
    pub imputed: Matrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<BlockEchoConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<EvalCounts>,
    #[serde(skip)]
    pub losses: Vec<LossRecord>,
}

/// Copies observed cells of `xm` over `estimate`.
fn finish(xm: &MaskedMatrix, estimate: &Matrix) -> Result<Matrix> {
    gan::assemble(xm, estimate)
}

/// Runs one method on raw data. Learned methods work on per-column
/// normalized values and map the estimate back.
pub fn run_method(method: Method, xm: &MaskedMatrix, opts: &ImputeOptions) -> Result<MethodOutput> {
    run_with_config(method, xm, opts, |c| c)
}

/// [`run_method`] for the adversarial imputer with an ablation variant applied.
pub fn run_variant(variant: Variant, xm: &MaskedMatrix, opts: &ImputeOptions) -> Result<MethodOutput> {
    run_with_config(Method::BlockEcho, xm, opts, |c| variant.apply(c))
}

fn run_with_config(
    method: Method,
    xm: &MaskedMatrix,
    opts: &ImputeOptions,
    adjust: impl FnOnce(BlockEchoConfig) -> BlockEchoConfig,
) -> Result<MethodOutput> {
    let (m, n) = xm.shape();
    if !xm.values().all_finite() {
        return Err(Error::Validation("input contains non-finite observed values".into()));
    }
    let mut out = MethodOutput {
        method,
        imputed: Matrix::zeros(0, 0),
        config: None,
        counts: None,
        losses: Vec::new(),
    };
    let estimate = match method {
        Method::Mean => mean_impute(xm)?,
        Method::Colmean => colmean_impute(xm)?,
        Method::Knn | Method::Mf | Method::GanOnly | Method::BlockEcho => {
            let (y, params) = normalize(xm.values(), xm.mask())?;
            let ym = apply_mask(&y, xm.mask())?;
            let cfg = adjust(opts.config.resolve(m, n));
            cfg.validate(m, n)?;
            let est = match method {
                Method::Knn => knn_impute(&ym, opts.knn_k)?,
                Method::Mf => pretrain(&ym, cfg.h, &pretrain_opts(opts, &cfg))?.0.product(),
                Method::GanOnly => {
                    let gain = GainConfig {
                        iters: cfg.iters,
                        batch_rows: cfg.batch_rows,
                        hint_rate: cfg.hint_rate,
                        lr: cfg.lr_g,
                        noise_scale: cfg.noise_scale,
                        seed: cfg.seed,
                        ..GainConfig::for_shape(m)
                    };
                    gain_impute(&ym, &gain)?
                }
                _ => {
                    let (pre, _) = pretrain(&ym, cfg.h, &pretrain_opts(opts, &cfg))?;
                    let (_, res) = gan::train(&ym, &pre, &cfg)?;
                    out.counts = Some(res.counts);
                    out.losses = res.losses;
                    out.config = Some(cfg);
                    res.xhat
                }
            };
            params.denormalize(&est)
        }
    };
    out.imputed = finish(xm, &estimate)?;
    Ok(out)
}

fn pretrain_opts(opts: &ImputeOptions, cfg: &BlockEchoConfig) -> PretrainOptions {
    PretrainOptions {
        seed: cfg.seed,
        ..opts.pretrain
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("svd".parse::<Method>().is_err());
    }

    #[test]
    fn mean_pipeline_hand_example() {
        let x = Matrix::from_rows(&[[1.0, f64::NAN], [f64::NAN, 3.0]]).unwrap();
        let xm = MaskedMatrix::from_file_form(&x);
        let out = run_method(Method::Mean, &xm, &ImputeOptions::default()).unwrap();
        assert_eq!(out.imputed, Matrix::from_rows(&[[1.0, 2.0], [2.0, 3.0]]).unwrap());
    }

    #[test]
    fn variants_adjust_config() {
        let base = BlockEchoConfig::for_shape(10, 10);
        assert_eq!(Variant::AdvOnly.apply(base.clone()).alpha, 0.0);
        assert!(!Variant::NoD1.apply(base.clone()).use_d1);
        assert!(!Variant::NoD2.apply(base.clone()).use_d2);
        assert_eq!(Variant::MseLoss.apply(base.clone()).loss_mode, LossMode::Mse);
        assert_eq!(Variant::Full.apply(base.clone()), base);
    }
}
