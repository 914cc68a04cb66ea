use std::path::PathBuf;
use std::time::Instant;

use blockecho::data::{eval_downstream, CsvOptions, DownstreamReport, ForecastConfig};
use serde_json::json;

use super::load_complete;
use crate::error::Result;
use crate::manifest::{OutDir, RunManifest};

#[derive(Debug, Clone)]
pub struct ForecastRequest {
    /// Unmasked original data; also the forecasting target.
    pub input: PathBuf,
    pub csv: CsvOptions,
    /// `(name, path)` of each imputed matrix to score.
    pub imputed: Vec<(String, PathBuf)>,
    pub k: Option<usize>,
    pub holdout: Option<usize>,
    pub out_dir: PathBuf,
}

/// Scores each imputed matrix by one-step-ahead forecasting WMAPE and
/// writes `forecast.json`; the original data is the reference row.
pub fn cmd_forecast(req: &ForecastRequest) -> Result<DownstreamReport> {
    let start = Instant::now();
    let truth = load_complete(&req.input, &req.csv)?;
    let defaults = ForecastConfig::for_rows(truth.rows());
    let cfg = ForecastConfig {
        k: req.k.unwrap_or(defaults.k),
        holdout: req.holdout.unwrap_or(defaults.holdout),
    };
    let mut manifest = RunManifest::new(
        "forecast",
        json!({
            "forecast": cfg,
            "variants": req.imputed.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        }),
        Vec::new(),
    );
    manifest.add_input(&req.input)?;
    let mut variants = Vec::with_capacity(req.imputed.len());
    for (name, path) in &req.imputed {
        manifest.add_input(path)?;
        variants.push((name.clone(), load_complete(path, &req.csv)?));
    }
    let report = eval_downstream(&truth, &variants, cfg)?;
    let mut out = OutDir::create(&req.out_dir, manifest)?;
    out.write_json("forecast.json", &report)?;
    out.finish(start.elapsed().as_secs_f64())?;
    Ok(report)
}
