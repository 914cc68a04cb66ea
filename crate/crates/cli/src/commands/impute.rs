use std::path::PathBuf;
use std::time::Instant;

use blockecho::data::{write_csv_string, CsvOptions, Dataset};
use blockecho::gan::loss_trace_csv;
use blockecho::masking::{apply_mask, read_mask_csv};
use blockecho::metrics::{rmse_missing, MetricReport};
use blockecho::numkern::Matrix;
use blockecho::pipeline::{run_method, ImputeOptions, Method, MethodOutput};
use serde_json::json;

use super::{load_complete, load_input};
use crate::error::{CliError, Result};
use crate::manifest::{OutDir, RunManifest};

#[derive(Debug, Clone)]
pub struct ImputeRequest {
    pub input: PathBuf,
    pub csv: CsvOptions,
    /// Extra cells to hide on top of the input's empty cells.
    pub mask: Option<PathBuf>,
    /// Complete matrix to score against. Defaults to the input itself when a
    /// mask is given and the input has no empty cells.
    pub truth: Option<PathBuf>,
    pub method: Method,
    pub options: ImputeOptions,
    pub out_dir: PathBuf,
}

#[derive(Debug)]
pub struct ImputeOutcome {
    pub output: MethodOutput,
    pub metrics: Option<MetricReport>,
    pub manifest: RunManifest,
}

/// Load, hide, impute, score. Writes `imputed.csv`, `metrics.json` when a
/// ground truth is available, and `losses.csv` for the adversarial imputer.
pub fn cmd_impute(req: &ImputeRequest) -> Result<ImputeOutcome> {
    let start = Instant::now();
    let ds = load_input(&req.input, &req.csv)?;
    let (m, n) = ds.matrix.shape();
    let mut manifest = RunManifest::new(
        "impute",
        json!({
            "method": req.method,
            "config": req.options.config.resolve(m, n),
            "knn_k": req.options.knn_k,
            "pretrain": req.options.pretrain,
        }),
        vec![req.options.config.resolve(m, n).seed],
    );
    manifest.add_input(&req.input)?;

    let mask = match &req.mask {
        Some(p) => {
            manifest.add_input(p)?;
            let extra = read_mask_csv(p)?;
            if extra.shape() != (m, n) {
                return Err(CliError::Usage(format!(
                    "mask {} is {}x{} but the input is {m}x{n}",
                    p.display(),
                    extra.rows(),
                    extra.cols()
                )));
            }
            ds.inherent_mask.hadamard(&extra)?
        }
        None => ds.inherent_mask.clone(),
    };
    let truth: Option<Matrix> = match (&req.truth, &req.mask) {
        (Some(p), _) => {
            manifest.add_input(p)?;
            let t = load_complete(p, &req.csv)?;
            t.check_same_shape("truth", &ds.matrix)?;
            Some(t)
        }
        (None, Some(_)) if !ds.has_missing() => Some(ds.matrix.clone()),
        _ => None,
    };

    let xm = apply_mask(&ds.matrix, &mask)?;
    let output = run_method(req.method, &xm, &req.options)?;

    let mut out = OutDir::create(&req.out_dir, manifest)?;
    let imputed = Dataset {
        matrix: output.imputed.clone(),
        row_labels: ds.row_labels.clone(),
        col_labels: ds.col_labels.clone(),
        inherent_mask: Matrix::ones(m, n),
    };
    out.write_text("imputed.csv", &write_csv_string(&imputed, &req.csv))?;
    if req.method == Method::BlockEcho {
        out.write_text("losses.csv", &loss_trace_csv(&output.losses))?;
    }
    let metrics = match truth {
        Some(t) => {
            let r = rmse_missing(&output.imputed, &t, &mask)?;
            let report = MetricReport {
                method: req.method.to_string(),
                pattern: if req.mask.is_some() { "file" } else { "inherent" }.into(),
                rate: mask.count_where(|v| v == 0.0) as f64 / mask.len() as f64,
                seed: req.options.config.resolve(m, n).seed,
                rmse_standard: r.standard,
                rmse_paper_form: r.paper_form,
                wmape: None,
            };
            out.write_json("metrics.json", &report)?;
            Some(report)
        }
        None => None,
    };
    if output.config.is_some() || output.counts.is_some() {
        out.write_json(
            "run.json",
            &json!({ "config": output.config, "loss_evaluations": output.counts }),
        )?;
    }
    let manifest = out.finish(start.elapsed().as_secs_f64())?;
    Ok(ImputeOutcome {
        output,
        metrics,
        manifest,
    })
}
