use std::path::PathBuf;
use std::time::Instant;

use blockecho::data::CsvOptions;
use blockecho::masking::{apply_mask, mask_to_csv, GeneratedMask, MaskSpec, Pattern};
use blockecho::metrics::rmse_missing;
use blockecho::numkern::Matrix;
use blockecho::pipeline::{run_method, ImputeOptions, Method};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{load_complete, observed_preserved, rows_to_csv, thread_pool};
use crate::error::Result;
use crate::manifest::{sha256_hex, OutDir, RunManifest};
use crate::plot::rate_chart;

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub rates: Vec<f64>,
    pub patterns: Vec<Pattern>,
    pub methods: Vec<Method>,
    /// Each seed drives both the mask and the training streams of its cell.
    pub seeds: Vec<u64>,
    pub options: ImputeOptions,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub pattern: String,
    pub rate: f64,
    pub seed: u64,
    pub method: String,
    pub achieved_rate: f64,
    /// Checksum of the mask CSV; equal across methods of one cell.
    pub mask_sha256: String,
    pub rmse_standard: f64,
    pub rmse_paper_form: f64,
    pub observed_preserved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRow {
    pub pattern: String,
    pub rate: f64,
    pub seed: u64,
    /// Empty when the mask itself could not be generated.
    pub method: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failed: Vec<FailedRow>,
}

/// Seed average of one (pattern, method, rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub pattern: String,
    pub method: String,
    pub rate: f64,
    pub seeds: usize,
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

struct Cell {
    pattern: Pattern,
    rate: f64,
    seed: u64,
    mask: std::result::Result<(GeneratedMask, String), String>,
}

/// Full factorial over patterns × rates × seeds × methods. Masks are built
/// once per (pattern, rate, seed) and shared by every method; a failing
/// cell is recorded and the rest continue. Row order follows the plan.
pub fn run_sweep(truth: &Matrix, plan: &SweepPlan) -> Result<SweepResult> {
    let (m, n) = truth.shape();
    let mut cells = Vec::new();
    for &pattern in &plan.patterns {
        for &rate in &plan.rates {
            for &seed in &plan.seeds {
                let mask = MaskSpec::new(pattern, rate, seed)
                    .and_then(|s| s.generate(m, n))
                    .map(|g| {
                        let sum = sha256_hex(mask_to_csv(&g.mask).as_bytes());
                        (g, sum)
                    })
                    .map_err(|e| e.to_string());
                cells.push(Cell {
                    pattern,
                    rate,
                    seed,
                    mask,
                });
            }
        }
    }

    let jobs: Vec<(usize, Method)> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.mask.is_ok())
        .flat_map(|(k, _)| plan.methods.iter().map(move |&meth| (k, meth)))
        .collect();
    let pool = thread_pool(plan.jobs)?;
    let outcomes: Vec<std::result::Result<SweepRow, FailedRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, method)| run_cell(truth, &cells[k], method, &plan.options))
            .collect()
    });

    let mut result = SweepResult::default();
    for c in cells.iter().filter(|c| c.mask.is_err()) {
        result.failed.push(FailedRow {
            pattern: c.pattern.to_string(),
            rate: c.rate,
            seed: c.seed,
            method: String::new(),
            error: c.mask.as_ref().err().cloned().unwrap_or_default(),
        });
    }
    for o in outcomes {
        match o {
            Ok(row) => result.rows.push(row),
            Err(f) => result.failed.push(f),
        }
    }
    Ok(result)
}

fn run_cell(truth: &Matrix, cell: &Cell, method: Method, options: &ImputeOptions) -> std::result::Result<SweepRow, FailedRow> {
    let failed = |error: String| FailedRow {
        pattern: cell.pattern.to_string(),
        rate: cell.rate,
        seed: cell.seed,
        method: method.to_string(),
        error,
    };
    let (g, sum) = cell.mask.as_ref().map_err(|e| failed(e.clone()))?;
    let mut opts = options.clone();
    opts.config.seed = Some(cell.seed);
    let run = || -> blockecho::Result<SweepRow> {
        let xm = apply_mask(truth, &g.mask)?;
        let out = run_method(method, &xm, &opts)?;
        let r = rmse_missing(&out.imputed, truth, &g.mask)?;
        Ok(SweepRow {
            pattern: cell.pattern.to_string(),
            rate: cell.rate,
            seed: cell.seed,
            method: method.to_string(),
            achieved_rate: g.achieved_rate,
            mask_sha256: sum.clone(),
            rmse_standard: r.standard,
            rmse_paper_form: r.paper_form,
            observed_preserved: observed_preserved(&out.imputed, truth, &g.mask),
        })
    };
    run().map_err(|e| failed(e.to_string()))
}

/// Seed-averaged RMSE per (pattern, method, rate), sorted by those keys.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummaryRow> {
    let mut keys: Vec<(String, String, f64)> = Vec::new();
    for r in rows {
        let k = (r.pattern.clone(), r.method.clone(), r.rate);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)).then(a.2.total_cmp(&b.2)));
    keys.into_iter()
        .map(|(pattern, method, rate)| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.pattern == pattern && r.method == method && r.rate == rate)
                .map(|r| r.rmse_standard)
                .collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
            SweepSummaryRow {
                pattern,
                method,
                rate,
                seeds: v.len(),
                mean_rmse: mean,
                std_rmse: var.sqrt(),
            }
        })
        .collect()
}

/// Share of adjacent pairs with `next >= prev`; 1 for fewer than two values.
pub fn nondecreasing_fraction(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 1.0;
    }
    let ok = values.windows(2).filter(|w| w[1] >= w[0]).count();
    ok as f64 / (values.len() - 1) as f64
}

#[derive(Debug, Clone)]
pub struct SweepRequest {
    /// Complete ground-truth matrix.
    pub input: PathBuf,
    pub csv: CsvOptions,
    pub plan: SweepPlan,
    pub plot: bool,
    pub out_dir: PathBuf,
}

/// Writes `sweep.csv` (one row per successful cell and method),
/// `sweep_failed.csv`, `sweep_summary.csv` and optionally `sweep.svg`.
pub fn cmd_sweep(req: &SweepRequest) -> Result<SweepResult> {
    let start = Instant::now();
    let truth = load_complete(&req.input, &req.csv)?;
    let (m, n) = truth.shape();
    let plan = &req.plan;
    let mut manifest = RunManifest::new(
        "sweep",
        json!({
            "rates": plan.rates,
            "patterns": plan.patterns.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
            "methods": plan.methods,
            "config": plan.options.config.resolve(m, n),
            "knn_k": plan.options.knn_k,
            "pretrain": plan.options.pretrain,
        }),
        plan.seeds.clone(),
    );
    manifest.add_input(&req.input)?;
    let result = run_sweep(&truth, plan)?;
    let summary = summarize(&result.rows);

    let mut out = OutDir::create(&req.out_dir, manifest)?;
    out.write_text("sweep.csv", &rows_to_csv(&result.rows)?)?;
    out.write_text("sweep_failed.csv", &failed_csv(&result.failed)?)?;
    out.write_text("sweep_summary.csv", &rows_to_csv(&summary)?)?;
    if req.plot {
        out.write_text("sweep.svg", &rate_chart(&summary))?;
    }
    for f in &result.failed {
        eprintln!(
            "warning: {} rate {} seed {} {}: {}",
            f.pattern, f.rate, f.seed, f.method, f.error
        );
    }
    out.finish(start.elapsed().as_secs_f64())?;
    Ok(result)
}

fn failed_csv(rows: &[FailedRow]) -> Result<String> {
    if rows.is_empty() {
        return Ok("pattern,rate,seed,method,error\n".into());
    }
    rows_to_csv(rows)
}
