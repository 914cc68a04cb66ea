use std::path::PathBuf;
use std::time::Instant;

use blockecho::data::CsvOptions;
use blockecho::masking::{apply_mask, mask_to_csv, read_mask_csv, MaskSpec, Pattern};
use blockecho::metrics::rmse_missing;
use blockecho::numkern::Matrix;
use blockecho::pipeline::{run_method, run_variant, ImputeOptions, Method, MethodOutput, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{load_complete, rows_to_csv, thread_pool};
use crate::error::{CliError, Result};
use crate::manifest::{sha256_hex, OutDir, RunManifest};

#[derive(Debug, Clone)]
pub enum MaskSource {
    /// One mask for every seed; seeds only change training.
    Shared(Matrix),
    /// A fresh mask per seed.
    PerSeed { pattern: Pattern, rate: f64 },
}

#[derive(Debug, Clone)]
pub struct AblatePlan {
    pub variants: Vec<Variant>,
    /// Plain methods scored on the same masks as reference rows.
    pub baselines: Vec<Method>,
    pub seeds: Vec<u64>,
    pub mask: MaskSource,
    pub options: ImputeOptions,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub components: String,
    pub seed: u64,
    pub mask_sha256: String,
    pub rmse_standard: f64,
    pub rmse_paper_form: f64,
    /// Loss evaluations during training; empty for baselines.
    pub kl_evaluations: Option<u64>,
    pub d1_evaluations: Option<u64>,
    pub d2_evaluations: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub components: String,
    pub seeds: usize,
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub summary: Vec<SummaryRow>,
}

impl AblationReport {
    pub fn rmse(&self, variant: &str, seed: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.seed == seed)
            .map(|r| r.rmse_standard)
    }

    pub fn mean(&self, variant: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.variant == variant).map(|s| s.mean_rmse)
    }

    /// Seeds where `a` scores no worse than `b`.
    pub fn paired_wins(&self, a: &str, b: &str) -> usize {
        let seeds = self.rows.iter().filter(|r| r.variant == a).map(|r| r.seed);
        seeds
            .filter(|&s| matches!((self.rmse(a, s), self.rmse(b, s)), (Some(x), Some(y)) if x <= y))
            .count()
    }
}

#[derive(Debug, Clone, Copy)]
enum Entry {
    Variant(Variant),
    Baseline(Method),
}

impl Entry {
    fn name(self) -> String {
        match self {
            Entry::Variant(v) => v.name().to_string(),
            Entry::Baseline(m) => m.name().to_string(),
        }
    }

    fn components(self) -> String {
        match self {
            Entry::Variant(v) => v.components().to_string(),
            Entry::Baseline(m) => format!("baseline:{m}"),
        }
    }

    fn run(self, xm: &blockecho::masking::MaskedMatrix, opts: &ImputeOptions) -> blockecho::Result<MethodOutput> {
        match self {
            Entry::Variant(v) => run_variant(v, xm, opts),
            Entry::Baseline(m) => run_method(m, xm, opts),
        }
    }
}

/// Every variant and baseline on every seed, with masks shared across
/// entries of one seed. Any failure aborts the table.
pub fn run_ablation(truth: &Matrix, plan: &AblatePlan) -> Result<AblationReport> {
    if plan.variants.is_empty() && plan.baselines.is_empty() {
        return Err(CliError::Usage("nothing to ablate: no variants or baselines".into()));
    }
    let (m, n) = truth.shape();
    let masks: Vec<(Matrix, String)> = plan
        .seeds
        .iter()
        .map(|&seed| {
            let mask = match &plan.mask {
                MaskSource::Shared(mask) => {
                    mask.check_same_shape("ablation mask", truth)?;
                    mask.clone()
                }
                MaskSource::PerSeed { pattern, rate } => MaskSpec::new(*pattern, *rate, seed)?.generate(m, n)?.mask,
            };
            let sum = sha256_hex(mask_to_csv(&mask).as_bytes());
            Ok((mask, sum))
        })
        .collect::<blockecho::Result<_>>()?;

    let entries: Vec<Entry> = plan
        .variants
        .iter()
        .map(|&v| Entry::Variant(v))
        .chain(plan.baselines.iter().map(|&b| Entry::Baseline(b)))
        .collect();
    let jobs: Vec<(Entry, usize)> = entries
        .iter()
        .flat_map(|&e| (0..plan.seeds.len()).map(move |k| (e, k)))
        .collect();
    let pool = thread_pool(plan.jobs)?;
    let rows: Vec<AblationRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(entry, k)| -> blockecho::Result<AblationRow> {
                let (mask, sum) = &masks[k];
                let mut opts = plan.options.clone();
                opts.config.seed = Some(plan.seeds[k]);
                let xm = apply_mask(truth, mask)?;
                let out = entry.run(&xm, &opts)?;
                let r = rmse_missing(&out.imputed, truth, mask)?;
                Ok(AblationRow {
                    variant: entry.name(),
                    components: entry.components(),
                    seed: plan.seeds[k],
                    mask_sha256: sum.clone(),
                    rmse_standard: r.standard,
                    rmse_paper_form: r.paper_form,
                    kl_evaluations: out.counts.as_ref().map(|c| c.mf_term),
                    d1_evaluations: out.counts.as_ref().map(|c| c.d1),
                    d2_evaluations: out.counts.as_ref().map(|c| c.d2),
                })
            })
            .collect::<blockecho::Result<Vec<_>>>()
    })?;

    let summary = entries
        .iter()
        .map(|&e| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == e.name())
                .map(|r| r.rmse_standard)
                .collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
            SummaryRow {
                variant: e.name(),
                components: e.components(),
                seeds: v.len(),
                mean_rmse: mean,
                std_rmse: var.sqrt(),
            }
        })
        .collect();
    Ok(AblationReport { rows, summary })
}

#[derive(Debug, Clone)]
pub struct AblateRequest {
    pub input: PathBuf,
    pub csv: CsvOptions,
    /// Mask file shared by every seed; when absent, `pattern` and `rate`
    /// generate one mask per seed.
    pub mask: Option<PathBuf>,
    pub pattern: Pattern,
    pub rate: f64,
    pub variants: Vec<Variant>,
    pub baselines: Vec<Method>,
    pub seeds: Vec<u64>,
    pub options: ImputeOptions,
    pub jobs: Option<usize>,
    pub out_dir: PathBuf,
}

/// Writes `ablation.csv` (per seed), `ablation_summary.csv` and
/// `ablation.json`. Repeated variants run once, with a warning.
pub fn cmd_ablate(req: &AblateRequest) -> Result<AblationReport> {
    let start = Instant::now();
    let truth = load_complete(&req.input, &req.csv)?;
    let (m, n) = truth.shape();
    let (variants, dropped) = crate::parse::dedup(&req.variants);
    for v in &dropped {
        eprintln!("warning: variant `{v}` listed more than once; running it once");
    }
    let (baselines, dropped) = crate::parse::dedup(&req.baselines);
    for b in &dropped {
        eprintln!("warning: baseline `{b}` listed more than once; running it once");
    }

    let mut manifest = RunManifest::new(
        "ablate",
        json!({
            "variants": variants,
            "baselines": baselines,
            "mask": req.mask.as_ref().map(|p| p.display().to_string()),
            "pattern": req.pattern.to_string(),
            "rate": req.rate,
            "config": req.options.config.resolve(m, n),
            "pretrain": req.options.pretrain,
        }),
        req.seeds.clone(),
    );
    manifest.add_input(&req.input)?;
    let mask = match &req.mask {
        Some(p) => {
            manifest.add_input(p)?;
            MaskSource::Shared(read_mask_csv(p)?)
        }
        None => MaskSource::PerSeed {
            pattern: req.pattern,
            rate: req.rate,
        },
    };
    let plan = AblatePlan {
        variants,
        baselines,
        seeds: req.seeds.clone(),
        mask,
        options: req.options.clone(),
        jobs: req.jobs,
    };
    let report = run_ablation(&truth, &plan)?;

    let mut out = OutDir::create(&req.out_dir, manifest)?;
    out.write_text("ablation.csv", &rows_to_csv(&report.rows)?)?;
    out.write_text("ablation_summary.csv", &rows_to_csv(&report.summary)?)?;
    out.write_json("ablation.json", &report)?;
    out.finish(start.elapsed().as_secs_f64())?;
    Ok(report)
}
