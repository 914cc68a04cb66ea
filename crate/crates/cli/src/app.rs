//! Argument definitions and dispatch.

use std::path::PathBuf;

use blockecho::data::{CsvOptions, SyntheticKind, SyntheticSpec};
use blockecho::gan::{ConfigOverrides, LossMode};
use blockecho::masking::Pattern;
use blockecho::mf::PretrainOptions;
use blockecho::pipeline::{ImputeOptions, Method, Variant};
use clap::{Args, Parser, Subcommand};

use crate::commands::{
    cmd_ablate, cmd_forecast, cmd_impute, cmd_mask, cmd_sweep, cmd_synth, load_config, AblateRequest,
    ForecastRequest, ImputeRequest, MaskRequest, SweepPlan, SweepRequest, SynthRequest,
};
use crate::error::{CliError, Result};
use crate::parse::{parse_list, parse_rates, parse_seeds};

#[derive(Debug, Parser)]
#[command(name = "blockecho", version, about = "Block-wise missing data imputation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a missingness mask shaped like the input.
    Mask {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long, default_value = "scattered")]
        pattern: Pattern,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Impute the missing cells of a matrix.
    Impute {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Complete matrix used for scoring.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = "blockecho")]
        method: Method,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Score methods over a grid of missing rates, patterns and seeds.
    Sweep {
        #[command(flatten)]
        io: InputArgs,
        /// `start:stop:step` or a comma list.
        #[arg(long, default_value = "0.2:0.8:0.1")]
        rates: String,
        #[arg(long, default_value = "scattered,uniblock")]
        patterns: String,
        #[arg(long, default_value = "blockecho,mf,gan_only,mean,colmean,knn")]
        methods: String,
        /// Count `n`, range `a..b` or comma list.
        #[arg(long, default_value = "3")]
        seeds: String,
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write an SVG chart of RMSE against rate.
        #[arg(long)]
        plot: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Compare ablation variants of the adversarial imputer.
    Ablate {
        #[command(flatten)]
        io: InputArgs,
        /// Mask shared by every seed; otherwise one is generated per seed.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value = "uniblock")]
        pattern: Pattern,
        #[arg(long, default_value_t = 0.4)]
        rate: f64,
        #[arg(long, default_value = "full,no_d1,no_d2,adv_only,mse_loss")]
        variants: String,
        /// Plain methods added as reference rows, e.g. `mf`.
        #[arg(long)]
        baselines: Option<String>,
        #[arg(long, default_value = "10")]
        seeds: String,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Downstream next-row forecasting WMAPE of imputed matrices.
    Forecast {
        #[command(flatten)]
        io: InputArgs,
        /// `name=path`, repeatable.
        #[arg(long = "imputed", value_parser = parse_named_path)]
        imputed: Vec<(String, PathBuf)>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        holdout: Option<usize>,
    },
    /// Write a synthetic corpus.
    Synth {
        #[arg(long, default_value = "periodic_traffic")]
        kind: SyntheticKind,
        #[arg(long, default_value_t = 200)]
        rows: usize,
        #[arg(long, default_value_t = 50)]
        cols: usize,
        #[arg(long, default_value_t = 3)]
        rank: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        csv: CsvArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CsvArgs {
    /// First CSV record holds column labels.
    #[arg(long)]
    pub header: bool,
    /// First CSV field of each record is a row label.
    #[arg(long)]
    pub row_labels: bool,
}

impl CsvArgs {
    fn options(&self) -> CsvOptions {
        CsvOptions {
            header: self.header,
            row_labels: self.row_labels,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Trainer settings: a JSON file using the config field names, then flags.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Factor rank `h`.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub hint_rate: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub batch_rows: Option<usize>,
    #[arg(long)]
    pub lr_g: Option<f64>,
    #[arg(long)]
    pub lr_d: Option<f64>,
    #[arg(long)]
    pub g_warm_steps: Option<usize>,
    /// `kl` or `mse`.
    #[arg(long, value_parser = parse_loss_mode)]
    pub loss_mode: Option<LossMode>,
    /// Neighbours for the knn baseline.
    #[arg(long, default_value_t = 5)]
    pub knn_k: usize,
    /// Multiplicative-update iterations of the factorization.
    #[arg(long)]
    pub mf_iters: Option<usize>,
}

impl ModelArgs {
    pub fn options(&self) -> Result<ImputeOptions> {
        let flags = ConfigOverrides {
            seed: self.seed,
            h: self.rank,
            alpha: self.alpha,
            hint_rate: self.hint_rate,
            iters: self.iters,
            batch_rows: self.batch_rows,
            lr_g: self.lr_g,
            lr_d: self.lr_d,
            g_warm_steps: self.g_warm_steps,
            loss_mode: self.loss_mode,
            ..Default::default()
        };
        let defaults = PretrainOptions::default();
        Ok(ImputeOptions {
            config: load_config(self.config.as_deref(), flags)?,
            knn_k: self.knn_k,
            pretrain: PretrainOptions {
                max_iters: self.mf_iters.unwrap_or(defaults.max_iters),
                ..defaults
            },
        })
    }
}

fn parse_loss_mode(s: &str) -> std::result::Result<LossMode, String> {
    match s {
        "kl" => Ok(LossMode::Kl),
        "mse" => Ok(LossMode::Mse),
        _ => Err(format!("unknown loss mode `{s}` (expected kl or mse)")),
    }
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected name=path, got `{s}`")),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mask {
            io,
            pattern,
            rate,
            seed,
        } => {
            let sidecar = cmd_mask(&MaskRequest {
                input: io.input,
                csv: io.csv.options(),
                pattern,
                rate,
                seed,
                out_dir: io.out_dir,
            })?;
            println!(
                "{} mask: {} of {} cells missing (rate {:.4})",
                sidecar.pattern,
                sidecar.zeros,
                sidecar.rows * sidecar.cols,
                sidecar.achieved_rate
            );
        }
        Command::Impute {
            io,
            mask,
            truth,
            method,
            model,
        } => {
            let outcome = cmd_impute(&ImputeRequest {
                input: io.input,
                csv: io.csv.options(),
                mask,
                truth,
                method,
                options: model.options()?,
                out_dir: io.out_dir.clone(),
            })?;
            match outcome.metrics {
                Some(m) => println!(
                    "{method}: rmse {:.6} (paper form {:.6})",
                    m.rmse_standard, m.rmse_paper_form
                ),
                None => println!("{method}: wrote {}", io.out_dir.join("imputed.csv").display()),
            }
        }
        Command::Sweep {
            io,
            rates,
            patterns,
            methods,
            seeds,
            jobs,
            plot,
            model,
        } => {
            let plan = SweepPlan {
                rates: parse_rates(&rates)?,
                patterns: parse_list(&patterns)?,
                methods: parse_list(&methods)?,
                seeds: parse_seeds(&seeds)?,
                options: model.options()?,
                jobs,
            };
            let res = cmd_sweep(&SweepRequest {
                input: io.input,
                csv: io.csv.options(),
                plan,
                plot,
                out_dir: io.out_dir,
            })?;
            println!("sweep: {} rows, {} failed", res.rows.len(), res.failed.len());
        }
        Command::Ablate {
            io,
            mask,
            pattern,
            rate,
            variants,
            baselines,
            seeds,
            jobs,
            model,
        } => {
            let report = cmd_ablate(&AblateRequest {
                input: io.input,
                csv: io.csv.options(),
                mask,
                pattern,
                rate,
                variants: parse_list::<Variant>(&variants)?,
                baselines: match baselines {
                    Some(b) => parse_list(&b)?,
                    None => Vec::new(),
                },
                seeds: parse_seeds(&seeds)?,
                options: model.options()?,
                jobs,
                out_dir: io.out_dir,
            })?;
            for s in &report.summary {
                println!(
                    "{:<10} {:<14} rmse {:.6} ± {:.6} ({} seeds)",
                    s.variant, s.components, s.mean_rmse, s.std_rmse, s.seeds
                );
            }
        }
        Command::Forecast {
            io,
            imputed,
            k,
            holdout,
        } => {
            if imputed.is_empty() {
                return Err(CliError::Usage("give at least one --imputed name=path".into()));
            }
            let report = cmd_forecast(&ForecastRequest {
                input: io.input,
                csv: io.csv.options(),
                imputed,
                k,
                holdout,
                out_dir: io.out_dir,
            })?;
            for r in &report.rows {
                println!("{:<12} wmape {:.6}", r.variant, r.wmape);
            }
        }
        Command::Synth {
            kind,
            rows,
            cols,
            rank,
            noise,
            seed,
            csv,
            out_dir,
        } => {
            let path = cmd_synth(&SynthRequest {
                spec: SyntheticSpec::new(kind, rows, cols, rank, noise, seed),
                csv: csv.options(),
                out_dir,
            })?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
