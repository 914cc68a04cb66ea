//! One module per subcommand. Each command takes a plain request struct so
//! it can be driven without the argument parser.

mod ablate;
mod forecast;
mod impute;
mod mask;
mod sweep;
mod synth;

pub use ablate::{cmd_ablate, run_ablation, AblatePlan, AblateRequest, AblationReport, AblationRow, MaskSource, SummaryRow as AblationSummary};
pub use forecast::{cmd_forecast, ForecastRequest};
pub use impute::{cmd_impute, ImputeOutcome, ImputeRequest};
pub use mask::{cmd_mask, MaskRequest};
pub use sweep::{
    cmd_sweep, nondecreasing_fraction, run_sweep, summarize, FailedRow, SweepPlan, SweepRequest, SweepResult, SweepRow,
    SweepSummaryRow,
};
pub use synth::{cmd_synth, SynthRequest};

use std::path::Path;

use blockecho::data::{load_csv, CsvOptions, Dataset};
use blockecho::gan::ConfigOverrides;
use blockecho::numkern::Matrix;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Config file values overridden by flag values.
pub fn load_config(path: Option<&Path>, flags: ConfigOverrides) -> Result<ConfigOverrides> {
    let base = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str::<ConfigOverrides>(&text).map_err(|source| CliError::Config {
                path: p.to_path_buf(),
                source,
            })?
        }
        None => ConfigOverrides::default(),
    };
    Ok(base.merge(flags))
}

pub(crate) fn load_input(path: &Path, csv: &CsvOptions) -> Result<Dataset> {
    Ok(load_csv(path, csv)?)
}

/// A dataset that must not have empty cells (ground truth for scoring).
pub(crate) fn load_complete(path: &Path, csv: &CsvOptions) -> Result<Matrix> {
    let ds = load_input(path, csv)?;
    if ds.has_missing() {
        return Err(blockecho::Error::Validation(format!(
            "{} has empty cells; a complete matrix is required here",
            path.display()
        ))
        .into());
    }
    Ok(ds.matrix)
}

pub(crate) fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Usage(format!("csv serialization: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Usage(format!("csv serialization: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

pub(crate) fn to_json_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v).map_err(blockecho::Error::from)?)
}

/// True when every `mask == 1` cell of `out` equals `x` bit for bit.
pub(crate) fn observed_preserved(out: &Matrix, x: &Matrix, mask: &Matrix) -> bool {
    out.as_slice()
        .iter()
        .zip(x.as_slice())
        .zip(mask.as_slice())
        .all(|((a, b), m)| *m != 1.0 || a.to_bits() == b.to_bits())
}

pub(crate) fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        b = b.num_threads(j);
    }
    b.build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}
