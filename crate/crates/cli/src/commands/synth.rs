use std::path::PathBuf;
use std::time::Instant;

use blockecho::data::{gen_synthetic, write_csv_string, CsvOptions, SyntheticSpec};

use super::to_json_value;
use crate::error::Result;
use crate::manifest::{OutDir, RunManifest};

#[derive(Debug, Clone)]
pub struct SynthRequest {
    pub spec: SyntheticSpec,
    pub csv: CsvOptions,
    pub out_dir: PathBuf,
}

/// Writes a synthetic corpus to `data.csv`.
pub fn cmd_synth(req: &SynthRequest) -> Result<PathBuf> {
    let start = Instant::now();
    let ds = gen_synthetic(&req.spec)?;
    let manifest = RunManifest::new("synth", to_json_value(&req.spec)?, vec![req.spec.seed]);
    let mut out = OutDir::create(&req.out_dir, manifest)?;
    let path = out.write_text("data.csv", &write_csv_string(&ds, &req.csv))?;
    out.finish(start.elapsed().as_secs_f64())?;
    Ok(path)
}
