use std::path::PathBuf;
use std::time::Instant;

use blockecho::data::CsvOptions;
use blockecho::masking::{mask_to_csv, MaskSidecar, MaskSpec, Pattern};

use super::{load_input, to_json_value};
use crate::error::Result;
use crate::manifest::{OutDir, RunManifest};

#[derive(Debug, Clone)]
pub struct MaskRequest {
    pub input: PathBuf,
    pub csv: CsvOptions,
    pub pattern: Pattern,
    pub rate: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Writes `mask.csv` (1 observed, 0 removed) shaped like the input and a
/// `mask.json` sidecar with the achieved rate and block rectangles.
pub fn cmd_mask(req: &MaskRequest) -> Result<MaskSidecar> {
    let start = Instant::now();
    let ds = load_input(&req.input, &req.csv)?;
    let (m, n) = ds.matrix.shape();
    let spec = MaskSpec::new(req.pattern, req.rate, req.seed)?;
    let generated = spec.generate(m, n)?;
    let sidecar = MaskSidecar::new(&spec, &generated);

    let mut manifest = RunManifest::new("mask", to_json_value(&spec)?, vec![req.seed]);
    manifest.add_input(&req.input)?;
    let mut out = OutDir::create(&req.out_dir, manifest)?;
    out.write_text("mask.csv", &mask_to_csv(&generated.mask))?;
    out.write_json("mask.json", &sidecar)?;
    out.finish(start.elapsed().as_secs_f64())?;
    Ok(sidecar)
}
