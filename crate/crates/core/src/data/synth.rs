use std::f64::consts::TAU;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numkern::{Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Product of positive random factors.
    LowrankPoisson,
    /// Time x sensor matrix: periodic time factors, rows modulated by a
    /// daily sinusoid.
    PeriodicTraffic,
    /// Date x region matrix: smooth growth curves with sparse multiplicative
    /// bursts lasting a few rows.
    BurstEpidemic,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "lowrank_poisson" | "lowrank" => Ok(SyntheticKind::LowrankPoisson),
            "periodic_traffic" | "traffic" => Ok(SyntheticKind::PeriodicTraffic),
            "burst_epidemic" | "epidemic" => Ok(SyntheticKind::BurstEpidemic),
            other => Err(Error::Spec(format!("unknown synthetic kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    /// Poisson jitter scale: each cell becomes `noise * Poisson(x / noise)`.
    /// Zero disables noise.
    pub noise: f64,
    pub seed: u64,
}

/// Rows per period for the traffic generator (hourly samples of a day).
pub const TRAFFIC_PERIOD: usize = 24;
/// Mean cell value before noise.
const BASE_SCALE: f64 = 10.0;

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, rows: usize, cols: usize, rank: usize, noise: f64, seed: u64) -> Self {
        SyntheticSpec {
            kind,
            rows,
            cols,
            rank,
            noise,
            seed,
        }
    }

    /// 200 x 50 traffic-like corpus, rank 3, light noise.
    pub fn traffic(seed: u64) -> Self {
        Self::new(SyntheticKind::PeriodicTraffic, 200, 50, 3, 0.05, seed)
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Spec(format!("empty shape {}x{}", self.rows, self.cols)));
        }
        if self.rank == 0 || self.rank > self.rows.min(self.cols) {
            return Err(Error::Spec(format!(
                "rank {} infeasible for a {}x{} matrix",
                self.rank, self.rows, self.cols
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Spec(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

fn rescale_to_mean(x: &mut Matrix, mean: f64) {
    let cur = x.mean();
    if cur > 0.0 {
        x.map_inplace(|v| v * mean / cur);
    }
}

fn lowrank(spec: &SyntheticSpec, rng: &mut SeededRng) -> Result<Matrix> {
    let u = rng.uniform_matrix(spec.rows, spec.rank, 0.2, 1.2);
    let v = rng.uniform_matrix(spec.rank, spec.cols, 0.2, 1.2);
    u.matmul(&v)
}

fn traffic(spec: &SyntheticSpec, rng: &mut SeededRng) -> Result<Matrix> {
    let p = TRAFFIC_PERIOD as f64;
    let phases: Vec<f64> = (0..spec.rank).map(|_| rng.uniform_range(0.0, TAU)).collect();
    let harmonics: Vec<f64> = (0..spec.rank).map(|a| (1 + a % 2) as f64).collect();
    let u = Matrix::from_fn(spec.rows, spec.rank, |i, a| {
        1.0 + 0.6 * (TAU * harmonics[a] * i as f64 / p + phases[a]).sin()
    });
    let v = rng.uniform_matrix(spec.rank, spec.cols, 0.2, 1.2);
    let mut x = u.matmul(&v)?;
    for i in 0..spec.rows {
        let daily = 1.0 + 0.5 * (TAU * i as f64 / p).sin();
        x.row_mut(i).iter_mut().for_each(|c| *c *= daily);
    }
    Ok(x)
}

fn epidemic(spec: &SyntheticSpec, rng: &mut SeededRng) -> Result<Matrix> {
    let m = spec.rows as f64;
    let centers: Vec<f64> = (0..spec.rank).map(|_| rng.uniform_range(0.2, 0.8) * m).collect();
    let widths: Vec<f64> = (0..spec.rank).map(|_| rng.uniform_range(0.05, 0.2) * m).collect();
    let u = Matrix::from_fn(spec.rows, spec.rank, |i, a| {
        0.1 + 1.0 / (1.0 + (-(i as f64 - centers[a]) / widths[a]).exp())
    });
    let v = rng.uniform_matrix(spec.rank, spec.cols, 0.2, 1.2);
    let mut x = u.matmul(&v)?;
    // roughly one burst per 60 rows per column
    let burst_start = 1.0 / 60.0;
    for j in 0..spec.cols {
        let mut i = 0;
        while i < spec.rows {
            if rng.bernoulli(burst_start) {
                let len = 3 + rng.below(5);
                let factor = 1.0 + rng.uniform_range(1.0, 3.0);
                for r in i..(i + len).min(spec.rows) {
                    x[(r, j)] *= factor;
                }
                i += len;
            } else {
                i += 1;
            }
        }
    }
    Ok(x)
}

/// Deterministic, nonnegative synthetic corpus.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let root = SeededRng::new(spec.seed);
    let mut rng = root.stream("synthetic");
    let mut x = match spec.kind {
        SyntheticKind::LowrankPoisson => lowrank(spec, &mut rng)?,
        SyntheticKind::PeriodicTraffic => traffic(spec, &mut rng)?,
        SyntheticKind::BurstEpidemic => epidemic(spec, &mut rng)?,
    };
    rescale_to_mean(&mut x, BASE_SCALE);
    if spec.noise > 0.0 {
        let mut noise_rng = root.stream("noise");
        for v in x.as_mut_slice() {
            let lambda = *v / spec.noise;
            if lambda > 0.0 {
                let draw: f64 = Poisson::new(lambda)
                    .map_err(|e| Error::Spec(format!("poisson rate {lambda}: {e}")))?
                    .sample(noise_rng.inner_mut());
                *v = draw * spec.noise;
            }
        }
    }
    let mut ds = Dataset::from_matrix(x);
    let prefix = match spec.kind {
        SyntheticKind::PeriodicTraffic => "sensor",
        SyntheticKind::BurstEpidemic => "region",
        SyntheticKind::LowrankPoisson => "c",
    };
    ds.col_labels = (0..spec.cols).map(|j| format!("{prefix}{j}")).collect();
    ds.row_labels = (0..spec.rows).map(|i| format!("t{i}")).collect();
    Ok(ds)
}
