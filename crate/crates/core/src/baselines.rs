//! Reference imputers. Each returns a full estimate; callers assemble it
//! with the observed cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::{bce_sum_grad, build_hint, d2_loss, nonsaturating};
use crate::masking::MaskedMatrix;
use crate::numkern::{Activation, AdamConfig, DenseNet, Matrix, OptimState, SeededRng};

fn require_observed(xm: &MaskedMatrix) -> Result<()> {
    if xm.observed_count() == 0 {
        return Err(Error::Spec("mask has no observed cells".into()));
    }
    Ok(())
}

/// Every cell set to the global mean of the observed cells.
pub fn mean_impute(xm: &MaskedMatrix) -> Result<Matrix> {
    require_observed(xm)?;
    let mean = xm.values().sum() / xm.observed_count() as f64;
    let (m, n) = xm.shape();
    Ok(Matrix::filled(m, n, mean))
}

/// Column means of the observed cells; columns without observations fall
/// back to the global mean.
pub fn colmean_impute(xm: &MaskedMatrix) -> Result<Matrix> {
    require_observed(xm)?;
    let (m, n) = xm.shape();
    let global = xm.values().sum() / xm.observed_count() as f64;
    let means: Vec<f64> = (0..n)
        .map(|j| {
            let (s, c) = (0..m)
                .filter(|&i| xm.is_observed(i, j))
                .fold((0.0, 0usize), |(s, c), i| (s + xm.values()[(i, j)], c + 1));
            if c > 0 {
                s / c as f64
            } else {
                global
            }
        })
        .collect();
    Ok(Matrix::from_fn(m, n, |_, j| means[j]))
}

/// Row k-nearest-neighbour imputation. Distances are mean squared
/// differences over co-observed columns; a missing cell averages the `k`
/// closest rows observed in that column, falling back to the column mean.
pub fn knn_impute(xm: &MaskedMatrix, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::Spec("knn needs k >= 1".into()));
    }
    let fallback = colmean_impute(xm)?;
    let (m, n) = xm.shape();
    let (x, mask) = (xm.values(), xm.mask());
    let mut out = fallback.clone();
    for i in 0..m {
        if (0..n).all(|j| mask[(i, j)] == 1.0) {
            continue;
        }
        let mut neighbours: Vec<(f64, usize)> = (0..m)
            .filter(|&r| r != i)
            .filter_map(|r| {
                let (mut s, mut c) = (0.0, 0usize);
                for j in 0..n {
                    if mask[(i, j)] == 1.0 && mask[(r, j)] == 1.0 {
                        let d = x[(i, j)] - x[(r, j)];
                        s += d * d;
                        c += 1;
                    }
                }
                (c > 0).then(|| (s / c as f64, r))
            })
            .collect();
        neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for j in (0..n).filter(|&j| mask[(i, j)] == 0.0) {
            let donors: Vec<f64> = neighbours
                .iter()
                .filter(|&&(_, r)| mask[(r, j)] == 1.0)
                .take(k)
                .map(|&(_, r)| x[(r, j)])
                .collect();
            if !donors.is_empty() {
                out[(i, j)] = donors.iter().sum::<f64>() / donors.len() as f64;
            }
        }
    }
    Ok(out)
}

/// Settings of the GAIN-style imputer: a generator producing cell values
/// directly, trained against a hinted cell discriminator plus a
/// reconstruction term on observed cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainConfig {
    pub iters: usize,
    pub batch_rows: usize,
    pub hint_rate: f64,
    /// Weight of the mean squared reconstruction error.
    pub recon_weight: f64,
    pub lr: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl GainConfig {
    pub fn for_shape(m: usize) -> Self {
        GainConfig {
            iters: 5000,
            batch_rows: m.min(128),
            hint_rate: 0.9,
            recon_weight: 100.0,
            lr: 1e-3,
            noise_scale: 0.01,
            seed: 0,
        }
    }
}

/// GAIN-style imputation on normalized data. The generator maps
/// `[x with noise at missing cells | mask]` to `n` sigmoid outputs.
pub fn gain_impute(xm: &MaskedMatrix, cfg: &GainConfig) -> Result<Matrix> {
    require_observed(xm)?;
    let (m, n) = xm.shape();
    if cfg.batch_rows == 0 || cfg.batch_rows > m {
        return Err(Error::Spec(format!("batch_rows must be in 1..={m}, got {}", cfg.batch_rows)));
    }
    let root = SeededRng::new(cfg.seed);
    let acts = [Activation::Relu, Activation::Relu, Activation::Sigmoid];
    let mut g = DenseNet::new(&[2 * n, n, n, n], &acts, &mut root.stream("gain-g"))?;
    let mut d = DenseNet::new(&[2 * n, n, n, n], &acts, &mut root.stream("gain-d"))?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut g_opt = OptimState::for_net(adam, &g);
    let mut d_opt = OptimState::for_net(adam, &d);
    let mut batch_rng = root.stream("batch");
    let mut noise_rng = root.stream("noise");
    let mut hint_rng = root.stream("hint");

    let noisy_input = |x: &Matrix, mask: &Matrix, rng: &mut SeededRng| -> Result<Matrix> {
        let filled = x.zip_map(mask, |v, mk| if mk == 1.0 { v } else { rng.uniform() * cfg.noise_scale })?;
        Matrix::hstack(&[&filled, mask])
    };

    for it in 0..cfg.iters {
        let idx = batch_rng.sample_indices(m, cfg.batch_rows);
        let x = xm.values().select_rows(&idx);
        let mask = xm.mask().select_rows(&idx);
        let input = noisy_input(&x, &mask, &mut noise_rng)?;
        let hint = build_hint(&mask, cfg.hint_rate, &mut hint_rng)?;
        let fake = mask.map(|v| 1.0 - v);
        let b = idx.len() as f64;

        // discriminator ascent
        let gen = g.predict(&input)?;
        let xbar = x.hadamard(&mask)?.add(&gen.hadamard(&fake)?)?;
        let (dout, cache) = d.forward(&Matrix::hstack(&[&xbar, &hint])?)?;
        let value = d2_loss(&dout, &mask)?;
        if !value.is_finite() {
            return Err(Error::Training(format!("gan_only discriminator loss non-finite at iteration {it}")));
        }
        let grad = bce_sum_grad(&dout, &mask).scale(-1.0 / b);
        let (dg, _) = d.backward(&cache, &grad)?;
        d_opt.step_net(&mut d, &dg, "gain-d")?;

        // generator descent
        let (gen, gcache) = g.forward(&input)?;
        let xbar = x.hadamard(&mask)?.add(&gen.hadamard(&fake)?)?;
        let (dout, dcache) = d.forward(&Matrix::hstack(&[&xbar, &hint])?)?;
        let dx = nonsaturating(&dout, &fake).1.scale(1.0 / b);
        let (_, dinput) = d.backward(&dcache, &dx)?;
        let observed = mask.sum().max(1.0);
        let mut ggrad = dinput.col_slice(0, n).hadamard(&fake)?;
        let recon = gen.sub(&x)?.hadamard(&mask)?.scale(2.0 * cfg.recon_weight / observed);
        ggrad.add_assign(&recon)?;
        let (gg, _) = g.backward(&gcache, &ggrad)?;
        g_opt.step_net(&mut g, &gg, "gain-g")?;
    }

    let input = noisy_input(xm.values(), xm.mask(), &mut root.stream("final-noise"))?;
    let out = g.predict(&input)?;
    if !out.all_finite() {
        return Err(Error::Training("gan_only produced non-finite estimates".into()));
    }
    Ok(out)
}
