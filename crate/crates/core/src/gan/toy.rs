//! One-dimensional check of the cell discriminator: real and generated
//! samples come from two known histograms over the same bins, and a trained
//! discriminator should approach `p_real / (p_real + p_fake)` in every bin.

use serde::{Deserialize, Serialize};

use super::losses::{bce_sum_grad, d2_loss};
use crate::error::{Error, Result};
use crate::numkern::{Activation, AdamConfig, DenseNet, Matrix, OptimState, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyOptions {
    pub steps: usize,
    /// Samples drawn from each histogram per step.
    pub batch: usize,
    /// Initial learning rate, decayed linearly to 1% of itself.
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for ToyOptions {
    fn default() -> Self {
        ToyOptions {
            steps: 3000,
            batch: 256,
            lr: 1e-2,
            hidden: vec![16, 16],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyFit {
    pub centers: Vec<f64>,
    pub fitted: Vec<f64>,
    /// `p_real / (p_real + p_fake)`; NaN for bins empty in both.
    pub optimal: Vec<f64>,
}

impl ToyFit {
    /// Largest deviation over bins where the optimum is defined.
    pub fn max_deviation(&self) -> f64 {
        self.fitted
            .iter()
            .zip(&self.optimal)
            .filter(|(_, o)| o.is_finite())
            .map(|(f, o)| (f - o).abs())
            .fold(0.0, f64::max)
    }
}

fn cumulative(p: &[f64]) -> Result<Vec<f64>> {
    if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::Spec("histogram weights must be finite and nonnegative".into()));
    }
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Err(Error::Spec("histogram has no mass".into()));
    }
    let mut acc = 0.0;
    Ok(p.iter()
        .map(|v| {
            acc += v / total;
            acc
        })
        .collect())
}

fn draw(cdf: &[f64], rng: &mut SeededRng) -> usize {
    let u = rng.uniform();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Trains a cell discriminator (`[x̄ | hint] → D`) on samples from the two
/// histograms and reads it out at each bin center. Hints are all 0.5, so the
/// discriminator only sees values.
pub fn fit_cell_discriminator(p_real: &[f64], p_fake: &[f64], opts: &ToyOptions) -> Result<ToyFit> {
    if p_real.len() != p_fake.len() || p_real.is_empty() {
        return Err(Error::Spec("histograms must be nonempty and share their bins".into()));
    }
    if opts.batch == 0 {
        return Err(Error::Spec("batch must be at least 1".into()));
    }
    let bins = p_real.len();
    let centers: Vec<f64> = (0..bins).map(|k| (k as f64 + 0.5) / bins as f64).collect();
    let (real_cdf, fake_cdf) = (cumulative(p_real)?, cumulative(p_fake)?);
    let (sr, sf) = (p_real.iter().sum::<f64>(), p_fake.iter().sum::<f64>());

    let mut sizes = vec![2];
    sizes.extend(&opts.hidden);
    sizes.push(1);
    let mut acts = vec![Activation::Relu; opts.hidden.len()];
    acts.push(Activation::Sigmoid);
    let root = SeededRng::new(opts.seed);
    let mut net = DenseNet::new(&sizes, &acts, &mut root.stream("toy-d2"))?;
    let mut opt = OptimState::for_net(AdamConfig::with_lr(opts.lr), &net);
    let mut rng = root.stream("toy-samples");

    let b = opts.batch;
    let labels = Matrix::from_fn(2 * b, 1, |i, _| if i < b { 1.0 } else { 0.0 });
    for step in 0..opts.steps {
        opt.config.lr = opts.lr * (1.0 - 0.99 * step as f64 / opts.steps as f64);
        let input = Matrix::from_fn(2 * b, 2, |i, j| match j {
            0 if i < b => centers[draw(&real_cdf, &mut rng)],
            0 => centers[draw(&fake_cdf, &mut rng)],
            _ => 0.5,
        });
        let (d, cache) = net.forward(&input)?;
        let value = d2_loss(&d, &labels)?;
        if !value.is_finite() {
            return Err(Error::Training(format!("toy discriminator diverged at step {step}")));
        }
        let grad = bce_sum_grad(&d, &labels).scale(-1.0 / (2 * b) as f64);
        let (g, _) = net.backward(&cache, &grad)?;
        opt.step_net(&mut net, &g, "toy-d2")?;
    }

    let probe = Matrix::from_fn(bins, 2, |i, j| if j == 0 { centers[i] } else { 0.5 });
    let fitted = net.predict(&probe)?.into_vec();
    let optimal = p_real
        .iter()
        .zip(p_fake)
        .map(|(&r, &f)| {
            let (r, f) = (r / sr, f / sf);
            if r + f > 0.0 {
                r / (r + f)
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(ToyFit {
        centers,
        fitted,
        optimal,
    })
}
