//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::{DenseNet, Matrix, NetGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

/// Moment accumulators for one ordered list of parameter blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl OptimState {
    pub fn new(config: AdamConfig, params: &[&Matrix]) -> Self {
        OptimState {
            config,
            step: 0,
            first: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            second: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
        }
    }

    pub fn for_net(config: AdamConfig, net: &DenseNet) -> Self {
        Self::new(config, &net.param_blocks())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One Adam update. Gradients are checked for finiteness before any
    /// parameter is touched, so a failed step leaves everything unchanged.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix], names: &[String]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Usage(format!(
                "optimizer tracks {} blocks, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (b, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[b].shape() {
                return Err(Error::Shape {
                    op: "optim_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            if !g.all_finite() {
                let name = names.get(b).cloned().unwrap_or_else(|| format!("block {b}"));
                return Err(Error::Training(format!(
                    "non-finite gradient in parameter block `{name}` at optimizer step {}",
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (b, p) in params.iter_mut().enumerate() {
            let g = grads[b].as_slice();
            let m = self.first[b].as_mut_slice();
            let v = self.second[b].as_mut_slice();
            for (k, w) in p.as_mut_slice().iter_mut().enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Applies `grads` to every layer of `net`.
    pub fn step_net(&mut self, net: &mut DenseNet, grads: &NetGrads, name: &str) -> Result<()> {
        let names = net.param_names(name);
        let g = grads.blocks();
        let mut p = net.param_blocks_mut();
        self.step(&mut p, &g, &names)
    }
}
