use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Masked generalized KL divergence.
    #[default]
    Kl,
    /// Masked sum of squared errors.
    Mse,
}

/// Hyperparameters of one adversarial training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEchoConfig {
    /// Embedding rank.
    pub h: usize,
    /// Weight of the factorization term; `1 - alpha` weighs the adversarial terms.
    pub alpha: f64,
    /// Probability that a hint cell reveals the mask (otherwise 0.5).
    pub hint_rate: f64,
    /// Generator widths, `[2n + h, ..., h]`.
    pub g_layers: Vec<usize>,
    /// Row discriminator widths, `[h, ..., 1]`.
    pub d1_layers: Vec<usize>,
    /// Cell discriminator widths, `[2n, ..., n]`.
    pub d2_layers: Vec<usize>,
    /// Pointwise completion-layer widths, `[1, ..., 1]`. Empty means the
    /// completion layer is the plain product `u·V`.
    pub mcl_layers: Vec<usize>,
    pub lr_g: f64,
    pub lr_d: f64,
    pub iters: usize,
    pub batch_rows: usize,
    pub d_steps_per_g: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub use_d1: bool,
    pub use_d2: bool,
    /// Start the trainable column embedding from the pretrained one.
    pub warm_start_v: bool,
    /// Adam steps regressing the generator onto the pretrained row
    /// embeddings before adversarial training; 0 disables.
    pub g_warm_steps: usize,
    /// Generator noise is uniform in `[0, noise_scale]`.
    pub noise_scale: f64,
}

/// `min(16, ceil(min(m, n) / 4))`, at least 1.
pub fn default_rank(m: usize, n: usize) -> usize {
    m.min(n).div_ceil(4).clamp(1, 16)
}

impl BlockEchoConfig {
    /// Defaults for an `m × n` matrix.
    pub fn for_shape(m: usize, n: usize) -> Self {
        let h = default_rank(m, n);
        BlockEchoConfig {
            h,
            alpha: 0.5,
            hint_rate: 0.9,
            g_layers: vec![2 * n + h, n, h],
            d1_layers: vec![h, h, 1],
            d2_layers: vec![2 * n, n, n],
            mcl_layers: vec![1, 16, 1],
            lr_g: 1e-3,
            lr_d: 1e-3,
            iters: 5000,
            batch_rows: m.min(128),
            d_steps_per_g: 1,
            seed: 0,
            loss_mode: LossMode::Kl,
            use_d1: true,
            use_d2: true,
            warm_start_v: true,
            g_warm_steps: 2000,
            noise_scale: 0.01,
        }
    }

    /// Replaces `h` and the layer lists that depend on it.
    pub fn with_rank(mut self, h: usize, n: usize) -> Self {
        self.h = h;
        if let Some(first) = self.g_layers.first_mut() {
            *first = 2 * n + h;
        }
        if let Some(last) = self.g_layers.last_mut() {
            *last = h;
        }
        if let Some(first) = self.d1_layers.first_mut() {
            *first = h;
        }
        self
    }

    /// True when the adversarial terms carry no weight.
    pub fn adversarial_off(&self) -> bool {
        self.alpha >= 1.0 || (!self.use_d1 && !self.use_d2)
    }

    /// True when the factorization term carries no weight.
    pub fn mf_term_off(&self) -> bool {
        self.alpha <= 0.0
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let spec = |msg: String| Err(Error::Spec(msg));
        if self.h == 0 {
            return spec("h must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return spec(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.hint_rate) {
            return spec(format!("hint_rate must lie in [0, 1], got {}", self.hint_rate));
        }
        if self.batch_rows == 0 || self.batch_rows > m {
            return spec(format!("batch_rows must be in 1..={m}, got {}", self.batch_rows));
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0) {
            return spec("learning rates must be positive".into());
        }
        if self.d_steps_per_g == 0 {
            return spec("d_steps_per_g must be at least 1".into());
        }
        if !(self.noise_scale >= 0.0) {
            return spec(format!("noise_scale must be >= 0, got {}", self.noise_scale));
        }
        let check = |name: &str, layers: &[usize], input: usize, output: usize| -> Result<()> {
            if layers.len() < 2 || layers[0] != input || *layers.last().unwrap() != output || layers.contains(&0) {
                return Err(Error::Spec(format!(
                    "{name} layers {layers:?} must run from {input} to {output} with nonzero widths"
                )));
            }
            Ok(())
        };
        check("generator", &self.g_layers, 2 * n + self.h, self.h)?;
        check("d1", &self.d1_layers, self.h, 1)?;
        check("d2", &self.d2_layers, 2 * n, n)?;
        if !self.mcl_layers.is_empty() {
            check("mcl", &self.mcl_layers, 1, 1)?;
        }
        Ok(())
    }
}

/// Partial configuration, as read from a JSON file or command-line flags.
/// Unset fields keep the shape-dependent defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub h: Option<usize>,
    pub alpha: Option<f64>,
    pub hint_rate: Option<f64>,
    pub g_layers: Option<Vec<usize>>,
    pub d1_layers: Option<Vec<usize>>,
    pub d2_layers: Option<Vec<usize>>,
    pub mcl_layers: Option<Vec<usize>>,
    pub lr_g: Option<f64>,
    pub lr_d: Option<f64>,
    pub iters: Option<usize>,
    pub batch_rows: Option<usize>,
    pub d_steps_per_g: Option<usize>,
    pub seed: Option<u64>,
    pub loss_mode: Option<LossMode>,
    pub use_d1: Option<bool>,
    pub use_d2: Option<bool>,
    pub warm_start_v: Option<bool>,
    pub g_warm_steps: Option<usize>,
    pub noise_scale: Option<f64>,
}

impl ConfigOverrides {
    /// Fields set in `other` win.
    pub fn merge(self, other: ConfigOverrides) -> ConfigOverrides {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigOverrides { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            h, alpha, hint_rate, g_layers, d1_layers, d2_layers, mcl_layers, lr_g, lr_d, iters,
            batch_rows, d_steps_per_g, seed, loss_mode, use_d1, use_d2, warm_start_v, g_warm_steps,
            noise_scale
        )
    }

    /// Shape defaults with these overrides applied. Changing `h` also
    /// resizes the generator output and the row discriminator input unless
    /// those layer lists are given explicitly.
    pub fn resolve(&self, m: usize, n: usize) -> BlockEchoConfig {
        let mut cfg = BlockEchoConfig::for_shape(m, n);
        if let Some(h) = self.h {
            cfg = cfg.with_rank(h, n);
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = &self.$f { cfg.$f = v.clone(); })* };
        }
        set!(
            alpha, hint_rate, g_layers, d1_layers, d2_layers, mcl_layers, lr_g, lr_d, iters,
            batch_rows, d_steps_per_g, seed, loss_mode, use_d1, use_d2, warm_start_v, g_warm_steps,
            noise_scale
        );
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        for (m, n) in [(200, 50), (10, 10), (5, 300), (4, 4)] {
            let cfg = BlockEchoConfig::for_shape(m, n);
            cfg.validate(m, n).unwrap();
        }
        let cfg = BlockEchoConfig::for_shape(200, 50);
        assert_eq!(cfg.h, 13);
        assert_eq!(cfg.g_layers, vec![113, 50, 13]);
        assert_eq!(cfg.batch_rows, 128);
    }

    #[test]
    fn invalid_values_rejected() {
        let base = BlockEchoConfig::for_shape(20, 10);
        let mut c = base.clone();
        c.alpha = 1.5;
        assert!(c.validate(20, 10).is_err());
        let mut c = base.clone();
        c.batch_rows = 21;
        assert!(c.validate(20, 10).is_err());
        let mut c = base.clone();
        c.d2_layers = vec![20, 9];
        assert!(c.validate(20, 10).is_err());
        let mut c = base;
        c.mcl_layers = vec![];
        assert!(c.validate(20, 10).is_ok());
    }

    #[test]
    fn overrides_resize_rank_dependent_layers() {
        let o: ConfigOverrides = serde_json::from_str(r#"{"h": 4, "alpha": 0.25}"#).unwrap();
        let cfg = o.resolve(30, 10);
        assert_eq!(cfg.h, 4);
        assert_eq!(cfg.g_layers, vec![24, 10, 4]);
        assert_eq!(cfg.d1_layers, vec![4, 3, 1]);
        assert_eq!(cfg.alpha, 0.25);
        cfg.validate(30, 10).unwrap();
        assert!(serde_json::from_str::<ConfigOverrides>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn merge_prefers_later() {
        let a = ConfigOverrides {
            alpha: Some(0.1),
            iters: Some(5),
            ..Default::default()
        };
        let b = ConfigOverrides {
            alpha: Some(0.9),
            ..Default::default()
        };
        let c = a.merge(b);
        assert_eq!(c.alpha, Some(0.9));
        assert_eq!(c.iters, Some(5));
    }
}
