//! Matrix completion for block-wise missing data.
//!
//! The toolkit pairs a masked nonnegative matrix factorization under KL
//! divergence with an adversarial imputer whose generator emits row
//! embeddings, decoded through a learned matrix completion layer and judged
//! by two discriminators: one on embeddings (against the pretrained
//! factorization) and one on individual cells (observed vs imputed).
//!
//! Modules:
//! - [`numkern`]: dense matrices, small MLPs with exact backprop, Adam, RNG.
//! - [`masking`]: scattered / uni-block / multi-block mask generation.
//! - [`mf`]: masked KL factorization with multiplicative updates.
//! - [`gan`]: the adversarial trainer.
//! - [`baselines`]: mean, column mean, kNN and a GAIN-style imputer.
//! - [`metrics`]: normalization, RMSE on missing cells, WMAPE.
//! - [`data`]: CSV ingestion, synthetic corpora, downstream forecasting.
//! - [`pipeline`]: normalize, impute and reassemble with any method.

pub mod baselines;
pub mod data;
pub mod error;
pub mod gan;
pub mod masking;
pub mod metrics;
pub mod mf;
pub mod numkern;
pub mod pipeline;

pub use error::{Error, Result};
pub use numkern::Matrix;
