//! Adversarial imputer: a generator producing row embeddings, a pointwise
//! completion layer over `u·V`, a row discriminator comparing generated
//! embeddings with pretrained ones, and a cell discriminator with hints.

mod config;
mod losses;
mod model;
pub mod toy;

pub use config::{default_rank, BlockEchoConfig, ConfigOverrides, LossMode};
pub(crate) use losses::{bce_sum_grad, nonsaturating};
pub use losses::{assemble, build_hint, combined_g_loss, d1_loss, d2_loss, mix_rows, LOG_CLAMP};
pub use model::{
    loss_trace_csv, train, EchoModel, EvalCounts, GeneratorBatch, GeneratorGrads, GeneratorLoss, ImputationResult, LossRecord,
};
