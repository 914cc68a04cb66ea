//! Command-line front end for the `blockecho` toolkit: masking, imputation,
//! missing-rate sweeps, ablations and downstream forecasting, each writing
//! its artifacts and a run manifest into an output directory.

pub mod app;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod parse;
pub mod plot;

pub use error::{CliError, Result};
