//! Datasets: CSV ingestion, synthetic stand-ins for traffic / epidemic /
//! rating matrices, and the downstream next-row forecasting task.

mod csv_io;
mod forecast;
mod synth;

pub use csv_io::{load_csv, parse_csv, save_csv, write_csv_string, CsvOptions, Dataset};
pub use forecast::{eval_downstream, forecast_next, DownstreamReport, DownstreamRow, ForecastConfig};
pub use synth::{gen_synthetic, SyntheticKind, SyntheticSpec};
