//! Experiment orchestration on top of `smartt-core`: JSON run configs,
//! connection-matrix schedules, CSV/JSON reports, SVG charts and sweeps.

pub mod config;
pub mod matrix;
pub mod plot;
pub mod report;
pub mod sweep;

pub use config::{load_config, ConfigError, Prepared, RunConfig};
pub use plot::{render, ChartKind, PlotError};
pub use report::{run_experiment, write_report, RunError, RunReport, Summary};
