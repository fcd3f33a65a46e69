//! Configuration loading, experiment orchestration and artifact export for
//! the `nfsim` command.

pub mod app;
pub mod config;
pub mod experiment;
pub mod export;

pub use config::{load_config, parse_config, ConfigError, SimConfig};
pub use experiment::RunError;
pub use export::{export_plot_data, ExportError, Figure, PlotSource};
