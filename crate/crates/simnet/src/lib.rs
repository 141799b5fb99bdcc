//! Multi-node experiment harness. Boots gateway+origin pairs in process,
//! drives simulated users through them and records one row per request.
//!
//! Each experiment produces `rows.csv`, `summary.json` (derived from the
//! rows alone), `checks.json` (live cross-checks) and `plot.png`.

pub mod config;
pub mod experiments;
pub mod network;
pub mod plot;
pub mod record;
pub mod sizes;
pub mod stats;

pub use config::{Behavior, ExperimentConfig, UserGroup};
pub use experiments::{
    latency_on, plan_latency, plan_tamper, ramp_on, ramp_schedule, run_latency_comparison, run_load_ramp,
    run_tamper_experiment, tamper_on, Planned,
};
pub use network::{boot_network, boot_network_with, probe, server_name, HarnessError, Network, Node};
pub use record::{Checks, ExperimentKind, ExperimentResult, Row, RowOutcome, Summary, SummaryParams};
pub use sizes::{run_size_report, SizeReport, SizeRow};

use std::path::Path;

/// Writes `rows.csv`, `summary.json` and `plot.png` for a size report.
pub fn write_size_report(report: &SizeReport, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Output(e.to_string()))?;
    record::write_rows(&dir.join("rows.csv"), &report.rows)?;
    record::write_json(&dir.join("summary.json"), &report.fits)?;
    plot::plot_sizes(&dir.join("plot.png"), report).map_err(HarnessError::Output)
}
