use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::network::HarnessError;
use crate::stats::{is_non_decreasing, mean, median, moving_average, segment, BoxStats, Segment};

/// Label of the instrumented user in the load ramp.
pub const INSTRUMENTED_USER: &str = "legit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Tamper,
    Latency,
    Ramp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowOutcome {
    /// Passed to the origin, whatever the origin answered.
    Forwarded,
    /// Refused by the gateway.
    Denied,
    /// Gateway answered 502.
    UpstreamError,
    /// No HTTP response reached the client.
    Failed,
}

/// One issued request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub seq: usize,
    pub phase: String,
    pub user: String,
    pub server: String,
    pub attestations: usize,
    /// Byte flipped in the outgoing token, empty when untouched.
    pub tamper: String,
    pub outcome: RowOutcome,
    pub rule: String,
    pub status: u16,
    /// Score the gateway reported, if it reported one.
    pub score: Option<u32>,
    /// Score of the token as sent, computed by the harness.
    pub offline_score: u32,
    pub granted: bool,
    pub verify_ms: Option<f64>,
    pub latency_seconds: f64,
    pub started_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryParams {
    pub moving_average_window: usize,
    pub max_phases: usize,
    /// Minimum relative shift between adjacent trend phases.
    pub min_phase_shift: f64,
    pub failure_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub latency_seconds: BoxStats,
    pub verify_ms_mean: Option<f64>,
    pub forwarded: usize,
    pub denied: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentKind,
    pub params: SummaryParams,
    pub issued: usize,
    pub forwarded: usize,
    pub denied: usize,
    pub upstream_errors: usize,
    pub failed: usize,
    /// Too many requests failed for the run to be representative.
    pub truncated: bool,
    pub phases: BTreeMap<String, PhaseSummary>,
    pub median_forwarded_seconds: Option<f64>,
    pub median_denied_seconds: Option<f64>,
    /// Trailing moving average of the trend series: every request for the
    /// sequential experiments, the instrumented user during the ramp.
    pub moving_average: Vec<f64>,
    /// Phases of the moving average (ramp only).
    pub trend_phases: Vec<Segment>,
    pub trend_non_decreasing: bool,
}

impl Summary {
    pub fn from_rows(experiment: ExperimentKind, rows: &[Row], params: SummaryParams) -> Summary {
        let count = |o: RowOutcome| rows.iter().filter(|r| r.outcome == o).count();
        let failed = count(RowOutcome::Failed);

        let mut groups: BTreeMap<&str, Vec<&Row>> = BTreeMap::new();
        for r in rows {
            groups.entry(r.phase.as_str()).or_default().push(r);
        }
        let phases = groups
            .into_iter()
            .filter_map(|(name, rs)| {
                let lat: Vec<f64> = rs.iter().map(|r| r.latency_seconds).collect();
                let verify: Vec<f64> = rs.iter().filter_map(|r| r.verify_ms).collect();
                Some((
                    name.to_string(),
                    PhaseSummary {
                        latency_seconds: BoxStats::from_samples(&lat)?,
                        verify_ms_mean: mean(&verify),
                        forwarded: rs.iter().filter(|r| r.outcome == RowOutcome::Forwarded).count(),
                        denied: rs.iter().filter(|r| r.outcome == RowOutcome::Denied).count(),
                    },
                ))
            })
            .collect();

        let latencies_of = |o: RowOutcome| rows.iter().filter(|r| r.outcome == o).map(|r| r.latency_seconds).collect::<Vec<_>>();
        let moving = moving_average(&trend_series(experiment, rows), params.moving_average_window);
        let trend_phases = if experiment == ExperimentKind::Ramp {
            segment(&moving, params.max_phases, params.moving_average_window, params.min_phase_shift)
        } else {
            Vec::new()
        };

        Summary {
            experiment,
            issued: rows.len(),
            forwarded: count(RowOutcome::Forwarded),
            denied: count(RowOutcome::Denied),
            upstream_errors: count(RowOutcome::UpstreamError),
            failed,
            truncated: failed as f64 > params.failure_budget * rows.len() as f64,
            phases,
            median_forwarded_seconds: median(&latencies_of(RowOutcome::Forwarded)),
            median_denied_seconds: median(&latencies_of(RowOutcome::Denied)),
            moving_average: moving,
            trend_non_decreasing: is_non_decreasing(&trend_phases),
            trend_phases,
            params,
        }
    }

    /// forwarded + denied = issued.
    pub fn conserved(&self) -> bool {
        self.forwarded + self.denied == self.issued
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseSummary> {
        self.phases.get(name)
    }
}

/// Latencies, in issue order, that the moving average is taken over.
pub fn trend_series(experiment: ExperimentKind, rows: &[Row]) -> Vec<f64> {
    let mut selected: Vec<&Row> = match experiment {
        ExperimentKind::Ramp => rows.iter().filter(|r| r.user == INSTRUMENTED_USER && r.phase == "ramp").collect(),
        _ => rows.iter().collect(),
    };
    selected.sort_by_key(|r| r.seq);
    selected.iter().map(|r| r.latency_seconds).collect()
}

/// Rows whose gateway-reported score differs from the offline recomputation.
pub fn score_mismatches(rows: &[Row]) -> Vec<&Row> {
    rows.iter().filter(|r| r.score.is_some_and(|s| s != r.offline_score)).collect()
}

/// Harness-side checks that need live state and so are not part of the
/// row-derived summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    /// Origin requests observed while tampered tokens were being sent.
    pub origin_contacts_while_tampering: Option<u64>,
    /// Rows where gateway and offline scores disagree.
    pub score_mismatches: usize,
    /// (user, server, table score, offline score of the final wallet) for
    /// honest users whose final wallet disagrees with a gateway's table.
    pub table_mismatches: Vec<(String, String, Option<u32>, u32)>,
    /// Final offline score per user.
    pub final_scores: BTreeMap<String, u32>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<Row>,
    pub summary: Summary,
    pub checks: Checks,
}

impl ExperimentResult {
    /// Writes `rows.csv`, `summary.json`, `checks.json` and `plot.png`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let out = |e: String| HarnessError::Output(e);
        fs::create_dir_all(dir).map_err(|e| out(e.to_string()))?;
        write_rows(&dir.join("rows.csv"), &self.rows)?;
        write_json(&dir.join("summary.json"), &self.summary)?;
        write_json(&dir.join("checks.json"), &self.checks)?;
        crate::plot::plot_experiment(&dir.join("plot.png"), &self.rows, &self.summary).map_err(out)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Output(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let out = |e: String| HarnessError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(|e| out(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| out(e.to_string()))?;
    }
    w.flush().map_err(|e| out(e.to_string()))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let out = |e: String| HarnessError::Output(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| out(e.to_string()))?;
    r.deserialize().map(|row| row.map_err(|e| out(e.to_string()))).collect()
}
