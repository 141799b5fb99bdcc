//! Static PNG figures. The sandboxed build has no font stack, so plots carry
//! no text; the CSV next to each image holds the numbers.

use std::path::Path;

use plotters::coord::Shift;
use plotters::prelude::*;

use crate::record::{trend_series, ExperimentKind, Row, RowOutcome, Summary};
use crate::sizes::SizeReport;
use trustzero_core::SigAlgorithm;

const SIZE: (u32, u32) = (960, 540);
const FORWARDED: RGBColor = RGBColor(46, 139, 87);
const DENIED: RGBColor = RGBColor(200, 40, 40);
const OTHER: RGBColor = RGBColor(120, 120, 120);
const TREND: RGBColor = RGBColor(30, 80, 200);

fn err(e: impl std::fmt::Display) -> String {
    format!("plot: {e}")
}

fn upper(values: impl Iterator<Item = f64>) -> f64 {
    let max = values.fold(0.0f64, f64::max);
    if max > 0.0 {
        max * 1.05
    } else {
        1.0
    }
}

fn frame(area: &DrawingArea<BitMapBackend<'_>, Shift>) -> Result<(), String> {
    area.fill(&WHITE).map_err(err)?;
    let (w, h) = area.dim_in_pixel();
    let (w, h) = (w as i32, h as i32);
    area.draw(&PathElement::new(vec![(40, 20), (40, h - 40), (w - 20, h - 40)], BLACK.stroke_width(2)))
        .map_err(err)
}

pub fn plot_experiment(path: &Path, rows: &[Row], summary: &Summary) -> Result<(), String> {
    match summary.experiment {
        ExperimentKind::Tamper => plot_scatter(path, rows, summary),
        ExperimentKind::Latency => plot_boxes(path, summary),
        ExperimentKind::Ramp => plot_ramp(path, rows, summary),
    }
}

/// Latency per request in issue order, coloured by outcome, with the moving
/// average on top.
fn plot_scatter(path: &Path, rows: &[Row], summary: &Summary) -> Result<(), String> {
    let area = BitMapBackend::new(path, SIZE).into_drawing_area();
    frame(&area)?;
    let y_max = upper(rows.iter().map(|r| r.latency_seconds));
    let mut chart = ChartBuilder::on(&area)
        .margin_left(40)
        .margin_bottom(40)
        .margin_top(20)
        .margin_right(20)
        .build_cartesian_2d(0f64..rows.len().max(1) as f64, 0f64..y_max)
        .map_err(err)?;
    chart
        .draw_series(rows.iter().map(|r| {
            let color = match r.outcome {
                RowOutcome::Forwarded => FORWARDED,
                RowOutcome::Denied => DENIED,
                _ => OTHER,
            };
            Circle::new((r.seq as f64, r.latency_seconds), 2, color.filled())
        }))
        .map_err(err)?;
    let offset = summary.params.moving_average_window.saturating_sub(1) as f64;
    chart
        .draw_series(LineSeries::new(
            summary.moving_average.iter().enumerate().map(|(i, &m)| (i as f64 + offset, m)),
            TREND.stroke_width(2),
        ))
        .map_err(err)?;
    area.present().map_err(err)
}

/// One box per phase: whiskers from min to p95, box from q1 to q3, median bar.
fn plot_boxes(path: &Path, summary: &Summary) -> Result<(), String> {
    let area = BitMapBackend::new(path, SIZE).into_drawing_area();
    frame(&area)?;
    let phases: Vec<_> = summary.phases.iter().filter(|(name, _)| name.as_str() != "warmup").collect();
    let y_max = upper(phases.iter().map(|(_, p)| p.latency_seconds.p95));
    let mut chart = ChartBuilder::on(&area)
        .margin_left(40)
        .margin_bottom(40)
        .margin_top(20)
        .margin_right(20)
        .build_cartesian_2d(0f64..phases.len().max(1) as f64, 0f64..y_max)
        .map_err(err)?;
    for (i, (_, p)) in phases.iter().enumerate() {
        let b = &p.latency_seconds;
        let (l, c, r) = (i as f64 + 0.25, i as f64 + 0.5, i as f64 + 0.75);
        let color = if i % 2 == 0 { FORWARDED } else { TREND };
        chart.draw_series(std::iter::once(PathElement::new(vec![(c, b.min), (c, b.p95)], BLACK.stroke_width(1)))).map_err(err)?;
        chart.draw_series(std::iter::once(Rectangle::new([(l, b.q1), (r, b.q3)], color.mix(0.6).filled()))).map_err(err)?;
        chart.draw_series(std::iter::once(PathElement::new(vec![(l, b.median), (r, b.median)], BLACK.stroke_width(3)))).map_err(err)?;
    }
    area.present().map_err(err)
}

/// Instrumented user's latencies, their moving average and the detected
/// phase means.
fn plot_ramp(path: &Path, rows: &[Row], summary: &Summary) -> Result<(), String> {
    let area = BitMapBackend::new(path, SIZE).into_drawing_area();
    frame(&area)?;
    let series = trend_series(ExperimentKind::Ramp, rows);
    let y_max = upper(series.iter().copied());
    let mut chart = ChartBuilder::on(&area)
        .margin_left(40)
        .margin_bottom(40)
        .margin_top(20)
        .margin_right(20)
        .build_cartesian_2d(0f64..series.len().max(1) as f64, 0f64..y_max)
        .map_err(err)?;
    chart
        .draw_series(series.iter().enumerate().map(|(i, &y)| Circle::new((i as f64, y), 1, OTHER.filled())))
        .map_err(err)?;
    let offset = summary.params.moving_average_window.saturating_sub(1) as f64;
    chart
        .draw_series(LineSeries::new(
            summary.moving_average.iter().enumerate().map(|(i, &m)| (i as f64 + offset, m)),
            TREND.stroke_width(2),
        ))
        .map_err(err)?;
    for seg in &summary.trend_phases {
        let (a, b) = (seg.start as f64 + offset, seg.end as f64 + offset);
        chart
            .draw_series(std::iter::once(PathElement::new(vec![(a, seg.mean), (b, seg.mean)], DENIED.stroke_width(3))))
            .map_err(err)?;
    }
    area.present().map_err(err)
}

pub fn plot_sizes(path: &Path, report: &SizeReport) -> Result<(), String> {
    let area = BitMapBackend::new(path, SIZE).into_drawing_area();
    frame(&area)?;
    let x_max = report.rows.iter().map(|r| r.attestations).max().unwrap_or(1).max(1) as f64;
    let y_max = upper(report.rows.iter().map(|r| r.measured_bytes as f64));
    let mut chart = ChartBuilder::on(&area)
        .margin_left(40)
        .margin_bottom(40)
        .margin_top(20)
        .margin_right(20)
        .build_cartesian_2d(0f64..x_max, 0f64..y_max)
        .map_err(err)?;
    for (alg, color) in [(SigAlgorithm::Rsa2048, DENIED), (SigAlgorithm::EcP256, TREND), (SigAlgorithm::Ed25519, FORWARDED)] {
        chart
            .draw_series(LineSeries::new(
                report.rows.iter().filter(|r| r.algorithm == alg).map(|r| (r.attestations as f64, r.measured_bytes as f64)),
                color.stroke_width(2),
            ))
            .map_err(err)?;
    }
    area.present().map_err(err)
}
