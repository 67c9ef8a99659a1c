//! Static SVG figures.

use std::path::Path;

use plotters::prelude::*;
use sonar_tbd::eval::SweepResult;
use sonar_tbd::track::{TrackLogRow, TrackStatus};

use crate::error::{CliError, CliResult};

fn draw_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::io(path, std::io::Error::other(e.to_string()))
}

/// Padded `(min, max)` of finite values, falling back to `[0, 1]`.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(0.5);
    (lo - pad, hi + pad)
}

/// Mean track continuity against mean false tracks, one marker per grid point.
pub fn continuity_vs_false_tracks(path: &Path, result: &SweepResult) -> CliResult<()> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(path, e))?;
    let (x0, x1) = span(
        result
            .points
            .iter()
            .map(|p| p.mean_false_tracks)
            .chain([0.0]),
    );
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!(
                "Track continuity vs false tracks ({} sweep)",
                result.parameter
            ),
            ("sans-serif", 20),
        )
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1, 0f64..1.05)
        .map_err(|e| draw_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("mean false tracks")
        .y_desc("mean track continuity")
        .draw()
        .map_err(|e| draw_err(path, e))?;
    let pts: Vec<(f64, f64)> = result
        .points
        .iter()
        .filter(|p| p.mean_false_tracks.is_finite() && p.mean_continuity.is_finite())
        .map(|p| (p.mean_false_tracks, p.mean_continuity))
        .collect();
    chart
        .draw_series(LineSeries::new(pts.clone(), &BLUE))
        .map_err(|e| draw_err(path, e))?;
    chart
        .draw_series(pts.iter().map(|&p| Circle::new(p, 4, BLUE.filled())))
        .map_err(|e| draw_err(path, e))?;
    root.present().map_err(|e| draw_err(path, e))?;
    Ok(())
}

/// Mean continuity and mean false tracks against the swept value.
pub fn metrics_vs_parameter(path: &Path, result: &SweepResult) -> CliResult<()> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(path, e))?;
    let (x0, x1) = span(result.points.iter().map(|p| p.value));
    let (_, f1) = span(
        result
            .points
            .iter()
            .map(|p| p.mean_false_tracks)
            .chain([0.0]),
    );
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!("Continuity and false tracks vs {}", result.parameter),
            ("sans-serif", 20),
        )
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .right_y_label_area_size(50)
        .build_cartesian_2d(x0..x1, 0f64..1.05)
        .map_err(|e| draw_err(path, e))?
        .set_secondary_coord(x0..x1, 0f64..f1);
    chart
        .configure_mesh()
        .x_desc(result.parameter.name())
        .y_desc("mean track continuity")
        .draw()
        .map_err(|e| draw_err(path, e))?;
    chart
        .configure_secondary_axes()
        .y_desc("mean false tracks")
        .draw()
        .map_err(|e| draw_err(path, e))?;
    let cont: Vec<(f64, f64)> = result
        .points
        .iter()
        .map(|p| (p.value, p.mean_continuity))
        .collect();
    let fals: Vec<(f64, f64)> = result
        .points
        .iter()
        .map(|p| (p.value, p.mean_false_tracks))
        .collect();
    chart
        .draw_series(LineSeries::new(cont, &BLUE))
        .map_err(|e| draw_err(path, e))?
        .label("continuity")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], BLUE));
    chart
        .draw_secondary_series(LineSeries::new(fals, &RED))
        .map_err(|e| draw_err(path, e))?
        .label("false tracks")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], RED));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE)
        .draw()
        .map_err(|e| draw_err(path, e))?;
    root.present().map_err(|e| draw_err(path, e))?;
    Ok(())
}

/// Confirmed track positions over the true target paths.
pub fn track_plan(path: &Path, rows: &[TrackLogRow], truth: &[Vec<(f64, f64)>]) -> CliResult<()> {
    let confirmed: Vec<&TrackLogRow> = rows
        .iter()
        .filter(|r| r.status == TrackStatus::Confirmed)
        .collect();
    let xs = confirmed
        .iter()
        .map(|r| r.x)
        .chain(truth.iter().flatten().map(|p| p.0));
    let ys = confirmed
        .iter()
        .map(|r| r.y)
        .chain(truth.iter().flatten().map(|p| p.1));
    let ((x0, x1), (y0, y1)) = (span(xs), span(ys));
    let root = SVGBackend::new(path, (640, 640)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Confirmed tracks", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| draw_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("x (m)")
        .y_desc("y (m)")
        .draw()
        .map_err(|e| draw_err(path, e))?;
    for path_pts in truth {
        chart
            .draw_series(LineSeries::new(
                path_pts.iter().copied(),
                BLACK.stroke_width(2),
            ))
            .map_err(|e| draw_err(path, e))?;
    }
    chart
        .draw_series(confirmed.iter().map(|r| {
            let color = Palette99::pick(r.track_id as usize);
            Circle::new((r.x, r.y), 2, color.filled())
        }))
        .map_err(|e| draw_err(path, e))?;
    root.present().map_err(|e| draw_err(path, e))?;
    Ok(())
}
