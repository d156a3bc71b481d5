//! Predicted vs. measured force overlays: CSV traces and SVG figures.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::pipeline::{METRICS_CSV, TRACES};

pub const TRACE_COLUMNS: [&str; 3] = ["time_s", "measured_pct_mvf", "predicted_pct_mvf"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time_s: f64,
    pub measured_pct_mvf: f64,
    pub predicted_pct_mvf: f64,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::format(path, e.to_string())
}

/// Sample `i` of a stitched trace lies at feature time `offset + i`, where
/// `offset` is the target shift.
pub fn write_trace_csv(path: &Path, measured: &[f64], predicted: &[f64], rate_hz: f64, offset: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for (i, (&m, &p)) in measured.iter().zip(predicted).enumerate() {
        let row = TraceRow { time_s: (offset + i) as f64 / rate_hz, measured_pct_mvf: m, predicted_pct_mvf: p };
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?;
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(CliError::format(path, format!("expected columns {TRACE_COLUMNS:?}, found {header:?}")));
    }
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct MetricsRow {
    trial: String,
    rmse_pct_mvf: f64,
    pearson_r: f64,
}

fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

fn draw_err(path: &Path) -> impl Fn(String) -> CliError + '_ {
    move |e| CliError::format(path, format!("cannot render plot: {e}"))
}

/// Renders both traces on one %MVF axis with the metrics as the caption.
pub fn render_svg(path: &Path, title: &str, caption: &str, rows: &[TraceRow]) -> Result<()> {
    let err = draw_err(path);
    let (t0, t1) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if b.time_s > a.time_s => (a.time_s, b.time_s),
        _ => return Err(CliError::format(path, "trace needs at least two samples")),
    };
    let (lo, hi) = rows
        .iter()
        .flat_map(|r| [r.measured_pct_mvf, r.predicted_pct_mvf])
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((hi - lo) * 0.05).max(0.5);

    let root = SVGBackend::new(path, (960, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let (plot_area, footer) = root.split_vertically(380);
    let mut chart = ChartBuilder::on(&plot_area)
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(36)
        .y_label_area_size(52)
        .build_cartesian_2d(t0..t1, (lo - pad)..(hi + pad))
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("time (s)")
        .y_desc("force (%MVF)")
        .draw()
        .map_err(|e| err(e.to_string()))?;
    let series = [
        ("measured", BLACK, rows.iter().map(|r| (r.time_s, r.measured_pct_mvf)).collect::<Vec<_>>()),
        ("predicted", RED, rows.iter().map(|r| (r.time_s, r.predicted_pct_mvf)).collect()),
    ];
    for (label, color, points) in series {
        chart
            .draw_series(LineSeries::new(points, color.stroke_width(1)))
            .map_err(|e| err(e.to_string()))?
            .label(label)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    footer
        .draw_text(caption, &("sans-serif", 14).into_text_style(&footer), (60, 10))
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))
}

/// One SVG and one CSV per trial found under `eval_dir/traces`.
pub fn plot(eval_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let metrics = read_metrics(&eval_dir.join(METRICS_CSV))?;
    crate::pipeline::create_dir(out)?;
    let mut written = Vec::new();
    for m in metrics.iter().filter(|m| m.trial != "mean") {
        let src = eval_dir.join(TRACES).join(format!("{}.csv", m.trial));
        let rows = read_trace_csv(&src)?;
        let csv_out = out.join(format!("{}.csv", m.trial));
        if src != csv_out {
            std::fs::copy(&src, &csv_out).map_err(|e| CliError::io(&csv_out, e))?;
        }
        let svg = out.join(format!("{}.svg", m.trial));
        let caption = format!("{}: RMSE {:.2} %MVF, r = {:.3}", m.trial, m.rmse_pct_mvf, m.pearson_r);
        render_svg(&svg, &format!("Predicted vs. measured force, {}", m.trial), &caption, &rows)?;
        written.push(svg);
        written.push(csv_out);
    }
    Ok(written)
}
