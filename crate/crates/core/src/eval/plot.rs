//! Static SVG figures for sweep results: one line per method, F1 on the
//! y-axis, the sweep variable (novel-class count or shot count) on the x.

use std::path::Path;

use plotters::prelude::*;

use super::experiments::SummaryRow;
use crate::error::{Error, Result};

/// One named line.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn draw_error(e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(format!("plot rendering failed: {e}")))
}

/// Render an F1 line chart (y fixed to [0, 1]) as an SVG file.
pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    series: &[Series],
) -> Result<()> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Validation(format!("no data points to plot for '{title}'")));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }

    let xs: Vec<f64> =
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((x_max - x_min) * 0.05).max(0.5);

    let root = SVGBackend::new(path, (860, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 24))
        .margin(14)
        .x_label_area_size(42)
        .y_label_area_size(52)
        .build_cartesian_2d(x_min - pad..x_max + pad, 0.0f64..1.0f64)
        .map_err(draw_error)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc("macro-F1")
        .draw()
        .map_err(draw_error)?;

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = s.points.clone();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        chart
            .draw_series(LineSeries::new(points.iter().cloned(), color.stroke_width(2)))
            .map_err(draw_error)?
            .label(s.name.clone())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
            });
        chart
            .draw_series(points.iter().map(|p| Circle::new(*p, 3, color.filled())))
            .map_err(draw_error)?;
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(draw_error)?;
    root.present().map_err(draw_error)?;
    Ok(())
}

/// Build per-method series from summary rows using `x` to pick the sweep
/// coordinate.
pub fn series_by_method(
    rows: &[SummaryRow],
    x: impl Fn(&SummaryRow) -> Option<f64>,
    filter: impl Fn(&SummaryRow) -> bool,
) -> Vec<Series> {
    use std::collections::BTreeMap;
    let mut by_method: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| filter(r)) {
        if let Some(xv) = x(r) {
            by_method.entry(r.method.clone()).or_default().push((xv, r.f1_macro_mean));
        }
    }
    by_method.into_iter().map(|(name, points)| Series { name, points }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::Regime;

    #[test]
    fn renders_an_svg_line_chart() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.svg");
        let series = vec![
            Series {
                name: "nli-fsl".into(),
                points: vec![(1.0, 0.9), (5.0, 0.95), (10.0, 0.96)],
            },
            Series { name: "protobert".into(), points: vec![(1.0, 0.5), (5.0, 0.7), (10.0, 0.8)] },
        ];
        line_chart(&path, "shots sweep", "shots", &series).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.starts_with("<?xml") || svg.contains("<svg"));
        assert!(svg.contains("polyline") || svg.contains("path"));
    }

    #[test]
    fn empty_series_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.svg");
        let err = line_chart(&path, "nothing", "x", &[]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn series_builder_groups_by_method() {
        let row = |method: &str, shots: usize, f1: f64| SummaryRow {
            dataset: "synthetic".into(),
            method: method.into(),
            regime: Regime::Fsid,
            shots,
            novel_count: None,
            fraction_pct: None,
            n_seeds: 1,
            f1_macro_mean: f1,
            f1_macro_std: 0.0,
        };
        let rows = vec![row("a", 1, 0.5), row("a", 5, 0.7), row("b", 1, 0.4)];
        let series = series_by_method(&rows, |r| Some(r.shots as f64), |_| true);
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].name, "a");
        assert_eq!(series[0].points.len(), 2);
    }
}
