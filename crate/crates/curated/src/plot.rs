//! Static SVG rendering of learning curves.

use std::path::Path;

use plotters::prelude::*;

use crate::formats::{CurveLine, OVERALL};

#[derive(Debug, thiserror::Error)]
#[error("plot {path}: {message}")]
pub struct PlotError {
    pub path: String,
    pub message: String,
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// F1 against minutes, one line per series, the aggregate drawn in black.
pub fn render_curve_svg(lines: &[CurveLine], path: &Path, title: &str) -> Result<(), PlotError> {
    let err = |e: &dyn std::fmt::Display| PlotError {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut series: Vec<&str> = lines.iter().map(|l| l.series.as_str()).collect();
    series.sort();
    series.dedup();
    let max_minutes = lines.iter().map(|l| l.minutes).fold(0.0_f64, f64::max).max(1.0);

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..max_minutes * 1.05, 0.0..1.0)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc("effective minutes")
        .y_desc("F1")
        .draw()
        .map_err(|e| err(&e))?;
    let mut colors = PALETTE.iter().cycle();
    for name in series {
        let color = if name == OVERALL {
            BLACK
        } else {
            *colors.next().expect("cycle")
        };
        let points: Vec<(f64, f64)> = lines
            .iter()
            .filter(|l| l.series == name)
            .map(|l| (l.minutes, l.f1))
            .collect();
        let width = if name == OVERALL { 3 } else { 1 };
        chart
            .draw_series(LineSeries::new(points, color.stroke_width(width)))
            .map_err(|e| err(&e))?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(width)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}
