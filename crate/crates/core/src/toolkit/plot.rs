//! SVG line charts of sweep results.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::toolkit::compare::{CompareResult, Component};
use crate::{Error, Result};

const PALETTE: [RGBColor; 5] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
];

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

/// Writes one `<variable>_<component>.svg` chart per latency component into
/// `dir`, one line per policy. Returns the written paths.
pub fn emit_plots(result: &CompareResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let var = result.variable().ok_or(Error::EmptyTable)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for component in Component::ALL {
        let table = result.table(component)?;
        let path = dir.join(format!("{}_{}.svg", var.name(), component.name()));
        let x_min = *table.values.first().unwrap() as f64;
        let x_max = (*table.values.last().unwrap() as f64).max(x_min + 1.0);
        let y_max = table
            .cells
            .iter()
            .flatten()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
            .max(1e-3)
            * 1.1;
        {
            let root = SVGBackend::new(&path, (640, 420)).into_drawing_area();
            root.fill(&WHITE).map_err(plot_err)?;
            let mut chart = ChartBuilder::on(&root)
                .caption(format!("mean {} latency", component.name()), ("sans-serif", 20))
                .margin(12)
                .x_label_area_size(36)
                .y_label_area_size(56)
                .build_cartesian_2d(x_min..x_max, 0.0..y_max)
                .map_err(plot_err)?;
            chart
                .configure_mesh()
                .x_desc(var.name())
                .y_desc("seconds")
                .draw()
                .map_err(plot_err)?;
            for (j, policy) in table.policies.iter().enumerate() {
                let color = PALETTE[j % PALETTE.len()];
                let points: Vec<(f64, f64)> = table
                    .values
                    .iter()
                    .zip(&table.cells)
                    .map(|(&v, row)| (v as f64, row[j]))
                    .filter(|(_, y)| y.is_finite())
                    .collect();
                chart
                    .draw_series(LineSeries::new(points.clone(), color.stroke_width(2)))
                    .map_err(plot_err)?
                    .label(policy.name())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
                chart
                    .draw_series(points.into_iter().map(|p| Circle::new(p, 3, color.filled())))
                    .map_err(plot_err)?;
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(plot_err)?;
            root.present().map_err(plot_err)?;
        }
        written.push(path);
    }
    Ok(written)
}
