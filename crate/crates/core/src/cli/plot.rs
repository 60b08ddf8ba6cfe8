//! Static SVG rendering of stabilization curves and Granville tables.

use std::path::Path;

use plotters::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub enum PlotInput {
    Curve(Vec<(f64, f64)>),
    /// `(height, gap)` per row
    Granville(Vec<(f64, f64)>),
}

impl PlotInput {
    pub fn is_empty(&self) -> bool {
        match self {
            PlotInput::Curve(v) | PlotInput::Granville(v) => v.is_empty(),
        }
    }
}

pub fn read_table(path: &Path) -> Result<PlotInput, String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let parse = |record: &csv::StringRecord, i: usize| -> Result<f64, String> {
        record
            .get(i)
            .ok_or_else(|| "short row".to_string())?
            .parse::<f64>()
            .map_err(|e| e.to_string())
    };
    let (x, y, curve) = match (
        column("bound"),
        column("cumulative_nontrivial_hits"),
        column("height"),
        column("gap"),
    ) {
        (Some(x), Some(y), _, _) => (x, y, true),
        (_, _, Some(x), Some(y)) => (x, y, false),
        _ => return Err(format!("{}: unrecognized columns", path.display())),
    };
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        points.push((parse(&record, x)?, parse(&record, y)?));
    }
    Ok(if curve {
        PlotInput::Curve(points)
    } else {
        PlotInput::Granville(points)
    })
}

fn range(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-9 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Running maximum of the gap with rows sorted by height.
pub fn gap_envelope(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = f64::NEG_INFINITY;
    sorted
        .into_iter()
        .map(|(x, y)| {
            best = best.max(y);
            (x, best)
        })
        .collect()
}

type DrawResult = Result<(), Box<dyn std::error::Error>>;

pub fn render(input: &PlotInput, output: &Path) -> DrawResult {
    let root = SVGBackend::new(output, (900, 560)).into_drawing_area();
    root.fill(&WHITE)?;
    match input {
        PlotInput::Curve(points) => {
            let (x0, x1) = range(points.iter().map(|p| p.0));
            let (_, y1) = range(points.iter().map(|p| p.1));
            let mut chart = ChartBuilder::on(&root)
                .caption("Cumulative nontrivial hits", ("sans-serif", 22))
                .margin(15)
                .x_label_area_size(40)
                .y_label_area_size(50)
                .build_cartesian_2d(x0..x1, 0f64..y1.max(1.0))?;
            chart
                .configure_mesh()
                .x_desc("bound B")
                .y_desc("hits")
                .draw()?;
            let mut steps = Vec::with_capacity(points.len() * 2);
            for (i, &(x, y)) in points.iter().enumerate() {
                if i > 0 {
                    steps.push((x, points[i - 1].1));
                }
                steps.push((x, y));
            }
            chart.draw_series(LineSeries::new(steps, &BLUE))?;
            chart.draw_series(points.iter().map(|&p| Circle::new(p, 3, BLUE.filled())))?;
        }
        PlotInput::Granville(points) => {
            let (x0, x1) = range(points.iter().map(|p| p.0));
            let (y0, y1) = range(points.iter().map(|p| p.1));
            let mut chart = ChartBuilder::on(&root)
                .caption("Granville gap", ("sans-serif", 22))
                .margin(15)
                .x_label_area_size(40)
                .y_label_area_size(50)
                .build_cartesian_2d(x0..x1, y0..y1)?;
            chart
                .configure_mesh()
                .x_desc("h(alpha)")
                .y_desc("lhs - radical")
                .draw()?;
            chart.draw_series(points.iter().map(|&p| Circle::new(p, 2, BLACK.mix(0.4).filled())))?;
            chart.draw_series(LineSeries::new(gap_envelope(points), &RED))?;
        }
    }
    root.present()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_is_running_max_by_height() {
        let env = gap_envelope(&[(2.0, 1.0), (0.0, 3.0), (1.0, 0.5), (3.0, 4.0)]);
        assert_eq!(env, vec![(0.0, 3.0), (1.0, 3.0), (2.0, 3.0), (3.0, 4.0)]);
    }
}
