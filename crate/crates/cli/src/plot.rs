//! SVG line plots of result CSVs.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Panel {
    /// Population at cycle boundaries against cycle number.
    #[default]
    Cycle,
    /// Every recorded point against time in μs.
    Time,
}

const NON_SERIES: [&str; 9] =
    ["time_us", "cycle", "segment", "trace_error", "hermiticity_error", "trajectory", "valid", "error", "final"];

/// Curves found in a result CSV: label -> (x, y) points.
pub type Curves = BTreeMap<String, Vec<(f64, f64)>>;

fn malformed(msg: String) -> CliError {
    CliError::Config(format!("malformed CSV: {msg}"))
}

pub fn read_curves(input: &Path, panel: Panel) -> Result<Curves, CliError> {
    let mut reader = csv::Reader::from_path(input).map_err(|e| malformed(e.to_string()))?;
    let header: Vec<String> = reader.headers().map_err(|e| malformed(e.to_string()))?.iter().map(String::from).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let x_name = match panel {
        Panel::Cycle => "cycle",
        Panel::Time => "time_us",
    };
    let x_col = col(x_name).ok_or_else(|| malformed(format!("no {x_name} column")))?;
    let seg_col = col("segment");
    let params: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("param:")).collect();
    let series: Vec<usize> = (0..header.len())
        .filter(|&i| !params.contains(&i) && !NON_SERIES.contains(&header[i].as_str()))
        .collect();
    if series.is_empty() {
        return Err(malformed("no observable columns".into()));
    }
    let number = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| malformed(format!("bad {what} value {s:?}")));
    let mut curves = Curves::new();
    for row in reader.records() {
        let row = row.map_err(|e| malformed(e.to_string()))?;
        if panel == Panel::Cycle {
            if let Some(s) = seg_col.map(|c| &row[c]) {
                if !(s == "start" || s == "cycle" || s.ends_with("@end")) {
                    continue;
                }
            }
        }
        let x = number(&row[x_col], x_name)?;
        let suffix: Vec<String> = params
            .iter()
            .map(|&p| Ok(format!("{}={}", header[p].trim_start_matches("param:"), short(number(&row[p], &header[p])?))))
            .collect::<Result<_, CliError>>()?;
        for &s in &series {
            let label = if suffix.is_empty() { header[s].clone() } else { format!("{} [{}]", header[s], suffix.join(", ")) };
            curves.entry(label).or_default().push((x, number(&row[s], &header[s])?));
        }
    }
    if curves.values().all(|c| c.is_empty()) {
        return Err(malformed("no data rows".into()));
    }
    Ok(curves)
}

fn short(v: f64) -> String {
    let s = format!("{v:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn draw_err<E: std::fmt::Debug>(e: E) -> CliError {
    CliError::Io(format!("plot: {e:?}"))
}

pub fn plot_csv(input: &Path, output: &Path, panel: Panel) -> Result<(), CliError> {
    let curves = read_curves(input, panel)?;
    let points = curves.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y0 >= 0.0 && y1 <= 1.0 {
        (y0, y1) = (0.0, 1.0);
    } else if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let title = input.file_stem().and_then(|s| s.to_str()).unwrap_or("result").to_string();
    let root = SVGBackend::new(output, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(20)
        .x_label_area_size(45)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc(match panel {
            Panel::Cycle => "cycle",
            Panel::Time => "time (μs)",
        })
        .y_desc("population")
        .draw()
        .map_err(draw_err)?;
    for (i, (label, pts)) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(draw_err)?
            .label(label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}
