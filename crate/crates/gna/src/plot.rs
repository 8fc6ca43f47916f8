//! Minimal CSV-to-SVG charts with no imaging dependencies.
//!
//! The input is a comma-separated table: optional `#` comment lines, one
//! header row naming the columns, then data rows. The first column is the
//! x axis; every remaining column becomes one series. A numeric first
//! column yields a line chart, a textual one a grouped bar chart.

use std::path::Path;

use crate::{Error, Result};

/// X-axis values: numeric positions or categorical labels.
#[derive(Clone, Debug, PartialEq)]
pub enum XValues {
    Numeric(Vec<f64>),
    Labels(Vec<String>),
}

/// A parsed plotting table.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub x_label: String,
    pub series_labels: Vec<String>,
    pub x: XValues,
    /// One vector per series, each aligned with `x`.
    pub series: Vec<Vec<f64>>,
}

impl PlotData {
    pub fn rows(&self) -> usize {
        match &self.x {
            XValues::Numeric(v) => v.len(),
            XValues::Labels(v) => v.len(),
        }
    }
}

/// Parse CSV text into a table, skipping `#` comments and blank lines.
pub fn parse_csv_table(text: &str) -> Result<PlotData> {
    let mut header: Option<Vec<String>> = None;
    let mut labels = Vec::new();
    let mut numeric_x: Option<Vec<f64>> = Some(Vec::new());
    let mut series: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        match &header {
            None => {
                if cells.len() < 2 {
                    return Err(Error::validation(
                        "plot input needs an x column and at least one series column",
                    ));
                }
                series = vec![Vec::new(); cells.len() - 1];
                header = Some(cells.iter().map(|c| c.to_string()).collect());
            }
            Some(head) => {
                if cells.len() != head.len() {
                    return Err(Error::format(
                        line,
                        format!("expected {} cells, found {}", head.len(), cells.len()),
                    ));
                }
                if let Some(xs) = numeric_x.as_mut() {
                    match cells[0].parse::<f64>() {
                        Ok(v) if v.is_finite() => xs.push(v),
                        _ => numeric_x = None,
                    }
                }
                labels.push(cells[0].to_string());
                for (slot, cell) in series.iter_mut().zip(&cells[1..]) {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::format(line, format!("cannot parse series value {cell:?}"))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::format(line, "non-finite series value"));
                    }
                    slot.push(v);
                }
            }
        }
    }
    let header = header.ok_or_else(|| Error::validation("plot input has no header row"))?;
    if labels.is_empty() {
        return Err(Error::validation("plot input has no data rows"));
    }
    let x = match numeric_x {
        Some(xs) if xs.len() == labels.len() => XValues::Numeric(xs),
        _ => XValues::Labels(labels),
    };
    Ok(PlotData {
        x_label: header[0].clone(),
        series_labels: header[1..].to_vec(),
        x,
        series,
    })
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 56.0;
const LEGEND_WIDTH: f64 = 150.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn fmt(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 0.01 && a < 10_000.0 {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() { "0".to_string() } else { s }
    } else {
        format!("{v:.2e}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        if lo == hi {
            // Flat data still needs a visible span.
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            return Self { lo: lo - pad, hi: hi + pad };
        }
        let pad = (hi - lo) * 0.05;
        Self { lo: lo - pad, hi: hi + pad }
    }

    fn fraction(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

fn plot_area(n_series: usize) -> (f64, f64, f64, f64) {
    let right = if n_series > 1 { MARGIN_RIGHT + LEGEND_WIDTH } else { MARGIN_RIGHT };
    (MARGIN_LEFT, MARGIN_TOP, WIDTH - right, HEIGHT - MARGIN_BOTTOM)
}

fn axes_svg(out: &mut String, data: &PlotData, y: &Range) {
    let (x0, y0, x1, y1) = plot_area(data.series.len());
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y1}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"#333\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"#333\"/>\n"
    ));
    for tick in y.ticks(5) {
        let py = y1 - y.fraction(tick) * (y1 - y0);
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{x0}\" y2=\"{py:.2}\" stroke=\"#333\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"12\">{}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            fmt(tick)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        escape(&data.x_label)
    ));
}

fn legend_svg(out: &mut String, data: &PlotData) {
    if data.series.len() < 2 {
        return;
    }
    let (_, y0, x1, _) = plot_area(data.series.len());
    for (i, label) in data.series_labels.iter().enumerate() {
        let ly = y0 + 18.0 * i as f64 + 8.0;
        let color = PALETTE[i % PALETTE.len()];
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" \
             stroke=\"{color}\" stroke-width=\"3\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{}</text>\n",
            x1 + 10.0,
            x1 + 34.0,
            x1 + 40.0,
            ly + 4.0,
            escape(label)
        ));
    }
}

fn line_chart(out: &mut String, data: &PlotData, xs: &[f64], y: &Range) {
    let (x0, y0, x1, y1) = plot_area(data.series.len());
    let x_range = Range::of(xs.iter().copied());
    for tick in x_range.ticks(5) {
        let px = x0 + x_range.fraction(tick) * (x1 - x0);
        out.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{y1}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>\n\
             <text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            y1 + 5.0,
            y1 + 20.0,
            fmt(tick)
        ));
    }
    for (i, values) in data.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = xs
            .iter()
            .zip(values)
            .map(|(&x, &v)| {
                let px = x0 + x_range.fraction(x) * (x1 - x0);
                let py = y1 - y.fraction(v) * (y1 - y0);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
    }
}

fn bar_chart(out: &mut String, data: &PlotData, labels: &[String], y: &Range) {
    let (x0, y0, x1, y1) = plot_area(data.series.len());
    let n = labels.len() as f64;
    let group = (x1 - x0) / n;
    let bar = group * 0.8 / data.series.len() as f64;
    let zero = y1 - y.fraction(0.0f64.clamp(y.lo, y.hi)) * (y1 - y0);
    for (li, label) in labels.iter().enumerate() {
        let gx = x0 + group * li as f64;
        for (si, values) in data.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let py = y1 - y.fraction(values[li]) * (y1 - y0);
            let (top, height) = if py < zero { (py, zero - py) } else { (zero, py - zero) };
            out.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{top:.2}\" width=\"{bar:.2}\" height=\"{:.2}\" \
                 fill=\"{color}\"/>\n",
                gx + group * 0.1 + bar * si as f64,
                height.max(0.5)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            gx + group / 2.0,
            y1 + 20.0,
            escape(label)
        ));
    }
}

/// Render a parsed table as a self-contained SVG document.
pub fn render_svg(data: &PlotData) -> String {
    let y = Range::of(data.series.iter().flatten().copied());
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    );
    axes_svg(&mut out, data, &y);
    match &data.x {
        XValues::Numeric(xs) => line_chart(&mut out, data, xs, &y),
        XValues::Labels(labels) => bar_chart(&mut out, data, labels, &y),
    }
    legend_svg(&mut out, data);
    out.push_str("</svg>\n");
    out
}

/// Parse `csv_path` and write the chart to `svg_path`.
pub fn plot_csv_to_svg(csv_path: &Path, svg_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(csv_path)?;
    let data = parse_csv_table(&text)?;
    std::fs::write(svg_path, render_svg(&data))?;
    Ok(())
}
