//! Static SVG rendering of reconstruction error curves. The input is the
//! curve CSV emitted by the reconstruction runner; the output is a fixed
//! 800x500 line plot with one polyline per method on a log10 y axis.
//!
//! Rendering is pure string assembly with two-decimal coordinates, so a
//! given input always produces byte-identical output.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::harness::csv::CURVE_HEADER;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 45.0;

/// Errors at or below this render at the floor line instead of diverging.
const LOG_FLOOR: f64 = 1e-18;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn parse_err(line_no: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        what: format!("curve csv line {line_no}"),
        detail: detail.into(),
    }
}

struct CurvePoint {
    t: usize,
    error: f64,
}

fn parse_curves(csv_text: &str) -> Result<BTreeMap<String, Vec<CurvePoint>>> {
    let mut lines = csv_text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CURVE_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(
                1,
                format!("expected header `{CURVE_HEADER}`, got `{header}`"),
            ))
        }
        None => return Err(parse_err(1, "empty input")),
    }
    let mut by_method: BTreeMap<String, Vec<CurvePoint>> = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(
                line_no,
                format!("expected 5 fields, got {}", fields.len()),
            ));
        }
        let _seed: u64 = fields[1]
            .parse()
            .map_err(|e| parse_err(line_no, format!("seed: {e}")))?;
        let t: usize = fields[2]
            .parse()
            .map_err(|e| parse_err(line_no, format!("t: {e}")))?;
        let _sigma: f64 = fields[3]
            .parse()
            .map_err(|e| parse_err(line_no, format!("sigma: {e}")))?;
        let error: f64 = fields[4]
            .parse()
            .map_err(|e| parse_err(line_no, format!("error: {e}")))?;
        if !error.is_finite() || error < 0.0 {
            return Err(parse_err(line_no, format!("error must be >= 0, got {error}")));
        }
        by_method
            .entry(fields[0].to_string())
            .or_default()
            .push(CurvePoint { t, error });
    }
    if by_method.is_empty() {
        return Err(parse_err(2, "no data rows"));
    }
    Ok(by_method)
}

/// Mean error over seeds per (method, step), keyed and ordered by step.
fn average_over_seeds(points: &[CurvePoint]) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, (f64, u64)> = BTreeMap::new();
    for p in points {
        let slot = acc.entry(p.t).or_insert((0.0, 0));
        slot.0 += p.error;
        slot.1 += 1;
    }
    acc.into_iter()
        .map(|(t, (sum, n))| (t, sum / n as f64))
        .collect()
}

fn x_tick_step(span: f64) -> usize {
    for &step in &[1usize, 2, 5, 10, 20, 50, 100] {
        if span / step as f64 <= 8.0 {
            return step;
        }
    }
    100
}

/// Renders the curve CSV to an SVG document. Fails on malformed input or
/// when no data rows are present; callers must not write a file then.
pub fn emit_plot(csv_text: &str) -> Result<String> {
    let by_method = parse_curves(csv_text)?;
    let curves: Vec<(String, Vec<(usize, f64)>)> = by_method
        .iter()
        .map(|(m, pts)| (m.clone(), average_over_seeds(pts)))
        .collect();

    let mut t_min = usize::MAX;
    let mut t_max = 0usize;
    let mut log_min = f64::INFINITY;
    let mut log_max = f64::NEG_INFINITY;
    for (_, pts) in &curves {
        for &(t, err) in pts {
            t_min = t_min.min(t);
            t_max = t_max.max(t);
            let l = err.max(LOG_FLOOR).log10();
            log_min = log_min.min(l);
            log_max = log_max.max(l);
        }
    }
    let (x_lo, x_hi) = if t_min == t_max {
        (t_min as f64 - 1.0, t_max as f64 + 1.0)
    } else {
        (t_min as f64, t_max as f64)
    };
    let mut y_lo = log_min.floor() as i64;
    let mut y_hi = log_max.ceil() as i64;
    if y_lo == y_hi {
        y_lo -= 1;
        y_hi += 1;
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |t: f64| MARGIN_LEFT + (t - x_lo) / (x_hi - x_lo) * plot_w;
    let y_of =
        |l: f64| MARGIN_TOP + (y_hi as f64 - l) / (y_hi as f64 - y_lo as f64) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Horizontal guides and labels at integer decades.
    let stride = (((y_hi - y_lo) as f64) / 8.0).ceil().max(1.0) as i64;
    let mut decade = y_lo;
    while decade <= y_hi {
        let y = y_of(decade as f64);
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w,
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"monospace\" \
             font-size=\"12\">1e{decade}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0,
        ));
        decade += stride;
    }

    // X ticks at multiples of a round step.
    let step = x_tick_step(x_hi - x_lo);
    let mut tick = (x_lo / step as f64).ceil() as i64 * step as i64;
    while (tick as f64) <= x_hi {
        let x = x_of(tick as f64);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#000000\" stroke-width=\"1\"/>\n",
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0,
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" \
             font-size=\"12\">{tick}</text>\n",
            MARGIN_TOP + plot_h + 18.0,
        ));
        tick += step as i64;
    }

    // Axis frame.
    svg.push_str(&format!(
        "<line x1=\"{l:.2}\" y1=\"{t:.2}\" x2=\"{l:.2}\" y2=\"{b:.2}\" stroke=\"#000000\" \
         stroke-width=\"1\"/>\n<line x1=\"{l:.2}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\" \
         stroke=\"#000000\" stroke-width=\"1\"/>\n",
        l = MARGIN_LEFT,
        r = MARGIN_LEFT + plot_w,
        t = MARGIN_TOP,
        b = MARGIN_TOP + plot_h,
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"13\">step</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 8.0,
    ));
    svg.push_str(&format!(
        "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"13\" transform=\"rotate(-90 {x:.2} {y:.2})\">mse</text>\n",
        x = 18.0,
        y = MARGIN_TOP + plot_h / 2.0,
    ));

    // One polyline per method plus its legend entry.
    for (i, (method, pts)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(t, err)| {
                format!(
                    "{:.2},{:.2}",
                    x_of(t as f64),
                    y_of(err.max(LOG_FLOOR).log10())
                )
            })
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" "),
        ));
        let ly = MARGIN_TOP + 12.0 + i as f64 * 18.0;
        svg.push_str(&format!(
            "<line x1=\"{x1:.2}\" y1=\"{ly:.2}\" x2=\"{x2:.2}\" y2=\"{ly:.2}\" \
             stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            x1 = WIDTH - MARGIN_RIGHT + 8.0,
            x2 = WIDTH - MARGIN_RIGHT + 28.0,
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\">{method}</text>\n",
            WIDTH - MARGIN_RIGHT + 34.0,
            ly + 4.0,
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}
