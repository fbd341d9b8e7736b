//! Dependency-free SVG rendering for the figure kinds the experiments emit:
//! histograms, line plots, grid heat maps, and 2-D scatters. Identical input
//! produces byte-identical SVG.

use crate::distill::results::split_csv_line;
use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

fn plot_area() -> (f64, f64) {
    (
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
    )
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn svg_open(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" ",
            "font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        cx = WIDTH / 2.0,
        title = xml_escape(title),
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axis_label(x: f64, y: f64, text: &str, anchor: &str) -> String {
    format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" \
         font-size=\"11\">{}</text>\n",
        fmt(x),
        fmt(y),
        xml_escape(text)
    )
}

struct Parsed {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_csv(text: &str) -> Result<Parsed> {
    let mut lines = text.lines();
    let header = split_csv_line(
        lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "empty CSV".to_string(),
            })?,
    );
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != header.len() {
            return Err(Error::Parse {
                line: idx + 2,
                message: format!("expected {} fields, found {}", header.len(), fields.len()),
            });
        }
        rows.push(fields);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "CSV has no data rows".to_string(),
        });
    }
    Ok(Parsed { header, rows })
}

fn column(parsed: &Parsed, name: &str) -> Result<usize> {
    parsed
        .header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column {name:?}"),
        })
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid number {field:?}"),
    })
}

/// Bars from a `bin_left,bin_right,count` histogram CSV.
pub fn render_histogram(csv: &str, title: &str) -> Result<String> {
    let parsed = parse_csv(csv)?;
    let (li, ri, ci) = (
        column(&parsed, "bin_left")?,
        column(&parsed, "bin_right")?,
        column(&parsed, "count")?,
    );
    let mut bins = Vec::with_capacity(parsed.rows.len());
    for (i, row) in parsed.rows.iter().enumerate() {
        bins.push((
            parse_f64(&row[li], i + 2)?,
            parse_f64(&row[ri], i + 2)?,
            parse_f64(&row[ci], i + 2)?,
        ));
    }
    let x_min = bins.first().unwrap().0;
    let x_max = bins.last().unwrap().1;
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let y_max = bins.iter().map(|b| b.2).fold(0.0, f64::max).max(1.0);
    let (pw, ph) = plot_area();

    let mut svg = svg_open(title);
    for (left, right, count) in &bins {
        let x0 = MARGIN_LEFT + (left - x_min) / x_span * pw;
        let x1 = MARGIN_LEFT + (right - x_min) / x_span * pw;
        let h = count / y_max * ph;
        let w = if x1 > x0 { x1 - x0 } else { pw };
        svg.push_str(&format!(
            "<rect class=\"bar\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" \
             fill=\"#4878a8\" stroke=\"white\"/>\n",
            fmt(x0),
            fmt(MARGIN_TOP + ph - h),
            fmt(w),
            fmt(h),
        ));
    }
    svg.push_str(&frame_with_ticks(x_min, x_max, 0.0, y_max));
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Polyline from the first two numeric columns of a CSV (e.g. `epoch,loss`).
pub fn render_line(csv: &str, title: &str) -> Result<String> {
    let parsed = parse_csv(csv)?;
    if parsed.header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "line plot needs at least two columns".to_string(),
        });
    }
    let mut points = Vec::with_capacity(parsed.rows.len());
    for (i, row) in parsed.rows.iter().enumerate() {
        points.push((parse_f64(&row[0], i + 2)?, parse_f64(&row[1], i + 2)?));
    }
    let x_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let y_span = if y_max > y_min { y_max - y_min } else { 1.0 };
    let (pw, ph) = plot_area();

    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| {
            format!(
                "{},{}",
                fmt(MARGIN_LEFT + (x - x_min) / x_span * pw),
                fmt(MARGIN_TOP + ph - (y - y_min) / y_span * ph)
            )
        })
        .collect();
    let mut svg = svg_open(title);
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#a85048\" stroke-width=\"2\"/>\n",
        coords.join(" ")
    ));
    svg.push_str(&frame_with_ticks(x_min, x_max, y_min, y_max));
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Heat map over the sweep results: one cell per `(alpha, tau)` pair,
/// colored by `test_acc`. Alphas sort ascending; taus sort ascending with
/// `inf` last.
pub fn render_grid_heat(csv: &str, title: &str) -> Result<String> {
    let parsed = parse_csv(csv)?;
    let (ai, ti, vi) = (
        column(&parsed, "alpha")?,
        column(&parsed, "tau")?,
        column(&parsed, "test_acc")?,
    );
    let mut cells = Vec::with_capacity(parsed.rows.len());
    for (i, row) in parsed.rows.iter().enumerate() {
        let alpha = parse_f64(&row[ai], i + 2)?;
        let tau = row[ti].clone();
        if tau != "inf" {
            parse_f64(&tau, i + 2)?;
        }
        cells.push((alpha, tau, parse_f64(&row[vi], i + 2)?));
    }

    let mut alphas: Vec<f64> = cells.iter().map(|c| c.0).collect();
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    alphas.dedup();
    let mut taus: Vec<String> = Vec::new();
    for c in &cells {
        if !taus.contains(&c.1) {
            taus.push(c.1.clone());
        }
    }
    taus.sort_by(|a, b| match (a.as_str(), b.as_str()) {
        ("inf", "inf") => std::cmp::Ordering::Equal,
        ("inf", _) => std::cmp::Ordering::Greater,
        (_, "inf") => std::cmp::Ordering::Less,
        (x, y) => x
            .parse::<f64>()
            .unwrap()
            .partial_cmp(&y.parse::<f64>().unwrap())
            .unwrap(),
    });

    let v_min = cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let v_max = cells.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let v_span = if v_max > v_min { v_max - v_min } else { 1.0 };
    let (pw, ph) = plot_area();
    let cell_w = pw / alphas.len() as f64;
    let cell_h = ph / taus.len() as f64;

    let mut svg = svg_open(title);
    for (alpha, tau, value) in &cells {
        let col = alphas.iter().position(|a| a == alpha).unwrap();
        let row = taus.iter().position(|t| t == tau).unwrap();
        let t = (value - v_min) / v_span;
        // Cold-to-warm ramp.
        let r = (40.0 + 200.0 * t) as u8;
        let g = (60.0 + 80.0 * t) as u8;
        let b = (200.0 - 160.0 * t) as u8;
        let x = MARGIN_LEFT + col as f64 * cell_w;
        let y = MARGIN_TOP + row as f64 * cell_h;
        svg.push_str(&format!(
            "<rect class=\"cell\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" \
             fill=\"rgb({r},{g},{b})\" stroke=\"white\"/>\n",
            fmt(x),
            fmt(y),
            fmt(cell_w),
            fmt(cell_h),
        ));
        svg.push_str(&axis_label(
            x + cell_w / 2.0,
            y + cell_h / 2.0 + 4.0,
            &fmt(*value),
            "middle",
        ));
    }
    for (col, alpha) in alphas.iter().enumerate() {
        svg.push_str(&axis_label(
            MARGIN_LEFT + (col as f64 + 0.5) * cell_w,
            MARGIN_TOP + ph + 16.0,
            &format!("{alpha}"),
            "middle",
        ));
    }
    for (row, tau) in taus.iter().enumerate() {
        svg.push_str(&axis_label(
            MARGIN_LEFT - 8.0,
            MARGIN_TOP + (row as f64 + 0.5) * cell_h + 4.0,
            tau,
            "end",
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

const SCATTER_PALETTE: [&str; 6] = [
    "#4878a8", "#a85048", "#58a858", "#a88848", "#8858a8", "#48a0a8",
];

/// Points from an `x,y[,label]` CSV, colored by the optional label column.
pub fn render_scatter(csv: &str, title: &str) -> Result<String> {
    let parsed = parse_csv(csv)?;
    let (xi, yi) = (column(&parsed, "x")?, column(&parsed, "y")?);
    let li = parsed.header.iter().position(|h| h == "label");
    let mut points = Vec::with_capacity(parsed.rows.len());
    for (i, row) in parsed.rows.iter().enumerate() {
        let label = match li {
            Some(l) => row[l]
                .parse::<usize>()
                .map_err(|_| Error::Parse {
                    line: i + 2,
                    message: format!("invalid label {:?}", row[l]),
                })?,
            None => 0,
        };
        points.push((
            parse_f64(&row[xi], i + 2)?,
            parse_f64(&row[yi], i + 2)?,
            label,
        ));
    }
    let x_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let y_span = if y_max > y_min { y_max - y_min } else { 1.0 };
    let (pw, ph) = plot_area();

    let mut svg = svg_open(title);
    for (x, y, label) in &points {
        svg.push_str(&format!(
            "<circle class=\"pt\" cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
            fmt(MARGIN_LEFT + (x - x_min) / x_span * pw),
            fmt(MARGIN_TOP + ph - (y - y_min) / y_span * ph),
            SCATTER_PALETTE[label % SCATTER_PALETTE.len()],
        ));
    }
    svg.push_str(&frame_with_ticks(x_min, x_max, y_min, y_max));
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn frame_with_ticks(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> String {
    let (pw, ph) = plot_area();
    let mut out = format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(pw),
        fmt(ph),
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        out.push_str(&axis_label(
            MARGIN_LEFT + f * pw,
            MARGIN_TOP + ph + 16.0,
            &fmt(x_min + f * (x_max - x_min)),
            "middle",
        ));
        out.push_str(&axis_label(
            MARGIN_LEFT - 8.0,
            MARGIN_TOP + ph - f * ph + 4.0,
            &fmt(y_min + f * (y_max - y_min)),
            "end",
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_svg_is_deterministic_and_has_bars() {
        let csv = "bin_left,bin_right,count\n0,1,3\n1,2,5\n2,3,1\n";
        let a = render_histogram(csv, "demo").unwrap();
        let b = render_histogram(csv, "demo").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matches("class=\"bar\"").count(), 3);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn line_svg_has_polyline() {
        let csv = "epoch,loss\n0,2.0\n1,1.0\n2,0.5\n";
        let svg = render_line(csv, "loss").unwrap();
        assert!(svg.contains("<polyline"));
    }

    #[test]
    fn grid_heat_cell_count_matches_grid() {
        let mut csv = String::from(crate::distill::RESULTS_HEADER);
        csv.push('\n');
        for alpha in ["0.5", "1"] {
            for tau in ["1", "inf"] {
                csv.push_str(&format!("{alpha},{tau},kl,,,,1,0.9,0.8,\n"));
            }
        }
        let svg = render_grid_heat(&csv, "grid").unwrap();
        assert_eq!(svg.matches("class=\"cell\"").count(), 4);
    }

    #[test]
    fn scatter_counts_points_and_colors_classes() {
        let csv = "x,y,label\n0,0,0\n1,1,1\n2,0,1\n";
        let svg = render_scatter(csv, "proj").unwrap();
        assert_eq!(svg.matches("class=\"pt\"").count(), 3);
    }

    #[test]
    fn malformed_csv_is_rejected_with_line() {
        let err = render_histogram("bin_left,bin_right,count\n0,1\n", "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = render_line("only\n", "x").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
