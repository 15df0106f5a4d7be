//! Static SVG line plots, written by hand so runs need no external renderer.

/// One named curve.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Stacked panels, one per series group; `log_y[i]` plots panel i on a
/// log₁₀ scale (nonpositive values are dropped there).
pub fn stacked_line_plot(title: &str, panels: &[(Vec<Series>, bool)]) -> String {
    let height = MARGIN + panels.len() as f64 * (PANEL_H + MARGIN);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {WIDTH} {height}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-size=\"15\" font-family=\"sans-serif\">{}</text>\n",
        MARGIN,
        escape(title)
    ));

    for (p, (series_list, log_y)) in panels.iter().enumerate() {
        let top = MARGIN + p as f64 * (PANEL_H + MARGIN);
        draw_panel(&mut svg, series_list, *log_y, top);
    }
    svg.push_str("</svg>\n");
    svg
}

fn draw_panel(svg: &mut String, series_list: &[Series], log_y: bool, top: f64) {
    let plottable = |v: f64| !log_y || v > 0.0;
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series_list {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() || !plottable(y) {
                continue;
            }
            let yv = if log_y { y.log10() } else { y };
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(yv);
            y_max = y_max.max(yv);
        }
    }
    if !(x_min < x_max) {
        x_max = x_min + 1.0;
    }
    if !(y_min < y_max) {
        y_max = y_min + 1.0;
        y_min -= 1.0;
    }

    let x_px = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * (WIDTH - 2.0 * MARGIN);
    let y_px = |y: f64| {
        let yv = if log_y { y.log10() } else { y };
        top + PANEL_H - (yv - y_min) / (y_max - y_min) * PANEL_H
    };

    // frame and axis labels
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n",
        MARGIN,
        top,
        WIDTH - 2.0 * MARGIN,
        PANEL_H
    ));
    let scale_note = if log_y { " (log10)" } else { "" };
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\" fill=\"#555\">\
         [{:.4}, {:.4}]{}</text>\n",
        MARGIN,
        top - 6.0,
        y_min,
        y_max,
        scale_note
    ));

    for (i, s) in series_list.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite() && plottable(*y))
            .enumerate()
            .map(|(k, &(x, y))| {
                format!("{}{:.2},{:.2}", if k == 0 { "M" } else { "L" }, x_px(x), y_px(y))
            })
            .collect();
        if path.is_empty() {
            continue;
        }
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" font-family=\"sans-serif\" fill=\"{color}\">{}</text>\n",
            WIDTH - MARGIN - 120.0,
            top + 16.0 + 14.0 * i as f64,
            escape(s.name)
        ));
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_contains_paths_and_labels() {
        let y_series = Series {
            name: "y(t)",
            points: (0..100).map(|k| (k as f64 * 0.01, (-(k as f64) * 0.05).exp())).collect(),
        };
        let n_series = Series {
            name: "N(t)",
            points: (0..100).map(|k| (k as f64 * 0.01, 9.8 + 0.01 * k as f64)).collect(),
        };
        let svg = stacked_line_plot(
            "frequency trace",
            &[(vec![y_series], true), (vec![n_series], false)],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.matches("<path").count() == 2);
        assert!(svg.contains("N(t)"));
        assert!(svg.contains("log10"));
    }

    #[test]
    fn empty_series_are_tolerated() {
        let svg = stacked_line_plot("empty", &[(vec![], false)]);
        assert!(svg.contains("</svg>"));
    }
}
