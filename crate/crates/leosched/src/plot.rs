//! Tiny hand-rolled SVG emission. The numeric CSVs are always the source
//! of truth; these plots exist for eyeballing, so the renderer stays
//! deliberately small: fixed canvas, two line styles (solid = selected,
//! dashed = available), no text shaping beyond axis labels.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineStyle {
    Solid,
    Dashed,
}

pub struct Series<'a> {
    pub label: &'a str,
    /// (x, y) points in data coordinates.
    pub points: Vec<(f64, f64)>,
    pub style: LineStyle,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
    }
    if min_x >= max_x {
        max_x = min_x + 1.0;
    }
    if min_y >= max_y {
        max_y = min_y + 1.0;
    }
    (min_x, max_x, min_y, max_y)
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Render line series on one canvas with a simple legend.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (min_x, max_x, min_y, max_y) = bounds(series);
    let sx = |x: f64| MARGIN + (x - min_x) / (max_x - min_x) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - min_y) / (max_y - min_y) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.0}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n\
         <text x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n\
         <text x=\"16\" y=\"{:.0}\" text-anchor=\"middle\" font-size=\"12\" \
         transform=\"rotate(-90 16 {:.0})\">{}</text>\n",
        WIDTH / 2.0,
        escape(title),
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label),
    );
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{m}\" y=\"{bl}\" font-size=\"10\" text-anchor=\"middle\">{min_x:.1}</text>\n\
         <text x=\"{r}\" y=\"{bl}\" font-size=\"10\" text-anchor=\"middle\">{max_x:.1}</text>\n\
         <text x=\"{ml}\" y=\"{b}\" font-size=\"10\" text-anchor=\"end\">{min_y:.2}</text>\n\
         <text x=\"{ml}\" y=\"{t}\" font-size=\"10\" text-anchor=\"end\">{max_y:.2}</text>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
        bl = HEIGHT - MARGIN + 14.0,
        ml = MARGIN - 6.0,
    ));
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = match s.style {
            LineStyle::Solid => "",
            LineStyle::Dashed => " stroke-dasharray=\"6 4\"",
        };
        let path: String = s
            .points
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| {
                format!("{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, sx(x), sy(y))
            })
            .collect();
        svg.push_str(&format!(
            "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>\n"
        ));
        let ly = MARGIN + 16.0 * i as f64 + 8.0;
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{ly}\" x2=\"{x1}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"1.5\"{dash}/>\n\
             <text x=\"{xt}\" y=\"{yt}\" font-size=\"11\">{label}</text>\n",
            x0 = WIDTH - MARGIN - 130.0,
            x1 = WIDTH - MARGIN - 104.0,
            xt = WIDTH - MARGIN - 98.0,
            yt = ly + 4.0,
            label = escape(s.label),
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Empirical CDF of a sample as plot points.
pub fn cdf_points(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, (i + 1) as f64 / n))
        .collect()
}

/// Scatter of (t, value) samples, for RTT strip plots.
pub fn strip_plot(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let series = [Series {
        label: "samples",
        points: points.to_vec(),
        style: LineStyle::Solid,
    }];
    let (min_x, max_x, min_y, max_y) = bounds(&series);
    let sx = |x: f64| MARGIN + (x - min_x) / (max_x - min_x) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - min_y) / (max_y - min_y) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = line_plot(title, x_label, y_label, &[]);
    svg.truncate(svg.len() - "</svg>\n".len());
    for &(x, y) in points {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.2\" fill=\"#1f77b4\"/>\n",
            sx(x),
            sy(y)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
