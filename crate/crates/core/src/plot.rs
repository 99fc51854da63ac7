//! Standalone SVG line plots with optional confidence bands. No renderer
//! dependency; output is deterministic for fixed input.

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 540.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const MAX_POINTS: usize = 512;

const PALETTE: [&str; 6] = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#17becf"];

/// One curve: points (x, y) with an optional (lo, hi) band per point.
#[derive(Debug, Clone)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub band: Option<Vec<(f64, f64)>>,
}

impl CurveSeries {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            band: None,
        }
    }

    pub fn with_band(mut self, band: Vec<(f64, f64)>) -> Self {
        assert_eq!(band.len(), self.points.len());
        self.band = Some(band);
        self
    }

    fn downsampled(&self) -> Prepared {
        let n = self.points.len();
        if n <= MAX_POINTS {
            return (self.points.clone(), self.band.clone());
        }
        // Keep every stride-th point plus the last.
        let stride = n.div_ceil(MAX_POINTS);
        let idx: Vec<usize> = (0..n).step_by(stride).chain(std::iter::once(n - 1)).collect();
        let pts = idx.iter().map(|&i| self.points[i]).collect();
        let band = self
            .band
            .as_ref()
            .map(|b| idx.iter().map(|&i| b[i]).collect());
        (pts, band)
    }
}

/// Downsampled points plus their optional band.
type Prepared = (Vec<(f64, f64)>, Option<Vec<(f64, f64)>>);

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

/// Renders curves into a complete SVG document. Curves longer than 512
/// points are downsampled by striding.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, curves: &[CurveSeries]) -> String {
    let prepared: Vec<Prepared> = curves.iter().map(|c| c.downsampled()).collect();

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (pts, band) in &prepared {
        for &(x, y) in pts {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if let Some(b) = band {
            for &(lo, hi) in b {
                y_min = y_min.min(lo);
                y_max = y_max.max(hi);
            }
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let pad = 0.04 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| MARGIN_T + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        xml_escape(title)
    ));

    // Axes with 6 ticks per side.
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T + plot_h),
        fmt(MARGIN_L + plot_w),
        fmt(MARGIN_T + plot_h)
    ));
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(MARGIN_L),
        fmt(MARGIN_T + plot_h)
    ));
    for k in 0..=5 {
        let fx = x_min + (x_max - x_min) * k as f64 / 5.0;
        let fy = y_min + (y_max - y_min) * k as f64 / 5.0;
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n\
             <text x=\"{0}\" y=\"{3}\" text-anchor=\"middle\">{4}</text>\n",
            fmt(px(fx)),
            fmt(MARGIN_T + plot_h),
            fmt(MARGIN_T + plot_h + 5.0),
            fmt(MARGIN_T + plot_h + 20.0),
            tick_label(fx)
        ));
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"black\"/>\n\
             <text x=\"{3}\" y=\"{4}\" text-anchor=\"end\">{5}</text>\n",
            fmt(MARGIN_L - 5.0),
            fmt(MARGIN_L),
            fmt(py(fy)),
            fmt(MARGIN_L - 8.0),
            fmt(py(fy) + 4.0),
            tick_label(fy)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 12.0),
        xml_escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt(MARGIN_T + plot_h / 2.0),
        fmt(MARGIN_T + plot_h / 2.0),
        xml_escape(y_label)
    ));

    for (ci, (pts, band)) in prepared.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        if let Some(b) = band {
            let mut d = String::from("M");
            for (&(x, _), &(_, hi)) in pts.iter().zip(b.iter()) {
                d.push_str(&format!(" {} {}", fmt(px(x)), fmt(py(hi))));
            }
            for (&(x, _), &(lo, _)) in pts.iter().zip(b.iter()).rev() {
                d.push_str(&format!(" L {} {}", fmt(px(x)), fmt(py(lo))));
            }
            d.push_str(" Z");
            out.push_str(&format!(
                "<path d=\"{d}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"
            ));
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(px(x)), fmt(py(y))))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        ));
        let ly = MARGIN_T + 16.0 * ci as f64 + 10.0;
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{3}\" y=\"{4}\">{5}</text>\n",
            fmt(MARGIN_L + plot_w + 10.0),
            fmt(ly),
            fmt(MARGIN_L + plot_w + 34.0),
            fmt(MARGIN_L + plot_w + 40.0),
            fmt(ly + 4.0),
            xml_escape(&curves[ci].label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
