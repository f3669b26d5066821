use std::fmt::Write;

/// Fixed colours for cell indices (taken modulo the palette length).
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
/// Colour for points without a cell.
pub const OUTSIDE_COLOR: &str = "#7f7f7f";

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Axis-aligned data window `[x_min, x_max] × [y_min, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Bounds {
    pub fn square(half_width: f64) -> Self {
        Bounds {
            x: (-half_width, half_width),
            y: (-half_width, half_width),
        }
    }

    /// Smallest window around the finite points, padded by 5%.
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> Self {
        let mut b = Bounds {
            x: (f64::INFINITY, f64::NEG_INFINITY),
            y: (f64::INFINITY, f64::NEG_INFINITY),
        };
        for p in points.into_iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
            b.x = (b.x.0.min(p[0]), b.x.1.max(p[0]));
            b.y = (b.y.0.min(p[1]), b.y.1.max(p[1]));
        }
        if !b.x.0.is_finite() {
            return Bounds::square(1.0);
        }
        let pad = |(lo, hi): (f64, f64)| {
            let w = (hi - lo).max(1e-9) * 0.05;
            (lo - w, hi + w)
        };
        Bounds {
            x: pad(b.x),
            y: pad(b.y),
        }
    }

    fn to_px(self, p: [f64; 2]) -> (f64, f64) {
        let inner = SIZE - 2.0 * MARGIN;
        (
            MARGIN + (p[0] - self.x.0) / (self.x.1 - self.x.0) * inner,
            SIZE - MARGIN - (p[1] - self.y.0) / (self.y.1 - self.y.0) * inner,
        )
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}"><rect width="100%" height="100%" fill="white"/><text x="{}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text><rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        SIZE / 2.0,
        escape(title),
        SIZE - 2.0 * MARGIN,
        SIZE - 2.0 * MARGIN
    );
}

/// Scatter plot with one colour per cell index; `None` is drawn grey. Points outside
/// `bounds` or non-finite are omitted.
pub fn scatter_svg(points: &[[f64; 2]], cells: &[Option<usize>], bounds: Bounds, title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    for (i, p) in points.iter().enumerate() {
        let inside = p[0] >= bounds.x.0 && p[0] <= bounds.x.1 && p[1] >= bounds.y.0 && p[1] <= bounds.y.1;
        if !inside {
            continue;
        }
        let color = match cells.get(i).copied().flatten() {
            Some(c) => PALETTE[c % PALETTE.len()],
            None => OUTSIDE_COLOR,
        };
        let (x, y) = bounds.to_px(*p);
        let _ = write!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.2" fill="{color}" fill-opacity="0.6"/>"#);
    }
    out.push_str("</svg>\n");
    out
}

/// Line chart of named series `(x, y)`, coloured in palette order, with a legend.
pub fn line_svg(series: &[(&str, Vec<(f64, f64)>)], title: &str) -> String {
    let all: Vec<[f64; 2]> = series
        .iter()
        .flat_map(|(_, s)| s.iter().map(|&(x, y)| [x, y]))
        .collect();
    let bounds = Bounds::fit(&all);
    let mut out = String::new();
    header(&mut out, title);
    for (k, (name, s)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = s
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| {
                let (px, py) = bounds.to_px([x, y]);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = write!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            path.join(" "),
            MARGIN + 8.0,
            MARGIN + 16.0 * (k + 1) as f64,
            escape(name)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">x: {:.3} .. {:.3}   y: {:.3} .. {:.3}</text>"#,
        SIZE - 12.0,
        bounds.x.0,
        bounds.x.1,
        bounds.y.0,
        bounds.y.1
    );
    out.push_str("</svg>\n");
    out
}
