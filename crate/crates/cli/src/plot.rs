//! Static SVG line charts: one mean line per series with a shaded band of
//! plus/minus one standard error.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub width: f64,
    pub height: f64,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            title: String::new(),
            x_label: "x".into(),
            y_label: "normalized loss".into(),
            log_y: false,
            width: 720.0,
            height: 440.0,
        }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 55.0); // left, right, top, bottom

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Roughly `count` round tick positions covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / count.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders the series. Points with a non-positive lower band are clamped on
/// a log axis; series must have matching lengths.
pub fn render_svg(series: &[Series], opts: &PlotOptions) -> Result<String, String> {
    if series.is_empty() {
        return Err("nothing to plot".into());
    }
    for s in series {
        if s.x.len() != s.mean.len() || s.x.len() != s.stderr.len() || s.x.is_empty() {
            return Err(format!("series '{}' has inconsistent or empty columns", s.label));
        }
        if s.x.iter().chain(&s.mean).chain(&s.stderr).any(|v| !v.is_finite()) {
            return Err(format!("series '{}' contains non-finite values", s.label));
        }
        if opts.log_y && s.mean.iter().any(|&m| m <= 0.0) {
            return Err(format!("series '{}' has non-positive means; cannot use a log axis", s.label));
        }
    }

    let ty = |v: f64| if opts.log_y { v.log10() } else { v };
    let floor = series
        .iter()
        .flat_map(|s| s.mean.iter())
        .fold(f64::INFINITY, |a, &b| a.min(b))
        / 10.0;
    let lower = |m: f64, e: f64| if opts.log_y { (m - e).max(floor) } else { m - e };

    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for i in 0..s.x.len() {
            x0 = x0.min(s.x[i]);
            x1 = x1.max(s.x[i]);
            y0 = y0.min(ty(lower(s.mean[i], s.stderr[i])));
            y1 = y1.max(ty(s.mean[i] + s.stderr[i]));
        }
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    let (ml, mr, mt, mb) = MARGIN;
    let (w, h) = (opts.width, opts.height);
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| mt + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    if !opts.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            w / 2.0,
            escape(&opts.title)
        );
    }

    // Axes and ticks.
    let _ = writeln!(svg, r##"<g class="axes" stroke="#333" fill="none">"##);
    let _ = writeln!(svg, r#"<line x1="{ml}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/>"#, mt + ph, ml + pw, mt + ph);
    let _ = writeln!(svg, r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{:.1}"/>"#, mt + ph);
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r##"<g class="ticks" fill="#333">"##);
    for t in nice_ticks(x0, x1, 8) {
        let x = px(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 18.0,
            fmt_tick(t)
        );
    }
    let y_ticks: Vec<(f64, String)> = if opts.log_y && y1 - y0 >= 1.0 {
        (y0.ceil() as i64..=y1.floor() as i64)
            .map(|e| (e as f64, fmt_tick(10f64.powi(e as i32))))
            .collect()
    } else if opts.log_y {
        nice_ticks(10f64.powf(y0), 10f64.powf(y1), 5)
            .into_iter()
            .filter(|v| *v > 0.0)
            .map(|v| (v.log10(), fmt_tick(v)))
            .collect()
    } else {
        nice_ticks(y0, y1, 6).into_iter().map(|v| (v, fmt_tick(v))).collect()
    };
    for (t, label) in y_ticks {
        let y = py(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{ml}" y2="{y:.1}" stroke="#333"/><line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"##,
            ml - 5.0,
            ml + pw,
            ml - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        h - 12.0,
        escape(&opts.x_label)
    );
    let y_label = if opts.log_y {
        format!("{} (log scale)", opts.y_label)
    } else {
        opts.y_label.clone()
    };
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(&y_label)
    );

    // Bands first so every line is drawn on top.
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = Vec::with_capacity(2 * s.x.len());
        for i in 0..s.x.len() {
            pts.push(format!("{:.2},{:.2}", px(s.x[i]), py(ty(s.mean[i] + s.stderr[i]))));
        }
        for i in (0..s.x.len()).rev() {
            pts.push(format!("{:.2},{:.2}", px(s.x[i]), py(ty(lower(s.mean[i], s.stderr[i])))));
        }
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            pts.join(" ")
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for i in 0..s.x.len() {
            let _ = write!(
                d,
                "{}{:.2},{:.2}",
                if i == 0 { "M" } else { " L" },
                px(s.x[i]),
                py(ty(s.mean[i]))
            );
        }
        let _ = writeln!(
            svg,
            r#"<path class="series" data-label="{}" d="{d}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&s.label)
        );
    }

    // Legend.
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let y = mt + 10.0 + 18.0 * k as f64;
        let x = ml + pw - 160.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
