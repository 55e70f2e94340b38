//! Hand-emitted SVG: a log-log convergence plot of the three error columns
//! against the mesh size, with reference slope triangles. No plotting
//! dependency; the output is deterministic for a given report.

use crate::norms::ConvergenceReport;
use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const ML: f64 = 72.0;
const MR: f64 = 24.0;
const MT: f64 = 24.0;
const MB: f64 = 56.0;

struct LogAxes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl LogAxes {
    fn x(&self, h: f64) -> f64 {
        ML + (h.log10() - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }

    fn y(&self, e: f64) -> f64 {
        // larger errors sit higher on the canvas
        H - MB - (e.log10() - self.y0) / (self.y1 - self.y0) * (H - MT - MB)
    }
}

fn polyline(out: &mut String, ax: &LogAxes, pts: &[(f64, f64)], color: &str) {
    if pts.is_empty() {
        return;
    }
    let mut d = String::new();
    for (i, &(h, e)) in pts.iter().enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "" } else { " " }, ax.x(h), ax.y(e));
    }
    let _ = writeln!(
        out,
        r##"<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.8"/>"##
    );
    for &(h, e) in pts {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"##,
            ax.x(h),
            ax.y(e)
        );
    }
}

/// Right triangle with axis-parallel legs whose hypotenuse has the given
/// slope in log-log coordinates, anchored below a series segment.
fn slope_triangle(out: &mut String, ax: &LogAxes, h_a: f64, h_b: f64, e_b: f64, slope: f64) {
    let (h_hi, h_lo) = if h_a > h_b { (h_a, h_b) } else { (h_b, h_a) };
    let e0 = e_b * 0.45;
    let e1 = e0 * (h_hi / h_lo).powf(slope);
    let (xa, xb) = (ax.x(h_lo), ax.x(h_hi));
    let (ya, yb) = (ax.y(e0), ax.y(e1));
    let _ = writeln!(
        out,
        r##"<path d="M{xa:.2},{ya:.2} L{xb:.2},{ya:.2} L{xb:.2},{yb:.2} Z" fill="none" stroke="#666" stroke-width="1"/>"##
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#666">{slope:.0}</text>"##,
        xb + 4.0,
        (ya + yb) / 2.0 + 4.0
    );
}

pub fn convergence_svg(report: &ConvergenceReport) -> String {
    let mut series: [Vec<(f64, f64)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for row in &report.rows {
        if row.h <= 0.0 {
            continue;
        }
        for (s, e) in series.iter_mut().zip([row.l2, row.h1, row.h2]) {
            if e > 0.0 {
                s.push((row.h, e));
            }
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"##
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);

    let all: Vec<(f64, f64)> = series.iter().flatten().copied().collect();
    if all.is_empty() {
        let _ = writeln!(
            out,
            r##"<text x="{:.0}" y="{:.0}" font-size="14" fill="#333">no positive data to plot</text>"##,
            W / 2.0 - 80.0,
            H / 2.0
        );
        out.push_str("</svg>\n");
        return out;
    }

    let (mut lx0, mut lx1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ly0, mut ly1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(h, e) in &all {
        lx0 = lx0.min(h.log10());
        lx1 = lx1.max(h.log10());
        ly0 = ly0.min(e.log10().min(e.log10() + (0.45f64).log10()));
        ly1 = ly1.max(e.log10());
    }
    if lx1 - lx0 < 1e-9 {
        lx0 -= 0.5;
        lx1 += 0.5;
    }
    let pad = 0.06 * (ly1 - ly0).max(1.0);
    ly0 -= pad;
    ly1 += pad;
    let padx = 0.04 * (lx1 - lx0);
    let ax = LogAxes { x0: lx0 - padx, x1: lx1 + padx, y0: ly0, y1: ly1 };

    // y grid and labels at decades
    let (d0, d1) = (ly0.ceil() as i64, ly1.floor() as i64);
    let step = 1 + ((d1 - d0) / 9).max(0);
    let mut d = d0;
    while d <= d1 {
        let yy = ax.y(10f64.powi(d as i32));
        let _ = writeln!(
            out,
            r##"<line x1="{ML}" y1="{yy:.2}" x2="{:.0}" y2="{yy:.2}" stroke="#ddd" stroke-width="1"/>"##,
            W - MR
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.0}" y="{:.2}" font-size="11" fill="#333" text-anchor="end">1e{d}</text>"##,
            ML - 6.0,
            yy + 4.0
        );
        d += step;
    }
    // x ticks at the data h values
    let mut hs: Vec<f64> = report.rows.iter().map(|r| r.h).filter(|&h| h > 0.0).collect();
    hs.dedup();
    for h in hs {
        let xx = ax.x(h);
        let _ = writeln!(
            out,
            r##"<line x1="{xx:.2}" y1="{:.0}" x2="{xx:.2}" y2="{:.0}" stroke="#ddd" stroke-width="1"/>"##,
            MT,
            H - MB
        );
        let _ = writeln!(
            out,
            r##"<text x="{xx:.2}" y="{:.0}" font-size="11" fill="#333" text-anchor="middle">{h:.1e}</text>"##,
            H - MB + 16.0
        );
    }
    // frame and axis labels
    let _ = writeln!(
        out,
        r##"<rect x="{ML}" y="{MT}" width="{:.0}" height="{:.0}" fill="none" stroke="#333" stroke-width="1"/>"##,
        W - ML - MR,
        H - MT - MB
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.0}" y="{:.0}" font-size="13" fill="#333" text-anchor="middle">mesh size h</text>"##,
        (ML + W - MR) / 2.0,
        H - 14.0
    );
    let _ = writeln!(
        out,
        r##"<text x="18" y="{:.0}" font-size="13" fill="#333" text-anchor="middle" transform="rotate(-90 18 {:.0})">error</text>"##,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    );

    let colors = ["#1f77b4", "#2ca02c", "#d62728"];
    let names = ["L2", "H1", "H2"];
    for (s, c) in series.iter().zip(colors) {
        polyline(&mut out, &ax, s, c);
    }

    // reference slopes against the finest pair of levels
    if series[2].len() >= 2 {
        let n = series[2].len();
        let (ha, ea) = series[2][n - 1];
        let (hb, _) = series[2][n - 2];
        slope_triangle(&mut out, &ax, ha, hb, ea, 2.0);
    }
    if series[0].len() >= 2 {
        let n = series[0].len();
        let (ha, ea) = series[0][n - 1];
        let (hb, _) = series[0][n - 2];
        slope_triangle(&mut out, &ax, ha, hb, ea, 4.0);
    }

    // legend
    let (lx, ly) = (W - MR - 110.0, MT + 12.0);
    let _ = writeln!(
        out,
        r##"<rect x="{lx:.0}" y="{ly:.0}" width="96" height="58" fill="white" stroke="#999" stroke-width="0.8"/>"##
    );
    for (i, (name, color)) in names.iter().zip(colors).enumerate() {
        let yy = ly + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r##"<line x1="{:.0}" y1="{yy:.0}" x2="{:.0}" y2="{yy:.0}" stroke="{color}" stroke-width="1.8"/>"##,
            lx + 8.0,
            lx + 34.0
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.0}" y="{:.0}" font-size="12" fill="#333">{name}</text>"##,
            lx + 40.0,
            yy + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}
