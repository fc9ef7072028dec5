//! Minimal SVG line charts of trace columns on a log scale.

use std::fmt::Write as _;
use std::path::Path;

use bcprox::bc::TraceRow;

use crate::error::{io_err, BenchError, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

/// `log10` of the FBE gap above `floor` and of the residual against `k`.
pub fn trace_svg(title: &str, rows: &[TraceRow], floor: f64) -> Result<String> {
    let gap: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.fbe - floor > 0.0)
        .map(|r| (r.k as f64, (r.fbe - floor).log10()))
        .collect();
    let res: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.residual > 0.0)
        .map(|r| (r.k as f64, r.residual.log10()))
        .collect();
    let all: Vec<&(f64, f64)> = gap.iter().chain(&res).filter(|p| p.1.is_finite()).collect();
    if all.is_empty() {
        return Err(BenchError::Trace("nothing to plot".into()));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="20">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">k = {x0}</text>"#, H - PAD + 20.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">k = {x1}</text>"#,
        W - PAD,
        H - PAD + 20.0
    );
    let _ = writeln!(s, r#"<text x="5" y="{}">1e{:.1}</text>"#, PAD, y1);
    let _ = writeln!(s, r#"<text x="5" y="{}">1e{:.1}</text>"#, H - PAD, y0);
    for (pts, colour, label, row) in [
        (&gap, "steelblue", "fbe - min", 0.0),
        (&res, "firebrick", "residual", 1.0),
    ] {
        let finite: Vec<_> = pts.iter().filter(|p| p.1.is_finite()).collect();
        if finite.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (j, (x, y)) in finite.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if j == 0 { "M" } else { "L" }, sx(*x), sy(*y));
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{colour}"/>"#, d.trim_end());
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{colour}" text-anchor="end">{label}</text>"#,
            W - PAD,
            PAD + 15.0 * row
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_trace_svg(path: &Path, title: &str, rows: &[TraceRow], floor: f64) -> Result<()> {
    let svg = trace_svg(title, rows, floor)?;
    std::fs::write(path, svg).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_both_series() {
        let rows: Vec<TraceRow> = (0..10)
            .map(|k| TraceRow {
                k,
                indices: vec![0],
                fbe: 1.0 + 0.5f64.powi(k as i32),
                phi_z: 1.0,
                residual: 0.25f64.powi(k as i32),
                wall_ns: 0,
            })
            .collect();
        let s = trace_svg("a < b", &rows, 1.0).unwrap();
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<path").count(), 3);
        assert!(s.contains("a &lt; b"));
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert!(trace_svg("t", &[], 0.0).is_err());
    }
}
