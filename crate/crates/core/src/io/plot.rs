//! SVG rhythm plots: an onset envelope with its peaks marked.

use std::fmt::Write;

use super::table::{EnvelopeRow, PeakRow};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 240.0;
const MARGIN: f64 = 40.0;

pub fn rhythm_svg(envelope: &[EnvelopeRow], peaks: &[PeakRow], title: &str) -> String {
    let t0 = envelope.first().map_or(0.0, |r| r.time);
    let t1 = envelope.last().map_or(1.0, |r| r.time).max(t0 + 1e-9);
    let vmax = envelope.iter().map(|r| r.value).fold(0.0, f64::max).max(1e-12);
    let x = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - v / vmax * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.2} s</text>"#,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0,
        t1
    );
    let points: Vec<String> = envelope.iter().map(|r| format!("{:.2},{:.2}", x(r.time), y(r.value))).collect();
    let _ = writeln!(s, r#"<polyline fill="none" stroke="seagreen" stroke-width="1.5" points="{}"/>"#, points.join(" "));
    for p in peaks {
        let v = envelope.iter().find(|r| r.index == p.index).map_or(vmax, |r| r.value);
        let _ = writeln!(
            s,
            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="steelblue" stroke-dasharray="3,3"/><circle cx="{0:.2}" cy="{2:.2}" r="3" fill="steelblue"/>"#,
            x(p.time),
            HEIGHT - MARGIN,
            y(v)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
