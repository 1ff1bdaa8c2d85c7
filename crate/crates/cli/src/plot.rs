//! Original-versus-reconstruction SVG chart.

use std::fmt::Write as _;

use trackae::features::FeatureSeries;

const WIDTH: f64 = 800.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 50.0;
const ORIGINAL: &str = "#d62728";
const RECONSTRUCTED: &str = "#1f77b4";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn polyline(out: &mut String, values: &[f64], lo: f64, hi: f64, top: f64, color: &str, class: &str) {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = values.len().max(2) - 1;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = PANEL_H - 2.0 * MARGIN;
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = MARGIN + plot_w * i as f64 / n as f64;
            let y = top + MARGIN + plot_h * (1.0 - (v - lo) / span);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        pts.join(" ")
    );
}

fn panel(out: &mut String, title: &str, original: &[f64], recon: &[f64], top: f64) {
    let (lo, hi) = original
        .iter()
        .chain(recon)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let _ = writeln!(out, r#"<g class="panel">"#);
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{}" width="{}" height="{}" fill="none" stroke="gray"/>"#,
        top + MARGIN,
        WIDTH - 2.0 * MARGIN,
        PANEL_H - 2.0 * MARGIN
    );
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}" font-size="14">{}</text>"#, top + MARGIN - 8.0, escape(title));
    let _ = writeln!(out, r#"<text x="4" y="{}" font-size="10">{hi:.0}</text>"#, top + MARGIN + 4.0);
    let _ = writeln!(out, r#"<text x="4" y="{}" font-size="10">{lo:.0}</text>"#, top + PANEL_H - MARGIN);
    polyline(out, original, lo, hi, top, ORIGINAL, "original");
    polyline(out, recon, lo, hi, top, RECONSTRUCTED, "reconstructed");
    let _ = writeln!(out, "</g>");
}

/// Altitude and speed panels, original in red and reconstruction in blue,
/// both in physical units.
pub fn render(original: &FeatureSeries, recon: &FeatureSeries, mae: f64, delta: Option<f64>) -> String {
    let height = 2.0 * PANEL_H + 40.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let delta_text = delta.map_or_else(|| "uncalibrated".to_string(), |d| format!("{d:.4}"));
    let verdict = match delta {
        Some(d) if mae > d => " (anomalous)",
        _ => "",
    };
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="24" font-size="16">{}: MAE {mae:.4}, threshold {delta_text}{verdict}</text>"#,
        escape(&original.flight_id)
    );
    panel(&mut out, "altitude (ft)", &original.alt, &recon.alt, 30.0);
    panel(&mut out, "ground speed (kts)", &original.gs, &recon.gs, 30.0 + PANEL_H);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12"><tspan fill="{ORIGINAL}">original</tspan> <tspan fill="{RECONSTRUCTED}">reconstructed</tspan></text>"#,
        WIDTH - MARGIN - 160.0,
        height - 8.0
    );
    let _ = writeln!(out, "</svg>");
    out
}
