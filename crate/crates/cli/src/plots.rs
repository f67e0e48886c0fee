//! Plot data: per-frame mean and standard deviation as TSV and as a
//! self-contained SVG line chart with a shaded band.

use std::fmt::Write as _;

pub fn band_tsv(band: &[(u64, f64, f64)]) -> String {
    let mut out = String::from("frame\tmean\tstd\n");
    for (f, m, s) in band {
        writeln!(out, "{f}\t{m:.6}\t{s:.6}").unwrap();
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;

pub fn band_svg(title: &str, band: &[(u64, f64, f64)]) -> String {
    let x_max = band.iter().map(|b| b.0).max().unwrap_or(0).max(1) as f64;
    let y_max = band
        .iter()
        .map(|b| b.1 + b.2)
        .fold(0.0_f64, f64::max)
        .max(1e-9);
    let px = |f: u64| MARGIN + (W - 2.0 * MARGIN) * f as f64 / x_max;
    let py = |v: f64| H - MARGIN - (H - 2.0 * MARGIN) * v.clamp(0.0, y_max) / y_max;
    let pts = |vals: &mut dyn Iterator<Item = (u64, f64)>| {
        vals.map(|(f, v)| format!("{:.1},{:.1}", px(f), py(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let upper = pts(&mut band.iter().map(|b| (b.0, b.1 + b.2)));
    let lower = pts(&mut band.iter().rev().map(|b| (b.0, (b.1 - b.2).max(0.0))));
    let mean = pts(&mut band.iter().map(|b| (b.0, b.1)));

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<path d="M{m},{b} H{r} M{m},{b} V{m}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    )
    .unwrap();
    if !band.is_empty() {
        writeln!(svg, r##"<polygon points="{upper} {lower}" fill="#4477aa" fill-opacity="0.25" stroke="none"/>"##).unwrap();
        writeln!(svg, r##"<polyline points="{mean}" fill="none" stroke="#4477aa" stroke-width="2"/>"##).unwrap();
    }
    writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle">{title}</text>"#, W / 2.0).unwrap();
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">frames</text>"#, W / 2.0, H - 12.0).unwrap();
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{x_max}</text>"#, W - MARGIN, H - MARGIN + 16.0).unwrap();
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{y_max:.3}</text>"#, MARGIN - 4.0, MARGIN + 4.0).unwrap();
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, MARGIN - 4.0, H - MARGIN + 4.0).unwrap();
    svg.push_str("</svg>\n");
    svg
}
