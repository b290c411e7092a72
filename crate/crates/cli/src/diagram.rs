use std::fmt::Write as _;

use topoprune::numfmt::format_sig;

/// Birth–death scatter for one neuron. Essential classes sit on a dashed
/// line above the largest finite death; the point at `r_f` is drawn in red.
pub fn render_svg(points: &[(f64, f64)], r_f: f64, title: &str) -> String {
    let size = 420.0;
    let (left, top, span) = (60.0, 40.0, 320.0);
    let finite_max = points
        .iter()
        .map(|p| p.1)
        .filter(|d| d.is_finite())
        .fold(0.0f64, f64::max);
    let axis_max = if finite_max > 0.0 {
        finite_max * 1.15
    } else {
        1.0
    };
    let inf_y = (finite_max + axis_max) / 2.0;
    let px = |v: f64| left + span * v / axis_max;
    let py = |v: f64| top + span * (1.0 - v / axis_max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{size}" height="{size}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" text-anchor="middle">{title}</text>"#,
        left + span / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{left:.1} {top:.1} V{:.1} H{:.1}" stroke="black" fill="none"/>"#,
        top + span,
        left + span
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999999"/>"##,
        px(0.0),
        py(0.0),
        px(axis_max),
        py(axis_max)
    );
    let _ = writeln!(
        svg,
        r#"<line class="infinity" x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black" stroke-dasharray="6 4"/><text x="{:.1}" y="{:.1}" text-anchor="end">∞</text>"#,
        left + span,
        left - 6.0,
        py(inf_y) + 4.0,
        y = py(inf_y)
    );
    for i in 0..=4 {
        let v = finite_max * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py(v) + 4.0,
            format_sig(v, 3)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">birth</text>"#,
        left + span / 2.0,
        top + span + 30.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">death</text>"#,
        top + span / 2.0,
        top + span / 2.0
    );

    let mut highlighted = false;
    for &(b, d) in points {
        let y = if d.is_finite() { d } else { inf_y };
        let is_rf = !highlighted && d.is_finite() && d == r_f;
        highlighted |= is_rf;
        let (class, color, r) = if is_rf {
            ("r_f", "#d62728", 5.5)
        } else {
            ("pair", "#1f77b4", 3.5)
        };
        let _ = writeln!(
            svg,
            r#"<circle class="{class}" cx="{:.2}" cy="{:.2}" r="{r}" fill="{color}" fill-opacity="0.8"/>"#,
            px(b),
            py(y)
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" fill="#d62728">r_f = {}</text>"##,
        left + 10.0,
        top + 14.0,
        format_sig(r_f, 6)
    );
    svg.push_str("</svg>\n");
    svg
}
