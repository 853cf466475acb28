//! Minimal grouped bar charts as standalone SVG.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f",
];

/// One group per entry of `groups`; within each group one bar per series, values in [0, 1].
pub fn grouped_bars(title: &str, groups: &[String], series: &[(String, Vec<f64>)]) -> String {
    let (left, top, plot_h, bar_w, gap) = (50.0, 40.0, 200.0, 14.0, 20.0);
    let group_w = bar_w * series.len().max(1) as f64 + gap;
    let width = left + group_w * groups.len() as f64 + 160.0;
    let height = top + plot_h + 60.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.2}</text>"##,
            width - 160.0,
            left - 4.0,
            y + 4.0
        );
    }
    for (g, name) in groups.iter().enumerate() {
        let x0 = left + gap / 2.0 + g as f64 * group_w;
        let _ = writeln!(s, r#"<g class="group" data-metric="{}">"#, escape(name));
        for (k, (label, values)) in series.iter().enumerate() {
            let v = values.get(g).copied().unwrap_or(0.0).clamp(0.0, 1.0);
            let h = plot_h * v;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{bar_w}" height="{h}" fill="{}"><title>{}: {v:.4}</title></rect>"#,
                x0 + k as f64 * bar_w,
                top + plot_h - h,
                PALETTE[k % PALETTE.len()],
                escape(label)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text></g>"#,
            x0 + bar_w * series.len() as f64 / 2.0,
            top + plot_h + 16.0,
            escape(name)
        );
    }
    for (k, (label, _)) in series.iter().enumerate() {
        let y = top + 14.0 * k as f64;
        let x = width - 150.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y,
            PALETTE[k % PALETTE.len()],
            x + 14.0,
            y + 9.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
