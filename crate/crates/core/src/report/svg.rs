use std::fmt::Write;

const WIDTH: f64 = 640.0;
const LABEL_WIDTH: f64 = 220.0;
const BAR_HEIGHT: f64 = 18.0;
const GAP: f64 = 6.0;
const TOP: f64 = 40.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if c.is_control() => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

/// Horizontal bar chart of `(label, share)` pairs, shares in `[0, 1]`.
/// Output depends only on the arguments.
pub fn render_bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let height = TOP + bars.len() as f64 * (BAR_HEIGHT + GAP) + 20.0;
    let plot = WIDTH - LABEL_WIDTH - 60.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<text x="10" y="22" font-size="14" font-weight="bold">{}</text>"#, escape(title));
    for (i, (label, share)) in bars.iter().enumerate() {
        let share = if share.is_finite() { share.clamp(0.0, 1.0) } else { 0.0 };
        let y = TOP + i as f64 * (BAR_HEIGHT + GAP);
        let text_y = y + BAR_HEIGHT - 5.0;
        let shown: String = label.chars().take(32).collect();
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{text_y:.1}" text-anchor="end">{}</text>"#,
            LABEL_WIDTH - 8.0,
            escape(&shown)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{LABEL_WIDTH:.1}" y="{y:.1}" width="{:.2}" height="{BAR_HEIGHT:.1}" fill="#4878a8"/>"##,
            share * plot
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{text_y:.1}">{:.1}%</text>"#,
            LABEL_WIDTH + share * plot + 4.0,
            share * 100.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
