//! Static SVG fan charts.

use std::fmt::Write as _;

use pvcast::models::Forecast;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;

fn x(hour: usize, steps: usize) -> f64 {
    MARGIN + (hour as f64 - 1.0) / (steps.max(2) - 1) as f64 * (WIDTH - 2.0 * MARGIN)
}

fn y(value: f64) -> f64 {
    HEIGHT - MARGIN - value.clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN)
}

fn polyline(points: impl Iterator<Item = (f64, f64)>) -> String {
    points.map(|(px, py)| format!("{px:.1},{py:.1}")).collect::<Vec<_>>().join(" ")
}

/// Expected power per hour with a 10–90 % band for distributional
/// forecasts, and observed expected values when known.
pub fn fan_chart(title: &str, forecast: &Forecast, observed: Option<&[f64]>) -> String {
    let steps = forecast.steps();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, y(0.0), y(1.0));
    let _ = writeln!(s, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#);
    for tick in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{tick:.1}</text>"#,
            x0 - 4.0,
            y(tick) + 3.0
        );
    }
    for hour in [1, steps / 2, steps] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">+{hour}h</text>"#,
            x(hour, steps),
            y0 + 14.0
        );
    }
    if let Some(dists) = forecast.distributions() {
        let upper = dists.iter().enumerate().map(|(i, d)| (x(i + 1, steps), y(d.quantile(0.9))));
        let lower = dists.iter().enumerate().rev().map(|(i, d)| (x(i + 1, steps), y(d.quantile(0.1))));
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>"##,
            polyline(upper.chain(lower))
        );
    }
    let expected = forecast.expected_values();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
        polyline(expected.iter().enumerate().map(|(i, &v)| (x(i + 1, steps), y(v))))
    );
    if let Some(obs) = observed {
        for (i, &v) in obs.iter().enumerate() {
            let _ = writeln!(s, r##"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="#d62728"/>"##, x(i + 1, steps), y(v));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use pvcast::dataset::BinnedDistribution;

    #[test]
    fn pdf_chart_has_a_band() {
        let f = Forecast::Pdf(vec![BinnedDistribution::uniform(50); 24]);
        let svg = fan_chart("t <1>", &f, Some(&[0.5; 24]));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<polygon"));
        assert_eq!(svg.matches("<circle").count(), 24);
        assert!(svg.contains("t &lt;1&gt;"));
        let e = fan_chart("e", &Forecast::Expected(vec![0.2; 24]), None);
        assert!(!e.contains("<polygon"));
    }
}
