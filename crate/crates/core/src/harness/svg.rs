//! Two-panel SVG of a curve table: set-size fractions and σ̂ against ε, and
//! the error-reject curve traced in the direction of increasing ε.

use std::fmt::Write;

use crate::reject::{CurveRow, CurveTable};

const W: f64 = 420.0;
const H: f64 = 320.0;
const PAD: f64 = 45.0;

type Series = (&'static str, &'static str, fn(&CurveRow<f64>) -> Option<f64>);

struct Panel {
    x0: f64,
    title: &'static str,
    xlabel: &'static str,
    ylabel: &'static str,
    ymax: f64,
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        self.x0 + PAD + x.clamp(0.0, 1.0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y / self.ymax).clamp(0.0, 1.0) * (H - 2.0 * PAD)
    }

    fn frame(&self, s: &mut String) {
        let (l, r, t, b) = (self.px(0.0), self.px(1.0), self.py(self.ymax), self.py(0.0));
        let _ = writeln!(s, r#"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, r - l, b - t);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{f:.2}</text>"#, self.px(f), b + 14.0);
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{:.2}</text>"#,
                l - 4.0,
                self.py(f * self.ymax) + 3.0,
                f * self.ymax
            );
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="20" font-size="13" text-anchor="middle">{}</text>"#, (l + r) / 2.0, self.title);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 8.0, self.xlabel);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
            self.x0 + 12.0,
            H / 2.0,
            self.x0 + 12.0,
            H / 2.0,
            self.ylabel
        );
    }

    fn line(&self, s: &mut String, pts: &[(f64, f64)], color: &str, extra: &str) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>"#,
            coords.join(" ")
        );
    }
}

pub(crate) fn render(table: &CurveTable<f64>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{H}" viewBox="0 0 {} {H}" font-family="sans-serif">"#,
        2.0 * W,
        2.0 * W
    );
    s.push_str(
        r#"<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="8" markerHeight="8" orient="auto-start-reverse"><path d="M0,0 L10,5 L0,10 z" fill="black"/></marker></defs>
"#,
    );

    let left = Panel {
        x0: 0.0,
        title: "Prediction set sizes",
        xlabel: "significance level ε",
        ylabel: "fraction / σ̂",
        ymax: 1.0,
    };
    left.frame(&mut s);
    let series: [Series; 4] = [
        ("empty", "#d62728", |r| Some(r.frac_empty)),
        ("single", "#2ca02c", |r| Some(r.frac_single)),
        ("double", "#1f77b4", |r| Some(r.frac_double)),
        ("σ̂ (raw)", "#000000", |r| r.sigma_hat_raw),
    ];
    for (i, (name, color, get)) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = table.rows.iter().filter_map(|r| get(r).map(|v| (r.epsilon, v))).collect();
        left.line(&mut s, &pts, color, "");
        let y = PAD + 12.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{y:.1}" font-size="10" fill="{color}">{name}</text>"#,
            W - PAD - 60.0
        );
    }

    let errors: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter_map(|r| r.singleton_error_empirical.map(|e| (r.reject_rate, e)))
        .collect();
    let ymax = errors.iter().map(|p| p.1).fold(0.0, f64::max).max(0.05) * 1.1;
    let right = Panel {
        x0: W,
        title: "Error-reject curve",
        xlabel: "reject rate",
        ylabel: "error rate of accepted",
        ymax,
    };
    right.frame(&mut s);
    right.line(&mut s, &errors, "#9467bd", r#" marker-end="url(#arrow)""#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="10">arrow: ε increasing</text>"#,
        right.px(0.55),
        PAD + 12.0
    );
    s.push_str("</svg>\n");
    s
}
