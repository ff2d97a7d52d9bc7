//! Trajectory figures as hand-written SVG text.

use std::fmt::Write;

use crate::evaluator::Trajectory;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 48.0;
const CAPTION_H: f64 = 40.0;

/// Numbers printed under the figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caption {
    pub ate_m: f64,
    /// `None` when the trajectory is shorter than one RTE interval.
    pub rte_m: Option<f64>,
}

impl Caption {
    pub fn text(&self) -> String {
        match self.rte_m {
            Some(r) => format!("ATE {:.3} m, RTE {:.3} m", self.ate_m, r),
            None => format!("ATE {:.3} m, RTE n/a", self.ate_m),
        }
    }
}

/// Largest 1, 2 or 5 times a power of ten not above `x`.
fn nice_length(x: f64) -> f64 {
    let p = 10f64.powf(x.log10().floor());
    [5.0, 2.0, 1.0]
        .into_iter()
        .map(|m| m * p)
        .find(|&v| v <= x)
        .unwrap_or(p)
}

/// Overlays the predicted path (red) on ground truth (black) with equal
/// axis scaling, a start marker, a scale bar and the error caption.
pub fn render_svg(pred: &Trajectory, gt: &Trajectory, caption: &Caption) -> String {
    let pts = pred.positions().iter().chain(gt.positions());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-6);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let map = |p: [f64; 2]| {
        (
            MARGIN + (p[0] - x0) * scale,
            SIZE - MARGIN - (p[1] - y0) * scale,
        )
    };
    let polyline = |tr: &Trajectory, id: &str, color: &str| {
        let coords: Vec<String> = tr
            .positions()
            .iter()
            .map(|&p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        format!(
            "  <polyline id=\"{id}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        )
    };

    let height = SIZE + CAPTION_H;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{height}\" viewBox=\"0 0 {SIZE} {height}\">"
    );
    let _ = writeln!(
        s,
        "  <rect width=\"{SIZE}\" height=\"{height}\" fill=\"white\"/>"
    );
    s.push_str(&polyline(gt, "ground-truth", "black"));
    s.push_str(&polyline(pred, "prediction", "red"));

    let (sx, sy) = map(gt.positions()[0]);
    let _ = writeln!(
        s,
        "  <circle id=\"start\" cx=\"{sx:.2}\" cy=\"{sy:.2}\" r=\"5\" fill=\"green\"/>"
    );

    let bar_m = nice_length(span / 5.0);
    let (bx, by) = (MARGIN, SIZE - MARGIN / 2.0);
    let _ = writeln!(
        s,
        "  <line id=\"scale-bar\" x1=\"{bx:.2}\" y1=\"{by:.2}\" x2=\"{:.2}\" y2=\"{by:.2}\" stroke=\"black\" stroke-width=\"3\"/>",
        bx + bar_m * scale
    );
    let _ = writeln!(
        s,
        "  <text x=\"{bx:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{bar_m} m</text>",
        by - 6.0
    );
    let _ = writeln!(
        s,
        "  <text id=\"caption\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        SIZE / 2.0,
        SIZE + CAPTION_H / 2.0,
        caption.text()
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_lengths() {
        assert_eq!(nice_length(7.3), 5.0);
        assert_eq!(nice_length(0.31), 0.2);
        assert_eq!(nice_length(10.0), 10.0);
    }

    #[test]
    fn caption_format() {
        let c = Caption {
            ate_m: 1.23456,
            rte_m: None,
        };
        assert_eq!(c.text(), "ATE 1.235 m, RTE n/a");
    }
}
