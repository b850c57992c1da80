//! Minimal SVG line plots: polylines, markers, a frame and axis labels.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;

pub struct Plot {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
    title: String,
    x_label: String,
    y_label: String,
}

impl Plot {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        Plot { x: widen(x), y: widen(y), body: String::new(), title: String::new(), x_label: String::new(), y_label: String::new() }
    }

    /// Bounds covering every finite point, padded by 5%.
    pub fn fitting<'a>(points: impl IntoIterator<Item = &'a (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        if !x0.is_finite() {
            return Plot::new((0.0, 1.0), (0.0, 1.0));
        }
        let px = 0.05 * (x1 - x0).max(1e-12);
        let py = 0.05 * (y1 - y0).max(1e-12);
        Plot::new((x0 - px, x1 + px), (y0 - py, y1 + py))
    }

    pub fn labels(mut self, title: &str, x: &str, y: &str) -> Self {
        self.title = title.into();
        self.x_label = x.into();
        self.y_label = y.into();
        self
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let u = MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN);
        let v = H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN);
        (u, v)
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        x.is_finite() && y.is_finite() && x >= self.x.0 && x <= self.x.1 && y >= self.y.0 && y <= self.y.1
    }

    /// Draws a line through the points, breaking it wherever a point falls
    /// outside the frame.
    pub fn line(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let mut run: Vec<(f64, f64)> = Vec::new();
        let flush = |run: &mut Vec<(f64, f64)>, body: &mut String| {
            if run.len() >= 2 {
                let coords: Vec<String> = run.iter().map(|(u, v)| format!("{u:.2},{v:.2}")).collect();
                let _ = writeln!(
                    body,
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"{dash} points=\"{}\"/>",
                    coords.join(" ")
                );
            }
            run.clear();
        };
        for &(x, y) in pts {
            if self.inside(x, y) {
                run.push(self.map(x, y));
            } else {
                flush(&mut run, &mut self.body);
            }
        }
        flush(&mut run, &mut self.body);
    }

    pub fn points(&mut self, pts: &[(f64, f64)], color: &str) {
        for &(x, y) in pts {
            if self.inside(x, y) {
                let (u, v) = self.map(x, y);
                let _ = writeln!(self.body, "<circle cx=\"{u:.2}\" cy=\"{v:.2}\" r=\"2.2\" fill=\"{color}\"/>");
            }
        }
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str) {
        if self.inside(x, y) {
            let (u, v) = self.map(x, y);
            let _ = writeln!(self.body, "<text x=\"{u:.2}\" y=\"{v:.2}\" font-size=\"11\">{}</text>", escape(s));
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">");
        let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            W - 2.0 * MARGIN,
            H - 2.0 * MARGIN
        );
        for (i, &(lo, hi)) in [self.x, self.y].iter().enumerate() {
            for k in 0..=4 {
                let val = lo + (hi - lo) * k as f64 / 4.0;
                let (u, v) = if i == 0 { self.map(val, self.y.0) } else { self.map(self.x.0, val) };
                let (tx, ty, anchor) = if i == 0 { (u, v + 16.0, "middle") } else { (u - 6.0, v + 4.0, "end") };
                let _ = writeln!(s, "<text x=\"{tx:.2}\" y=\"{ty:.2}\" font-size=\"10\" text-anchor=\"{anchor}\">{}</text>", tick(val));
            }
        }
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>", W / 2.0, MARGIN / 2.0, escape(&self.title));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 12.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        s.push_str(&self.body);
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_frame_points_split_lines() {
        let mut p = Plot::new((0.0, 1.0), (0.0, 1.0));
        p.line(&[(0.1, 0.1), (0.2, 0.2), (5.0, 5.0), (0.3, 0.3), (0.4, 0.4)], "black", false);
        assert_eq!(p.render().matches("<polyline").count(), 2);
    }
}
