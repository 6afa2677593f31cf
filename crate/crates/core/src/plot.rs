//! Self-contained SVG scatter plots.

use std::fmt::Write as _;

use ndarray::ArrayView2;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;

/// Scatter of the first two columns, scaled to fit a square canvas.
pub fn scatter_svg(points: ArrayView2<'_, f64>) -> String {
    let col = |j: usize| -> Vec<f64> {
        if j < points.ncols() {
            points.column(j).to_vec()
        } else {
            vec![0.0; points.nrows()]
        }
    };
    let (xs, ys) = (col(0), col(1));
    let finite = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).collect::<Vec<_>>();
    let (fx, fy) = (finite(&xs), finite(&ys));
    let lo = fx.iter().chain(&fy).copied().fold(f64::INFINITY, f64::min);
    let hi = fx.iter().chain(&fy).copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (-1.0, 1.0) };
    let scale = (SIZE - 2.0 * MARGIN) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r##"<g fill="#1f4e79" fill-opacity="0.5">"##);
    for (x, y) in xs.iter().zip(&ys) {
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let px = MARGIN + (x - lo) * scale;
        let py = SIZE - MARGIN - (y - lo) * scale;
        let _ = writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.5"/>"#);
    }
    out.push_str("</g>\n</svg>\n");
    out
}
