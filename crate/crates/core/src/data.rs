//! Synthetic 2D datasets and CSV ingestion.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Raw spiral points before standardization, plus the curve parameter of each.
pub(crate) fn swiss_roll_raw(n: usize, noise_std: f64, rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<f64>) {
    let scale = 4.5 * PI;
    let mut out = Array2::zeros((n, 2));
    let mut params = Vec::with_capacity(n);
    for mut row in out.rows_mut() {
        let t: f64 = rng.random_range(1.5 * PI..4.5 * PI);
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        // black_box keeps sin and cos as separate libm calls; a fused sincos
        // rounds differently in some builds
        row[0] = t * t.cos() / scale + noise_std * nx;
        row[1] = t * std::hint::black_box(t).sin() / scale + noise_std * ny;
        params.push(t);
    }
    (out, params)
}

/// Two-turn spiral, standardized to zero mean and unit variance per axis.
pub fn swiss_roll(n: usize, noise_std: f64, seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::invalid("swiss roll needs n >= 1"));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::invalid(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut points, _) = swiss_roll_raw(n, noise_std, &mut rng);
    standardize(&mut points);
    Ok(points)
}

/// Shifts and scales each column to mean 0 and (population) variance 1.
pub fn standardize(points: &mut Array2<f64>) {
    let n = points.nrows() as f64;
    for mut col in points.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        if var > 0.0 {
            let sd = var.sqrt();
            col.mapv_inplace(|v| v / sd);
        }
    }
}

/// Isotropic Gaussian mixture with uniformly chosen components. Returns the
/// points and the component index of each.
pub fn gaussian_mixture_labeled(
    n: usize,
    centers: ArrayView2<'_, f64>,
    std: f64,
    seed: u64,
) -> Result<(Array2<f64>, Vec<usize>)> {
    if centers.nrows() == 0 {
        return Err(Error::invalid("mixture needs at least one center"));
    }
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::invalid(format!("std must be >= 0, got {std}")));
    }
    let k = centers.nrows();
    let d = centers.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for mut row in out.rows_mut() {
        let c = rng.random_range(0..k);
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            row[j] = centers[[c, j]] + std * z;
        }
        labels.push(c);
    }
    Ok((out, labels))
}

pub fn gaussian_mixture(n: usize, centers: ArrayView2<'_, f64>, std: f64, seed: u64) -> Result<Array2<f64>> {
    gaussian_mixture_labeled(n, centers, std, seed).map(|(x, _)| x)
}

/// `k` centers evenly spaced on a circle.
pub fn ring_centers(k: usize, radius: f64) -> Array2<f64> {
    Array2::from_shape_fn((k, 2), |(i, j)| {
        let angle = 2.0 * PI * i as f64 / k as f64;
        radius * if j == 0 { angle.cos() } else { angle.sin() }
    })
}

/// 17 significant digits: lossless for every finite f64.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_header(d: usize) -> String {
    (0..d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",")
}

pub fn to_csv_string(m: ArrayView2<'_, f64>) -> String {
    let mut out = csv_header(m.ncols());
    out.push('\n');
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{}", format_float(*v));
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(path: impl AsRef<Path>, m: ArrayView2<'_, f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(m)).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file, expected a header row".into(),
    })?;
    let d = header.split(',').count();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(Error::DimensionInconsistency {
                path: path.to_path_buf(),
                row: lineno,
                expected: d,
                got: fields.len(),
            });
        }
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("not a number: {f:?}"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, d), values).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: e.to_string(),
    })
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::energy_distance;

    #[test]
    fn noiseless_roll_lies_on_spiral() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (pts, params) = swiss_roll_raw(500, 0.0, &mut rng);
        let scale = 4.5 * PI;
        for (row, t) in pts.rows().into_iter().zip(params) {
            assert!((row[0] - t * t.cos() / scale).abs() < 1e-12);
            assert!((row[1] - t * t.sin() / scale).abs() < 1e-12);
        }
    }

    #[test]
    fn roll_is_standardized_and_deterministic() {
        let pts = swiss_roll(2000, 0.05, 1).unwrap();
        for col in pts.axis_iter(Axis(1)) {
            let mean = col.sum() / 2000.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2000.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        assert_eq!(pts, swiss_roll(2000, 0.05, 1).unwrap());
        assert_ne!(pts, swiss_roll(2000, 0.05, 2).unwrap());
        assert!(swiss_roll(0, 0.1, 0).is_err());
        assert!(swiss_roll(10, -0.1, 0).is_err());
    }

    #[test]
    fn independent_rolls_are_close() {
        let a = swiss_roll(100_000, 0.05, 10).unwrap();
        let b = swiss_roll(100_000, 0.05, 11).unwrap();
        // exact pairwise energy distance on every 10th point keeps this
        // under a second
        let sub = |m: &Array2<f64>| m.slice(ndarray::s![..;10, ..]).to_owned();
        let ed = energy_distance(sub(&a).view(), sub(&b).view()).unwrap();
        assert!(ed < 0.01, "energy distance {ed}");
    }

    #[test]
    fn mixture_cases() {
        let origin = Array2::zeros((1, 2));
        let n = 20_000;
        let pts = gaussian_mixture(n, origin.view(), 1.0, 3).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        for col in pts.axis_iter(Axis(1)) {
            assert!((col.sum() / n as f64).abs() < bound);
        }

        let centers = ring_centers(8, 2.0);
        let pts = gaussian_mixture(100, centers.view(), 0.0, 1).unwrap();
        for row in pts.rows() {
            assert!(centers.rows().into_iter().any(|c| c == row));
        }

        let (_, labels) = gaussian_mixture_labeled(n, centers.view(), 0.1, 5).unwrap();
        let p = 1.0 / 8.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for k in 0..8 {
            let count = labels.iter().filter(|&&l| l == k).count() as f64;
            assert!((count - n as f64 * p).abs() < 3.0 * sd, "mode {k}: {count}");
        }
        assert!(gaussian_mixture(10, Array2::zeros((0, 2)).view(), 1.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Array2::from_shape_fn((10, 2), |_| rng.sample::<f64, _>(StandardNormal) * 1e3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        save_csv(&path, m.view()).unwrap();
        let back = load_csv(&path).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x0,x1\n"));
    }

    #[test]
    fn csv_errors() {
        let p = Path::new("mem.csv");
        assert!(matches!(parse_csv("", p), Err(Error::Parse { line: 1, .. })));
        match parse_csv("x0,x1\n1,2\n3\n", p) {
            Err(Error::DimensionInconsistency { row, expected, got, .. }) => {
                assert_eq!((row, expected, got), (3, 2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_csv("x0\nabc\n", p), Err(Error::Parse { line: 2, .. })));
    }
}
