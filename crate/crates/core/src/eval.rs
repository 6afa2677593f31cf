//! Two-sample distances for low-dimensional samples and the teacher/student
//! consistency score.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sample::ddim_sample;
use crate::train::ModelBundle;

pub const DEFAULT_PROJECTIONS: usize = 64;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sum over all ordered pairs of `‖a_i − b_j‖`, accumulated row by row.
fn cross_sum(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let bs: Vec<&[f64]> = b.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    a.rows()
        .into_iter()
        .map(|ra| {
            let ra = ra.to_slice().unwrap();
            bs.iter().map(|rb| dist(ra, rb)).sum::<f64>()
        })
        .sum()
}

/// Sum over ordered pairs within one sample (diagonal pairs are zero).
fn self_sum(a: ArrayView2<'_, f64>) -> f64 {
    let a = a.as_standard_layout();
    let rows: Vec<&[f64]> = a.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let mut total = 0.0;
    for i in 0..rows.len() {
        let mut row_sum = 0.0;
        for j in (i + 1)..rows.len() {
            row_sum += dist(rows[i], rows[j]);
        }
        total += row_sum;
    }
    2.0 * total
}

fn check_pair(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    let n = a.nrows().min(b.nrows());
    if n < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: n });
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: b.ncols() });
    }
    Ok(())
}

/// V-statistic energy distance `2 E‖a−b‖ − E‖a−a'‖ − E‖b−b'‖` over exact
/// pairwise means.
pub fn energy_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    check_pair(a, b)?;
    let (n, m) = (a.nrows() as f64, b.nrows() as f64);
    let ab = cross_sum(a, b) / (n * m);
    let aa = self_sum(a) / (n * n);
    let bb = self_sum(b) / (m * m);
    Ok((2.0 * ab - aa - bb).max(0.0))
}

/// Mean over random unit directions of the 1-D 2-Wasserstein distance between
/// the projected samples. Unequal sample sizes are equalized by subsampling
/// the larger one without replacement.
pub fn sliced_wasserstein(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    n_projections: usize,
    seed: u64,
) -> Result<f64> {
    check_pair(a, b)?;
    if n_projections == 0 {
        return Err(Error::invalid("need at least one projection"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = a.nrows().min(b.nrows());
    let mut equalize = |m: ArrayView2<'_, f64>| -> Array2<f64> {
        if m.nrows() == n {
            m.to_owned()
        } else {
            let mut idx = index::sample(&mut rng, m.nrows(), n).into_vec();
            idx.sort_unstable();
            m.select(Axis(0), &idx)
        }
    };
    let a = equalize(a);
    let b = equalize(b);
    let d = a.ncols();

    let mut total = 0.0;
    for _ in 0..n_projections {
        let dir = random_direction(d, &mut rng);
        let mut pa = a.dot(&dir).to_vec();
        let mut pb = b.dot(&dir).to_vec();
        pa.sort_unstable_by(f64::total_cmp);
        pb.sort_unstable_by(f64::total_cmp);
        let mse = pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64;
        total += mse.sqrt();
    }
    Ok(total / n_projections as f64)
}

fn random_direction(d: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Paired and shuffled mean squared distances between deterministic teacher
/// and student samples drawn from shared noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyScore {
    pub paired_mse: f64,
    pub random_baseline_mse: f64,
}

impl ConsistencyScore {
    pub fn ratio(&self) -> f64 {
        self.paired_mse / self.random_baseline_mse
    }
}

pub fn consistency_score(
    teacher: &ModelBundle,
    student: &ModelBundle,
    n: usize,
    seed: u64,
) -> Result<ConsistencyScore> {
    let d = teacher.net.input_dim();
    if student.net.input_dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: student.net.input_dim() });
    }
    if n < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let from_teacher = ddim_sample(teacher, noise.view())?;
    let from_student = ddim_sample(student, noise.view())?;

    let mse = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| {
                from_teacher
                    .row(i)
                    .iter()
                    .zip(from_student.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n as f64
    };
    let identity: Vec<usize> = (0..n).collect();
    let mut shuffled = identity.clone();
    shuffled.shuffle(&mut rng);
    Ok(ConsistencyScore {
        paired_mse: mse(&identity),
        random_baseline_mse: mse(&shuffled),
    })
}
