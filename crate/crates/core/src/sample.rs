//! Ancestral and deterministic sampling, and noise interpolation.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net::EpsilonModel;
use crate::process::{posterior_coefficients, predict_x0_batch, step_alphas, time_input};
use crate::schedule::{AlphaSchedule, SubSequence};
use crate::train::ModelBundle;

/// How the reverse-step variance scales the injected noise.
///
/// `StdDev` multiplies the unit draw by the square root of the posterior
/// variance, which makes each step an exact draw from the reverse Gaussian.
/// `Raw` multiplies by the variance itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseScale {
    #[default]
    StdDev,
    Raw,
}

impl NoiseScale {
    fn factor(self, variance: f64) -> f64 {
        match self {
            NoiseScale::StdDev => variance.sqrt(),
            NoiseScale::Raw => variance,
        }
    }
}

impl FromStr for NoiseScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stddev" => Ok(NoiseScale::StdDev),
            "raw" => Ok(NoiseScale::Raw),
            other => Err(Error::invalid(format!("unknown noise scale {other:?} (want stddev|raw)"))),
        }
    }
}

impl fmt::Display for NoiseScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseScale::StdDev => "stddev",
            NoiseScale::Raw => "raw",
        })
    }
}

/// Random stream of chain `chain` under `seed`. Chains never share draws, so
/// chain `i` produces the same sample whatever `n` is.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn check_model<M: EpsilonModel + ?Sized>(model: &M, schedule: &AlphaSchedule, phi: &SubSequence) -> Result<()> {
    if phi.teacher_steps() != schedule.steps() {
        return Err(Error::invalid(format!(
            "sub-sequence ends at {} but the schedule has T = {}",
            phi.teacher_steps(),
            schedule.steps()
        )));
    }
    if model.data_dim() == 0 {
        return Err(Error::invalid("model has zero data dimension"));
    }
    Ok(())
}

/// Runs the reverse chain from `x` (the state at step T'). `noise(t, z)` must
/// fill `z` with unit Gaussian draws for the step `t -> t-1`; it is never
/// called for `t = 1`, whose output is the posterior mean.
fn reverse_chain<M, F>(
    model: &M,
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    mut x: Array2<f64>,
    scale: NoiseScale,
    mut noise: F,
) -> Result<Array2<f64>>
where
    M: EpsilonModel + ?Sized,
    F: FnMut(usize, &mut Array2<f64>),
{
    let mut z = Array2::zeros(x.raw_dim());
    for t in (1..=phi.steps()).rev() {
        let (a_t, _) = step_alphas(schedule, phi, t)?;
        let c = posterior_coefficients(schedule, phi, t)?;
        let (x0, _) = predict_x0_batch(model, a_t, time_input(phi, t), x.view())?;
        let mut next = Array2::zeros(x.raw_dim());
        Zip::from(&mut next)
            .and(&x)
            .and(&x0)
            .for_each(|o, &xt, &x0| *o = c.x_t_coef * xt + c.x0_coef * x0);
        if t > 1 {
            noise(t, &mut z);
            let f = scale.factor(c.variance);
            next.scaled_add(f, &z);
        }
        x = next;
    }
    Ok(x)
}

/// `n` samples from the bundle's chain with per-chain streams derived from
/// `seed`.
pub fn ancestral_sample(bundle: &ModelBundle, n: usize, seed: u64) -> Result<Array2<f64>> {
    ancestral_sample_with(&bundle.net, &bundle.schedule, &bundle.phi, n, seed, NoiseScale::StdDev)
}

pub fn ancestral_sample_with<M: EpsilonModel + ?Sized>(
    model: &M,
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    n: usize,
    seed: u64,
    scale: NoiseScale,
) -> Result<Array2<f64>> {
    check_model(model, schedule, phi)?;
    let d = model.data_dim();
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| chain_rng(seed, i)).collect();
    let init = Array2::from_shape_fn((n, d), |(i, _)| rngs[i].sample(StandardNormal));
    reverse_chain(model, schedule, phi, init, scale, |_, z| {
        for (mut row, rng) in z.rows_mut().into_iter().zip(rngs.iter_mut()) {
            row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        }
    })
}

/// Deterministic sampling from given terminal noise, one row per chain.
pub fn ddim_sample(bundle: &ModelBundle, init_noise: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    ddim_sample_with(&bundle.net, &bundle.schedule, &bundle.phi, init_noise)
}

pub fn ddim_sample_with<M: EpsilonModel + ?Sized>(
    model: &M,
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    init_noise: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    check_model(model, schedule, phi)?;
    if init_noise.ncols() != model.data_dim() {
        return Err(Error::DimensionMismatch { expected: model.data_dim(), got: init_noise.ncols() });
    }
    let mut x = init_noise.to_owned();
    for t in (1..=phi.steps()).rev() {
        let (a_t, a_prev) = step_alphas(schedule, phi, t)?;
        let (x0, eps) = predict_x0_batch(model, a_t, time_input(phi, t), x.view())?;
        let (s, n) = (a_prev.sqrt(), (1.0 - a_prev).sqrt());
        Zip::from(&mut x)
            .and(&x0)
            .and(&eps)
            .for_each(|o, &x0, &e| *o = s * x0 + n * e);
    }
    Ok(x)
}

/// Noise vectors between two endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolation {
    /// One row per interpolant; the first and last rows are the endpoints.
    pub points: Array2<f64>,
    /// Set when the endpoints were antiparallel or zero, so the angle was
    /// undefined and linear interpolation was used instead.
    pub linear_fallback: bool,
}

const ANGLE_TOL: f64 = 1e-9;

/// Spherical interpolation at `k` evenly spaced fractions in `[0, 1]`.
pub fn interpolate_noises(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, k: usize) -> Result<Interpolation> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if k < 2 {
        return Err(Error::invalid(format!("need k >= 2 interpolants, got {k}")));
    }
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    let cos = if na > 0.0 && nb > 0.0 { (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0) } else { f64::NAN };
    let theta = cos.acos();
    let linear_fallback = !(theta.is_finite() && theta < std::f64::consts::PI - ANGLE_TOL);
    let mut points = Array2::zeros((k, a.len()));
    for (i, mut row) in points.rows_mut().into_iter().enumerate() {
        let s = i as f64 / (k - 1) as f64;
        let (wa, wb) = if linear_fallback || theta < ANGLE_TOL {
            (1.0 - s, s)
        } else {
            let sin = theta.sin();
            (((1.0 - s) * theta).sin() / sin, (s * theta).sin() / sin)
        };
        Zip::from(&mut row).and(&a).and(&b).for_each(|o, &x, &y| *o = wa * x + wb * y);
    }
    points.row_mut(0).assign(&a);
    points.row_mut(k - 1).assign(&b);
    Ok(Interpolation { points, linear_fallback })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{make_sigmoid_schedule, uniform_subsequence};
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    /// Predicts the noise that maps `x_t` to a fixed point `c` at every step.
    struct Delta {
        c: Vec<f64>,
        schedule: AlphaSchedule,
        phi: SubSequence,
    }

    impl EpsilonModel for Delta {
        fn data_dim(&self) -> usize {
            self.c.len()
        }
        fn predict_batch(&self, x: ArrayView2<'_, f64>, t: &[f64]) -> Result<Array2<f64>> {
            let mut out = Array2::zeros(x.dim());
            for (i, row) in x.rows().into_iter().enumerate() {
                let step = (t[i] * self.phi.steps() as f64).round() as usize;
                let a = self.schedule.alpha(self.phi.get(step));
                for j in 0..row.len() {
                    out[[i, j]] = (row[j] - a.sqrt() * self.c[j]) / (1.0 - a).sqrt();
                }
            }
            Ok(out)
        }
    }

    fn delta(t: usize, tp: usize) -> Delta {
        Delta {
            c: vec![0.7, -1.3],
            schedule: make_sigmoid_schedule(t, -3.0, 3.0, 1.0).unwrap(),
            phi: uniform_subsequence(t, tp).unwrap(),
        }
    }

    #[test]
    fn delta_model_collapses_both_samplers() {
        let m = delta(200, 17);
        for scale in [NoiseScale::StdDev, NoiseScale::Raw] {
            let out = ancestral_sample_with(&m, &m.schedule, &m.phi, 50, 3, scale).unwrap();
            for row in out.rows() {
                assert!((row[0] - 0.7).abs() < 1e-9 && (row[1] + 1.3).abs() < 1e-9, "{row}");
            }
        }
        let noise = Array2::from_shape_fn((20, 2), |(i, j)| i as f64 - 3.0 * j as f64);
        let out = ddim_sample_with(&m, &m.schedule, &m.phi, noise.view()).unwrap();
        for row in out.rows() {
            assert!((row[0] - 0.7).abs() < 1e-9 && (row[1] + 1.3).abs() < 1e-9);
        }
    }

    #[test]
    fn last_step_draws_no_noise() {
        let m = delta(50, 5);
        let init = Array2::zeros((3, 2));
        let mut calls = Vec::new();
        reverse_chain(&m, &m.schedule, &m.phi, init, NoiseScale::StdDev, |t, z| {
            calls.push(t);
            z.fill(1.0);
        })
        .unwrap();
        assert_eq!(calls, vec![5, 4, 3, 2]);
    }

    #[test]
    fn chains_are_independent_of_batch_size() {
        let m = delta(60, 6);
        // a zero-noise predictor keeps the chains stochastic
        struct ZeroEps;
        impl EpsilonModel for ZeroEps {
            fn data_dim(&self) -> usize {
                2
            }
            fn predict_batch(&self, x: ArrayView2<'_, f64>, _t: &[f64]) -> Result<Array2<f64>> {
                Ok(Array2::zeros(x.dim()))
            }
        }
        let small = ancestral_sample_with(&ZeroEps, &m.schedule, &m.phi, 3, 9, NoiseScale::StdDev).unwrap();
        let big = ancestral_sample_with(&ZeroEps, &m.schedule, &m.phi, 10, 9, NoiseScale::StdDev).unwrap();
        assert_eq!(small, big.slice(ndarray::s![..3, ..]));
        let other = ancestral_sample_with(&ZeroEps, &m.schedule, &m.phi, 3, 10, NoiseScale::StdDev).unwrap();
        assert_ne!(small, other);
    }

    #[test]
    fn ddim_rejects_wrong_width() {
        let m = delta(20, 4);
        let bad = Array2::zeros((2, 3));
        assert!(matches!(
            ddim_sample_with(&m, &m.schedule, &m.phi, bad.view()),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn interpolation_endpoints_and_fallback() {
        let a = array![1.0, 2.0, -0.5];
        let b = array![-0.3, 0.4, 2.0];
        let r = interpolate_noises(a.view(), b.view(), 7).unwrap();
        assert!(!r.linear_fallback);
        assert_eq!(r.points.row(0), a);
        assert_eq!(r.points.row(6), b);

        let r = interpolate_noises(a.view(), (-&a).view(), 5).unwrap();
        assert!(r.linear_fallback);
        assert_eq!(r.points.row(2), Array1::<f64>::zeros(3));

        let r = interpolate_noises(a.view(), a.view(), 4).unwrap();
        assert!(!r.linear_fallback);
        for row in r.points.rows() {
            assert!((&row - &a).iter().all(|d| d.abs() < 1e-15));
        }
        assert!(interpolate_noises(a.view(), b.view(), 1).is_err());
        assert!(interpolate_noises(a.view(), array![1.0].view(), 3).is_err());
    }

    proptest! {
        #[test]
        fn slerp_preserves_equal_norms(
            a in prop::collection::vec(-3.0f64..3.0, 4),
            b in prop::collection::vec(-3.0f64..3.0, 4),
            k in 2usize..12,
        ) {
            let a = Array1::from(a);
            let mut b = Array1::from(b);
            let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
            prop_assume!(na > 1e-3 && nb > 1e-3);
            b *= na / nb;
            let r = interpolate_noises(a.view(), b.view(), k).unwrap();
            prop_assume!(!r.linear_fallback);
            for row in r.points.rows() {
                let n = row.dot(&row).sqrt();
                prop_assert!((n - na).abs() < 1e-9 * na.max(1.0));
            }
        }
    }
}
