//! Closed-form Gaussian math of the teacher and student chains.
//!
//! Every function takes the teacher schedule and a sub-sequence `phi` and
//! works on a student step `t ∈ 1..=T'`, with `a_t = alpha[phi[t]]` and
//! `a_prev = alpha[phi[t-1]]`. Passing the identity sub-sequence gives the
//! teacher's own quantities.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::net::EpsilonModel;
use crate::schedule::{AlphaSchedule, SubSequence};

/// Isotropic Gaussian `N(mean, variance · I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl GaussianParams {
    /// Log density at `x`. Requires a positive variance.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len() as f64;
        let sq: f64 = x.iter().zip(&self.mean).map(|(a, m)| (a - m) * (a - m)).sum();
        -0.5 * (sq / self.variance + d * (2.0 * std::f64::consts::PI * self.variance).ln())
    }
}

/// `(a_t, a_prev)` for student step `t`.
pub fn step_alphas(schedule: &AlphaSchedule, phi: &SubSequence, t: usize) -> Result<(f64, f64)> {
    check_pair(schedule, phi)?;
    if t == 0 || t > phi.steps() {
        return Err(Error::StepOutOfRange { t, max: phi.steps() });
    }
    Ok((schedule.alpha(phi.get(t)), schedule.alpha(phi.get(t - 1))))
}

fn check_pair(schedule: &AlphaSchedule, phi: &SubSequence) -> Result<()> {
    if phi.teacher_steps() != schedule.steps() {
        return Err(Error::invalid(format!(
            "sub-sequence ends at {} but schedule has T = {}",
            phi.teacher_steps(),
            schedule.steps()
        )));
    }
    Ok(())
}

/// Time input fed to the network at student step `t`: `t / T'`. Equals
/// `phi[t] / T` on the identity sub-sequence.
pub fn time_input(phi: &SubSequence, t: usize) -> f64 {
    t as f64 / phi.steps() as f64
}

/// Time input the teacher sees for the teacher step matched to student step
/// `t`: `phi[t] / T`.
pub fn teacher_time_input(phi: &SubSequence, t: usize) -> f64 {
    phi.get(t) as f64 / phi.teacher_steps() as f64
}

/// `q'(x_t | x_{t-1}) = N(sqrt(a_t/a_prev) x_{t-1}, (1 - a_t/a_prev) I)`.
pub fn forward_step_params(
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    t: usize,
    x_prev: &[f64],
) -> Result<GaussianParams> {
    let (a_t, a_prev) = step_alphas(schedule, phi, t)?;
    let ratio = a_t / a_prev;
    Ok(GaussianParams {
        mean: x_prev.iter().map(|v| ratio.sqrt() * v).collect(),
        variance: 1.0 - ratio,
    })
}

/// `q'(x_t | x_0) = N(sqrt(a_t) x_0, (1 - a_t) I)` for `t ∈ 0..=T'`.
pub fn marginal_params(
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    t: usize,
    x0: &[f64],
) -> Result<GaussianParams> {
    check_pair(schedule, phi)?;
    if t > phi.steps() {
        return Err(Error::StepOutOfRange { t, max: phi.steps() });
    }
    let a_t = schedule.alpha(phi.get(t));
    Ok(GaussianParams {
        mean: x0.iter().map(|v| a_t.sqrt() * v).collect(),
        variance: 1.0 - a_t,
    })
}

/// Coefficients of the forward-process posterior
/// `q'(x_{t-1} | x_t, x_0) = N(x_t_coef · x_t + x0_coef · x_0, variance · I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCoefficients {
    pub x_t_coef: f64,
    pub x0_coef: f64,
    pub variance: f64,
}

pub fn posterior_coefficients(
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    t: usize,
) -> Result<PosteriorCoefficients> {
    let (a_t, a_prev) = step_alphas(schedule, phi, t)?;
    if a_t >= 1.0 {
        return Err(Error::DegenerateStep { t });
    }
    let denom = 1.0 - a_t;
    Ok(PosteriorCoefficients {
        x_t_coef: (1.0 - a_prev) * a_t.sqrt() / (denom * a_prev.sqrt()),
        x0_coef: (a_prev - a_t) / (denom * a_prev.sqrt()),
        variance: (1.0 - a_prev) * (a_prev - a_t) / (denom * a_prev),
    })
}

pub fn posterior_params(
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    t: usize,
    x_t: &[f64],
    x0: &[f64],
) -> Result<GaussianParams> {
    if x_t.len() != x0.len() {
        return Err(Error::DimensionMismatch { expected: x_t.len(), got: x0.len() });
    }
    let c = posterior_coefficients(schedule, phi, t)?;
    Ok(GaussianParams {
        mean: x_t.iter().zip(x0).map(|(xt, x0)| c.x_t_coef * xt + c.x0_coef * x0).collect(),
        variance: c.variance,
    })
}

/// `(x_t - sqrt(1 - a_t) eps) / sqrt(a_t)`.
pub fn x0_from_eps(a_t: f64, x_t: &[f64], eps: &[f64]) -> Vec<f64> {
    let (s, n) = (a_t.sqrt(), (1.0 - a_t).sqrt());
    x_t.iter().zip(eps).map(|(x, e)| (x - n * e) / s).collect()
}

/// Network estimate of `x_0` from `x_t`.
pub fn predict_x0<M: EpsilonModel + ?Sized>(
    model: &M,
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    t: usize,
    x_t: &[f64],
) -> Result<Vec<f64>> {
    let (a_t, _) = step_alphas(schedule, phi, t)?;
    let eps = model.predict(x_t, time_input(phi, t))?;
    Ok(x0_from_eps(a_t, x_t, &eps))
}

/// `p'(x_{t-1} | x_t)`: the posterior with `x_0` replaced by the network's
/// estimate.
pub fn reverse_params<M: EpsilonModel + ?Sized>(
    model: &M,
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    t: usize,
    x_t: &[f64],
) -> Result<GaussianParams> {
    let x0 = predict_x0(model, schedule, phi, t, x_t)?;
    posterior_params(schedule, phi, t, x_t, &x0)
}

/// Deterministic update
/// `x_{t-1} = sqrt(a_prev) · x0_hat + sqrt(1 - a_prev) · eps_hat`.
pub fn ddim_step<M: EpsilonModel + ?Sized>(
    model: &M,
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    t: usize,
    x_t: &[f64],
) -> Result<Vec<f64>> {
    let (a_t, a_prev) = step_alphas(schedule, phi, t)?;
    let eps = model.predict(x_t, time_input(phi, t))?;
    let x0 = x0_from_eps(a_t, x_t, &eps);
    Ok(x0
        .iter()
        .zip(&eps)
        .map(|(x, e)| a_prev.sqrt() * x + (1.0 - a_prev).sqrt() * e)
        .collect())
}

/// Batched `predict_x0`; also returns the noise estimate.
pub(crate) fn predict_x0_batch<M: EpsilonModel + ?Sized>(
    model: &M,
    a_t: f64,
    t_norm: f64,
    x_t: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let times = vec![t_norm; x_t.nrows()];
    let eps = model.predict_batch(x_t, &times)?;
    if eps.dim() != x_t.dim() {
        return Err(Error::DimensionMismatch { expected: x_t.ncols(), got: eps.ncols() });
    }
    let (s, n) = (a_t.sqrt(), (1.0 - a_t).sqrt());
    let mut x0 = Array2::zeros(x_t.raw_dim());
    Zip::from(&mut x0)
        .and(&x_t)
        .and(&eps)
        .for_each(|o, &x, &e| *o = (x - n * e) / s);
    Ok((x0, eps))
}

/// Per-step weight of the variational bound in front of `‖eps - eps_hat‖²`:
/// `(a_prev - a_t)² / (2 v a_t a_prev (1 - a_t))` with `v` the posterior
/// variance. When `v = 0` (first step, `a_prev = 1`) the forward-step
/// variance `1 - a_t/a_prev` is used instead.
pub fn loss_weight(schedule: &AlphaSchedule, phi: &SubSequence, t: usize) -> Result<f64> {
    let (a_t, a_prev) = step_alphas(schedule, phi, t)?;
    let c = posterior_coefficients(schedule, phi, t)?;
    let v = if c.variance > 0.0 { c.variance } else { 1.0 - a_t / a_prev };
    Ok((a_prev - a_t).powi(2) / (2.0 * v * a_t * a_prev * (1.0 - a_t)))
}
