//! Numerical oracles for the chain algebra, usable against any schedule,
//! sub-sequence or checkpoint.
//!
//! Each oracle recomputes a closed-form quantity by an independent route:
//! Monte Carlo composition of single steps, Bayes' rule on a grid, numerical
//! integration of the posterior, or the textbook per-step (beta) formulas of a
//! plain T-step chain.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ndarray::Array2;

use crate::error::Result;
use crate::net::{EpsilonModel, EpsilonNet, LossNorm};
use crate::process::{
    forward_step_params, loss_weight, marginal_params, posterior_coefficients, posterior_params, reverse_params,
    step_alphas, time_input, x0_from_eps, GaussianParams,
};
use crate::schedule::{
    concentrated_subsequence, make_linear_beta_schedule, make_sigmoid_schedule, uniform_subsequence, AlphaSchedule,
    SubSequence,
};
use crate::train::ModelBundle;

/// Largest deviation of Monte Carlo moments from the closed form, in units
/// of their standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentGap {
    pub mean_se: f64,
    pub variance_se: f64,
}

impl MomentGap {
    pub fn within(&self, n_se: f64) -> bool {
        self.mean_se <= n_se && self.variance_se <= n_se
    }
}

/// Draws `x_t` by composing `t` single forward steps from `x0` and compares
/// the sample mean and variance of each coordinate against the marginal.
pub fn forward_composition_gap(
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    t: usize,
    x0: &[f64],
    draws: usize,
    seed: u64,
) -> Result<MomentGap> {
    let steps: Vec<GaussianParams> = (1..=t)
        .map(|s| forward_step_params(schedule, phi, s, &[1.0]))
        .collect::<Result<_>>()?;
    let target = marginal_params(schedule, phi, t, x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = x0.len();
    let (mut sum, mut sum_sq) = (vec![0.0; d], vec![0.0; d]);
    let mut x = vec![0.0; d];
    for _ in 0..draws {
        x.copy_from_slice(x0);
        for step in &steps {
            let (scale, sd) = (step.mean[0], step.variance.sqrt());
            for v in x.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = scale * *v + sd * z;
            }
        }
        for j in 0..d {
            let c = x[j] - target.mean[j];
            sum[j] += c;
            sum_sq[j] += c * c;
        }
    }
    let n = draws as f64;
    let var = target.variance;
    let mut gap = MomentGap { mean_se: 0.0, variance_se: 0.0 };
    for j in 0..d {
        let offset = sum[j] / n;
        let sample_var = (sum_sq[j] - n * offset * offset) / (n - 1.0);
        gap.mean_se = gap.mean_se.max(offset.abs() / (var / n).sqrt());
        gap.variance_se = gap.variance_se.max((sample_var - var).abs() / (var * (2.0 / (n - 1.0)).sqrt()));
    }
    Ok(gap)
}

/// `|mean - sqrt(a_prev) x0|` for the posterior at the noiseless point
/// `x_t = sqrt(a_t) x0`.
pub fn noiseless_posterior_gap(schedule: &AlphaSchedule, phi: &SubSequence, t: usize, x0: &[f64]) -> Result<f64> {
    let (a_t, a_prev) = step_alphas(schedule, phi, t)?;
    let x_t: Vec<f64> = x0.iter().map(|v| a_t.sqrt() * v).collect();
    let post = posterior_params(schedule, phi, t, &x_t, x0)?;
    Ok(post
        .mean
        .iter()
        .zip(x0)
        .map(|(m, v)| (m - a_prev.sqrt() * v).abs())
        .fold(0.0, f64::max))
}

fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + (2.0 * PI * var).ln())
}

/// Largest relative gap between the closed-form posterior density of a 1-D
/// chain and Bayes' rule `q(x_t | x_{t-1}) q(x_{t-1} | x0) / q(x_t | x0)` on
/// a grid spanning six posterior standard deviations. Needs `t >= 2`.
pub fn bayes_grid_gap(
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    t: usize,
    x_t: f64,
    x0: f64,
    points: usize,
) -> Result<f64> {
    let (a_t, a_prev) = step_alphas(schedule, phi, t)?;
    let post = posterior_params(schedule, phi, t, &[x_t], &[x0])?;
    let sd = post.variance.sqrt();
    let ratio = a_t / a_prev;
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let x = post.mean[0] + sd * (-6.0 + 12.0 * i as f64 / (points - 1) as f64);
        let bayes = normal_log_pdf(x_t, ratio.sqrt() * x, 1.0 - ratio)
            + normal_log_pdf(x, a_prev.sqrt() * x0, 1.0 - a_prev)
            - normal_log_pdf(x_t, a_t.sqrt() * x0, 1.0 - a_t);
        let closed = post.log_density(&[x]);
        worst = worst.max(((bayes - closed).exp() - 1.0).abs());
    }
    Ok(worst)
}

/// Relative errors of the posterior mean and variance of a 1-D chain
/// against numerical integration of likelihood times prior on a fine grid.
/// Needs `t >= 2`.
pub fn numerical_posterior_gap(
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    t: usize,
    x_t: f64,
    x0: f64,
) -> Result<(f64, f64)> {
    let (a_t, a_prev) = step_alphas(schedule, phi, t)?;
    let ratio = a_t / a_prev;
    // likelihood in x_{t-1}: N(x_t / sqrt(r), (1 - r) / r); prior: the marginal
    let (c1, v1) = (x_t / ratio.sqrt(), (1.0 - ratio) / ratio);
    let (c2, v2) = (a_prev.sqrt() * x0, 1.0 - a_prev);
    let min_sd = v1.min(v2).sqrt();
    let (lo, hi) = (c1.min(c2) - 12.0 * min_sd, c1.max(c2) + 12.0 * min_sd);
    let h = min_sd / 50.0;
    let n = (((hi - lo) / h).ceil() as usize).clamp(1000, 2_000_000);
    let h = (hi - lo) / n as f64;
    let logw: Vec<f64> = (0..=n)
        .map(|i| {
            let x = lo + h * i as f64;
            normal_log_pdf(x_t, ratio.sqrt() * x, 1.0 - ratio) + normal_log_pdf(x, c2, v2)
        })
        .collect();
    let peak = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (i, lw) in logw.iter().enumerate() {
        let x = lo + h * i as f64;
        let w = (lw - peak).exp();
        z += w;
        m1 += w * x;
        m2 += w * x * x;
    }
    let mean = m1 / z;
    let var = m2 / z - mean * mean;
    let post = posterior_params(schedule, phi, t, &[x_t], &[x0])?;
    let mean_err = (mean - post.mean[0]).abs() / post.variance.sqrt();
    let var_err = (var - post.variance).abs() / post.variance;
    Ok((mean_err, var_err))
}

/// Per-step formulas of a plain T-step chain written with
/// `beta_t = 1 - alpha_t / alpha_{t-1}`.
pub mod reference {
    use crate::schedule::AlphaSchedule;

    pub fn beta(schedule: &AlphaSchedule, t: usize) -> f64 {
        1.0 - schedule.alpha(t) / schedule.alpha(t - 1)
    }

    /// `q(x_t | x_{t-1}) = N(sqrt(1 - beta_t) x_{t-1}, beta_t)`.
    pub fn forward(schedule: &AlphaSchedule, t: usize, x_prev: f64) -> (f64, f64) {
        let b = beta(schedule, t);
        ((1.0 - b).sqrt() * x_prev, b)
    }

    /// `q(x_{t-1} | x_t, x_0)` in its usual form.
    pub fn posterior(schedule: &AlphaSchedule, t: usize, x_t: f64, x0: f64) -> (f64, f64) {
        let b = beta(schedule, t);
        let (ab, ab_prev) = (schedule.alpha(t), schedule.alpha(t - 1));
        let mean = ab_prev.sqrt() * b / (1.0 - ab) * x0 + (1.0 - b).sqrt() * (1.0 - ab_prev) / (1.0 - ab) * x_t;
        (mean, (1.0 - ab_prev) / (1.0 - ab) * b)
    }

    /// Reverse mean from a noise estimate:
    /// `(x_t - beta_t / sqrt(1 - alpha_t) eps) / sqrt(1 - beta_t)`.
    pub fn reverse_mean(schedule: &AlphaSchedule, t: usize, x_t: f64, eps: f64) -> f64 {
        let b = beta(schedule, t);
        (x_t - b / (1.0 - schedule.alpha(t)).sqrt() * eps) / (1.0 - b).sqrt()
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

/// Worst relative deviation between the sub-sequence machinery run on the
/// identity sub-sequence and the per-step reference formulas, over `points`
/// random `(t, x_t, x0)` triples of a 1-D chain. The reverse mean uses
/// `model`'s noise estimate.
pub fn identity_reference_gap<M: EpsilonModel + ?Sized>(
    model: &M,
    schedule: &AlphaSchedule,
    points: usize,
    seed: u64,
) -> Result<f64> {
    let phi = SubSequence::identity(schedule.steps());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.data_dim();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let t = rng.random_range(1..=schedule.steps());
        let x_t: Vec<f64> = (0..d).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let x0: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();

        let fwd = forward_step_params(schedule, &phi, t, &x0)?;
        let post = posterior_params(schedule, &phi, t, &x_t, &x0)?;
        let rev = reverse_params(model, schedule, &phi, t, &x_t)?;
        let eps = model.predict(&x_t, time_input(&phi, t))?;
        for j in 0..d {
            let (m, v) = reference::forward(schedule, t, x0[j]);
            worst = worst.max(rel_err(fwd.mean[j], m)).max(rel_err(fwd.variance, v));
            let (m, v) = reference::posterior(schedule, t, x_t[j], x0[j]);
            worst = worst.max(rel_err(post.mean[j], m)).max(rel_err(post.variance, v));
            let m = reference::reverse_mean(schedule, t, x_t[j], eps[j]);
            worst = worst.max(rel_err(rev.mean[j], m)).max(rel_err(rev.variance, v));
        }
    }
    Ok(worst)
}

/// Worst relative error between back-propagated gradients and central
/// finite differences (step 1e-5) over every parameter of `net`, on a random
/// batch of five samples.
pub fn gradient_check(net: &EpsilonNet, norm: LossNorm, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = net.input_dim();
    let x = Array2::from_shape_fn((5, d), |_| rng.sample::<f64, _>(StandardNormal));
    let t: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..=1.0)).collect();
    let y = Array2::from_shape_fn((5, d), |_| rng.sample::<f64, _>(StandardNormal));
    let (_, mut grads) = net.loss_and_grads(x.view(), &t, y.view(), norm)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for li in 0..net.layers().len() {
        let count = net.layers()[li].weight.len() + net.layers()[li].bias.len();
        for k in 0..count {
            let g = &mut grads.layers[li];
            let analytic = *param_mut(&mut g.weight, &mut g.bias, k);
            let orig = *param_mut_of(&mut probe, li, k);
            let mut loss_at = |v: f64| -> Result<f64> {
                *param_mut_of(&mut probe, li, k) = v;
                Ok(probe.loss_and_grads(x.view(), &t, y.view(), norm)?.0)
            };
            let numeric = (loss_at(orig + h)? - loss_at(orig - h)?) / (2.0 * h);
            loss_at(orig)?;
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Parameter `k` of a layer, counting weights row-major and then biases.
fn param_mut<'a>(weight: &'a mut Array2<f64>, bias: &'a mut ndarray::Array1<f64>, k: usize) -> &'a mut f64 {
    let n_w = weight.len();
    if k < n_w {
        let cols = weight.ncols();
        &mut weight[(k / cols, k % cols)]
    } else {
        &mut bias[k - n_w]
    }
}

fn param_mut_of(net: &mut EpsilonNet, li: usize, k: usize) -> &mut f64 {
    let layer = &mut net.layers_mut()[li];
    param_mut(&mut layer.weight, &mut layer.bias, k)
}

/// A random chain configuration for the oracles above.
#[derive(Debug, Clone)]
pub struct ChainCase {
    pub schedule: AlphaSchedule,
    pub phi: SubSequence,
    pub t: usize,
    pub x0: Vec<f64>,
}

/// `count` random cases mixing sigmoid and linear schedules, uniform and
/// concentrated sub-sequences, with `t >= min_t` and `x0` of dimension `d`.
pub fn random_cases(count: usize, d: usize, min_t: usize, max_student_steps: usize, seed: u64) -> Result<Vec<ChainCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(count);
    while cases.len() < count {
        let teacher_steps = rng.random_range(10..=400);
        let schedule = if rng.random_bool(0.5) {
            let start = rng.random_range(-5.0..-1.0);
            let end = rng.random_range(1.0..5.0);
            make_sigmoid_schedule(teacher_steps, start, end, rng.random_range(0.3..1.5))?
        } else {
            let beta1 = rng.random_range(1e-5..1e-3);
            let beta_t: f64 = rng.random_range(0.005..0.05);
            let beta_t = beta_t.max(beta1);
            make_linear_beta_schedule(teacher_steps, beta1, beta_t)?
        };
        let tp = rng.random_range(min_t.max(1)..=max_student_steps.min(teacher_steps));
        let phi = if rng.random_bool(0.5) {
            uniform_subsequence(teacher_steps, tp)?
        } else {
            match concentrated_subsequence(teacher_steps, tp, rng.random_range(0.0..0.6), 0.5, rng.random()) {
                Ok(phi) => phi,
                Err(_) => continue,
            }
        };
        let t = rng.random_range(min_t.max(1)..=tp);
        let x0 = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        cases.push(ChainCase { schedule, phi, t, x0 });
    }
    Ok(cases)
}

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// The oracle suite for a loaded checkpoint. Structural invariants are
/// enforced at load time; these checks exercise the chain algebra on the
/// checkpoint's own schedule, sub-sequence and network.
pub fn check_bundle(bundle: &ModelBundle, seed: u64) -> Result<Vec<CheckOutcome>> {
    let (schedule, phi) = (&bundle.schedule, &bundle.phi);
    let steps = phi.steps();
    let d = bundle.data_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let probe_ts: Vec<usize> = {
        let mut ts = vec![1, steps.div_ceil(2), steps];
        ts.dedup();
        ts
    };

    let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut worst = MomentGap { mean_se: 0.0, variance_se: 0.0 };
    for &t in &probe_ts {
        let g = forward_composition_gap(schedule, phi, t, &x0, 50_000, rng.random())?;
        worst.mean_se = worst.mean_se.max(g.mean_se);
        worst.variance_se = worst.variance_se.max(g.variance_se);
    }
    out.push(outcome(
        "forward-composition",
        worst.within(4.0),
        format!("mean {:.2} SE, variance {:.2} SE (limit 4)", worst.mean_se, worst.variance_se),
    ));

    let mut gap: f64 = 0.0;
    for t in 1..=steps {
        gap = gap.max(noiseless_posterior_gap(schedule, phi, t, &x0)?);
    }
    out.push(outcome("posterior-noiseless-point", gap <= 1e-12, format!("max error {gap:.3e}")));

    let mut gap: f64 = 0.0;
    let mut var_ok = true;
    for t in 1..=steps {
        let c = posterior_coefficients(schedule, phi, t)?;
        var_ok &= c.variance.is_finite() && (c.variance > 0.0 || t == 1);
        if t >= 2 {
            let x_t = rng.random_range(-3.0..3.0);
            gap = gap.max(bayes_grid_gap(schedule, phi, t, x_t, x0[0], 101)?);
        }
    }
    out.push(outcome(
        "posterior-bayes-grid",
        gap <= 1e-8 && var_ok,
        format!("max relative density gap {gap:.3e}"),
    ));

    let mut gap: f64 = 0.0;
    for t in 1..=steps {
        let a_t = schedule.alpha(phi.get(t));
        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let x_t: Vec<f64> = x0.iter().zip(&eps).map(|(x, e)| a_t.sqrt() * x + (1.0 - a_t).sqrt() * e).collect();
        let back = x0_from_eps(a_t, &x_t, &eps);
        let scale = 1.0 / a_t.sqrt();
        for (b, x) in back.iter().zip(&x0) {
            gap = gap.max((b - x).abs() / scale);
        }
    }
    out.push(outcome("predictor-inversion", gap <= 1e-12, format!("max scaled error {gap:.3e}")));

    let mut finite = true;
    for t in 1..=steps {
        let x_t: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let rev = reverse_params(&bundle.net, schedule, phi, t, &x_t)?;
        finite &= rev.mean.iter().all(|v| v.is_finite()) && rev.variance.is_finite();
    }
    out.push(outcome("reverse-finite", finite, format!("{steps} steps probed")));

    let weights: Vec<f64> = (1..=steps).map(|t| loss_weight(schedule, phi, t)).collect::<Result<_>>()?;
    let ok = weights.iter().all(|w| w.is_finite() && *w > 0.0);
    out.push(outcome("loss-weights", ok, format!("{steps} weights positive and finite")));

    if phi.is_identity() {
        let gap = identity_reference_gap(&bundle.net, schedule, 1000, rng.random())?;
        out.push(outcome("reference-formulas", gap <= 1e-10, format!("max relative error {gap:.3e}")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, ArrayView2};

    struct Linear;

    impl EpsilonModel for Linear {
        fn data_dim(&self) -> usize {
            1
        }
        fn predict_batch(&self, x: ArrayView2<'_, f64>, t: &[f64]) -> Result<Array2<f64>> {
            Ok(Array2::from_shape_fn(x.dim(), |(i, j)| 0.3 * x[[i, j]] - t[i]))
        }
    }

    #[test]
    fn composition_matches_marginal() {
        for case in random_cases(4, 2, 1, 30, 5).unwrap() {
            let g = forward_composition_gap(&case.schedule, &case.phi, case.t, &case.x0, 40_000, 1).unwrap();
            assert!(g.within(4.0), "{g:?}");
        }
    }

    #[test]
    fn posterior_oracles_agree() {
        for case in random_cases(20, 1, 2, 60, 9).unwrap() {
            let (s, p, t, x0) = (&case.schedule, &case.phi, case.t, case.x0[0]);
            assert!(noiseless_posterior_gap(s, p, t, &case.x0).unwrap() < 1e-12);
            let x_t = 0.7 - x0;
            assert!(bayes_grid_gap(s, p, t, x_t, x0, 201).unwrap() < 1e-8);
            let (m, v) = numerical_posterior_gap(s, p, t, x_t, x0).unwrap();
            assert!(m < 1e-3 && v < 1e-3, "{m} {v}");
        }
    }

    #[test]
    fn reference_formulas_match_identity_chain() {
        let s = make_linear_beta_schedule(200, 1e-4, 0.02).unwrap();
        assert!(identity_reference_gap(&Linear, &s, 500, 3).unwrap() < 1e-10);
        let s = make_sigmoid_schedule(300, -4.0, 4.0, 0.8).unwrap();
        assert!(identity_reference_gap(&Linear, &s, 500, 4).unwrap() < 1e-10);
    }

    #[test]
    fn random_cases_respect_bounds() {
        for c in random_cases(30, 3, 2, 25, 1).unwrap() {
            assert!(c.t >= 2 && c.t <= c.phi.steps() && c.phi.steps() <= 25);
            assert_eq!(c.x0.len(), 3);
            assert_eq!(c.phi.teacher_steps(), c.schedule.steps());
        }
    }
}
