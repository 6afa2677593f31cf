//! Teacher noise schedules and student step sub-sequences.
//!
//! An [`AlphaSchedule`] holds the cumulative signal levels `alpha[1..=T]` of a
//! T-step forward chain, with `alpha[0] = 1` stored explicitly so that step
//! arithmetic never needs a special case at the start of the chain. A
//! [`SubSequence`] picks which of those teacher steps a shorter student chain
//! visits.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Floor applied to every sigmoid-schedule value.
pub const SIGMOID_ALPHA_MIN: f64 = 1e-5;
/// Values are kept at most `1 - SIGMOID_ALPHA_GAP`.
pub const SIGMOID_ALPHA_GAP: f64 = 1e-12;
/// Per-step decrement used to break plateaus left behind by clamping.
const PLATEAU_STEP: f64 = 1e-12;

/// Decreasing cumulative signal levels of a T-step diffusion chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSchedule {
    // Index 0 is the implicit `alpha[0] = 1`.
    alpha: Vec<f64>,
}

impl AlphaSchedule {
    /// Builds a schedule from `alpha[1..=T]`, checking every invariant.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        let mut alpha = Vec::with_capacity(values.len() + 1);
        alpha.push(1.0);
        alpha.extend(values);
        validate_alpha(&alpha)?;
        Ok(Self { alpha })
    }

    /// Skips validation; lets tests build flat or otherwise invalid chains.
    #[cfg(test)]
    pub(crate) fn from_raw_unchecked(values: Vec<f64>) -> Self {
        let mut alpha = vec![1.0];
        alpha.extend(values);
        Self { alpha }
    }

    /// Teacher step count T.
    pub fn steps(&self) -> usize {
        self.alpha.len() - 1
    }

    /// `alpha[t]` for `t` in `0..=T`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    /// `alpha[1..=T]`, i.e. without the implicit leading 1.
    pub fn values(&self) -> &[f64] {
        &self.alpha[1..]
    }
}

fn validate_alpha(alpha: &[f64]) -> Result<()> {
    for (t, &a) in alpha.iter().enumerate().skip(1) {
        if !a.is_finite() || a <= 0.0 || a > 1.0 {
            return Err(Error::schema(format!(
                "alpha[{t}] = {a} violates range (0, 1]"
            )));
        }
        if a >= alpha[t - 1] {
            return Err(Error::schema(format!(
                "alpha must be strictly decreasing: alpha[{t}] = {a} >= alpha[{}] = {}",
                t - 1,
                alpha[t - 1]
            )));
        }
    }
    Ok(())
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Normalized-logistic schedule.
///
/// `alpha[t] = (sig(-(t/T·(end-start)+start)/tau) - sig(-end/tau)) / (sig(-start/tau) - sig(-end/tau))`,
/// clamped to `[SIGMOID_ALPHA_MIN, 1 - SIGMOID_ALPHA_GAP]`. If clamping leaves
/// a plateau, every `alpha[t]` is lowered by `t·1e-12`.
pub fn make_sigmoid_schedule(steps: usize, start: f64, end: f64, tau: f64) -> Result<AlphaSchedule> {
    if steps < 2 {
        return Err(Error::invalid(format!("sigmoid schedule needs T >= 2, got {steps}")));
    }
    if !(start < end) || !start.is_finite() || !end.is_finite() {
        return Err(Error::invalid(format!("need start < end, got start={start}, end={end}")));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    let v_start = logistic(-start / tau);
    let v_end = logistic(-end / tau);
    let mut values: Vec<f64> = (1..=steps)
        .map(|t| {
            let s = t as f64 / steps as f64;
            let raw = (logistic(-(s * (end - start) + start) / tau) - v_end) / (v_start - v_end);
            raw.clamp(SIGMOID_ALPHA_MIN, 1.0 - SIGMOID_ALPHA_GAP)
        })
        .collect();

    let has_plateau = std::iter::once(1.0)
        .chain(values.iter().copied())
        .zip(values.iter())
        .any(|(prev, &cur)| cur >= prev);
    if has_plateau {
        for (i, a) in values.iter_mut().enumerate() {
            *a -= (i + 1) as f64 * PLATEAU_STEP;
        }
    }
    AlphaSchedule::from_values(values)
        .map_err(|e| Error::invalid(format!("sigmoid schedule is degenerate for T={steps}: {e}")))
}

/// Linear-beta schedule: `beta` interpolates `beta1..=beta_t` over `1..=T` and
/// `alpha[t] = prod_{s<=t} (1 - beta[s])`.
pub fn make_linear_beta_schedule(steps: usize, beta1: f64, beta_t: f64) -> Result<AlphaSchedule> {
    if steps == 0 {
        return Err(Error::invalid("linear schedule needs T >= 1"));
    }
    if !(0.0 < beta1 && beta1 <= beta_t && beta_t < 1.0) {
        return Err(Error::invalid(format!(
            "need 0 < beta1 <= betaT < 1, got beta1={beta1}, betaT={beta_t}"
        )));
    }
    let mut values = Vec::with_capacity(steps);
    let mut prod = 1.0;
    for t in 1..=steps {
        let beta = if steps == 1 {
            beta1
        } else {
            beta1 + (beta_t - beta1) * (t - 1) as f64 / (steps - 1) as f64
        };
        prod *= 1.0 - beta;
        values.push(prod);
    }
    AlphaSchedule::from_values(values)
}

/// Increasing student-to-teacher step map `phi[0] = 0 < ... < phi[T'] = T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubSequence {
    phi: Vec<usize>,
}

impl SubSequence {
    /// Validates `phi` against a teacher with `teacher_steps` steps.
    pub fn new(phi: Vec<usize>, teacher_steps: usize) -> Result<Self> {
        if phi.len() < 2 {
            return Err(Error::schema(format!(
                "sub-sequence needs at least 2 entries (T' >= 1), got {}",
                phi.len()
            )));
        }
        if phi[0] != 0 {
            return Err(Error::schema(format!("sub-sequence must start at 0, got phi[0] = {}", phi[0])));
        }
        let last = *phi.last().unwrap();
        if last != teacher_steps {
            return Err(Error::schema(format!(
                "sub-sequence must end at T = {teacher_steps}, got phi[T'] = {last}"
            )));
        }
        if let Some(i) = phi.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::schema(format!(
                "sub-sequence must be strictly increasing: phi[{}] = {} >= phi[{}] = {}",
                i,
                phi[i],
                i + 1,
                phi[i + 1]
            )));
        }
        Ok(Self { phi })
    }

    /// `0, 1, ..., T`: the teacher's own chain.
    pub fn identity(teacher_steps: usize) -> Self {
        Self {
            phi: (0..=teacher_steps).collect(),
        }
    }

    /// Student step count T'.
    pub fn steps(&self) -> usize {
        self.phi.len() - 1
    }

    /// Teacher step count T (the last entry).
    pub fn teacher_steps(&self) -> usize {
        *self.phi.last().unwrap()
    }

    pub fn get(&self, t: usize) -> usize {
        self.phi[t]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.phi
    }

    pub fn is_identity(&self) -> bool {
        self.phi.iter().enumerate().all(|(i, &p)| i == p)
    }
}

/// Evenly spaced sub-sequence `phi[t] = round(t·T/T')`.
pub fn uniform_subsequence(teacher_steps: usize, student_steps: usize) -> Result<SubSequence> {
    if student_steps == 0 || student_steps > teacher_steps {
        return Err(Error::invalid(format!(
            "need 1 <= T' <= T, got T={teacher_steps}, T'={student_steps}"
        )));
    }
    let mut phi = Vec::with_capacity(student_steps + 1);
    phi.push(0);
    for t in 1..student_steps {
        // round-half-up of t*T/T' in integer arithmetic
        let mut p = (2 * t * teacher_steps + student_steps) / (2 * student_steps);
        let prev = *phi.last().unwrap();
        if p <= prev {
            p = prev + 1;
        }
        phi.push(p);
    }
    phi.push(teacher_steps);
    SubSequence::new(phi, teacher_steps)
}

/// Sub-sequence with `round(fraction·T')` interior steps drawn from a window of
/// relative half-width `window` around `T/2`, and the remaining interior steps
/// drawn uniformly from the rest of `1..T`. `fraction = 0` gives the scattered
/// layout.
pub fn concentrated_subsequence(
    teacher_steps: usize,
    student_steps: usize,
    fraction: f64,
    window: f64,
    seed: u64,
) -> Result<SubSequence> {
    if student_steps == 0 || student_steps > teacher_steps {
        return Err(Error::invalid(format!(
            "need 1 <= T' <= T, got T={teacher_steps}, T'={student_steps}"
        )));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("fraction must be in [0, 1], got {fraction}")));
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::invalid(format!("window must be in (0, 1], got {window}")));
    }
    let interior = student_steps - 1;
    let concentrated = ((fraction * student_steps as f64).round() as usize).min(interior);

    let half = teacher_steps as f64 / 2.0;
    let lo = ((half * (1.0 - window)).ceil() as usize).max(1);
    let hi = ((half * (1.0 + window)).floor() as usize).min(teacher_steps.saturating_sub(1));
    let in_window: Vec<usize> = if lo <= hi { (lo..=hi).collect() } else { Vec::new() };
    if in_window.len() < concentrated {
        return Err(Error::invalid(format!(
            "window [{lo}, {hi}] holds {} steps, cannot place {concentrated}",
            in_window.len()
        )));
    }
    let outside: Vec<usize> = (1..teacher_steps)
        .filter(|s| !(lo..=hi).contains(s) || concentrated == 0)
        .collect();
    let scattered = interior - concentrated;
    if outside.len() < scattered {
        return Err(Error::invalid(format!(
            "only {} steps outside the window, cannot place {scattered}",
            outside.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, in_window.len(), concentrated)
        .into_iter()
        .map(|i| in_window[i])
        .collect();
    picked.extend(
        index::sample(&mut rng, outside.len(), scattered)
            .into_iter()
            .map(|i| outside[i]),
    );
    picked.sort_unstable();

    let mut phi = Vec::with_capacity(student_steps + 1);
    phi.push(0);
    phi.extend(picked);
    phi.push(teacher_steps);
    SubSequence::new(phi, teacher_steps)
}
