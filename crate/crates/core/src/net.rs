//! Noise-prediction MLP with a sinusoidal time embedding, hand-written
//! reverse-mode gradients and an Adam optimizer.
//!
//! The network maps `(x, t_norm)` to a vector of the same dimension as `x`.
//! Time enters as `time_embed_dim` sinusoidal features of `t_norm ∈ [0, 1]`
//! concatenated to `x`, so the same architecture serves a teacher with T steps
//! and a student with T' steps.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Something that predicts the noise component of a noised sample.
///
/// Implemented by [`EpsilonNet`]; tests and oracles supply their own.
pub trait EpsilonModel {
    fn data_dim(&self) -> usize;

    /// Evaluates one row of `x` per entry of `t_norm`.
    fn predict_batch(&self, x: ArrayView2<'_, f64>, t_norm: &[f64]) -> Result<Array2<f64>>;

    fn predict(&self, x: &[f64], t_norm: f64) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|_| Error::DimensionMismatch { expected: self.data_dim(), got: x.len() })?;
        Ok(self.predict_batch(view, &[t_norm])?.into_raw_vec_and_offset().0)
    }
}

impl<M: EpsilonModel + ?Sized> EpsilonModel for &M {
    fn data_dim(&self) -> usize {
        (**self).data_dim()
    }

    fn predict_batch(&self, x: ArrayView2<'_, f64>, t_norm: &[f64]) -> Result<Array2<f64>> {
        (**self).predict_batch(x, t_norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `z · sigmoid(1.702 z)`
    SmoothGated,
    Tanh,
}

const GATE_SLOPE: f64 = 1.702;

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::SmoothGated => z * sigmoid(GATE_SLOPE * z),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::SmoothGated => {
                let s = sigmoid(GATE_SLOPE * z);
                s + GATE_SLOPE * z * s * (1.0 - s)
            }
            Activation::Tanh => {
                let th = z.tanh();
                1.0 - th * th
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::SmoothGated => "smooth-gated",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth-gated" => Ok(Activation::SmoothGated),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossNorm {
    /// Sum of absolute differences per sample.
    L1,
    /// Squared Euclidean distance per sample.
    L2,
}

impl FromStr for LossNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(LossNorm::L1),
            "l2" => Ok(LossNorm::L2),
            other => Err(Error::invalid(format!("unknown loss norm {other:?} (want l1|l2)"))),
        }
    }
}

impl fmt::Display for LossNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossNorm::L1 => "l1",
            LossNorm::L2 => "l2",
        })
    }
}

/// One dense layer: `out = weight · in + bias`, with `weight` stored
/// `out × in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Self {
        Layer {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

/// Parameter-shaped gradient values, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonNet {
    input_dim: usize,
    time_embed_dim: usize,
    hidden_widths: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
}

pub const DEFAULT_TIME_EMBED_DIM: usize = 32;
pub const DEFAULT_HIDDEN: [usize; 3] = [128, 128, 128];

impl EpsilonNet {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn new(
        input_dim: usize,
        time_embed_dim: usize,
        hidden_widths: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_dim, time_embed_dim, hidden_widths, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let (fan_out, fan_in) = layer.weight.dim();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.random_range(-limit..limit));
        }
        Ok(net)
    }

    pub fn zeros(
        input_dim: usize,
        time_embed_dim: usize,
        hidden_widths: &[usize],
        activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if time_embed_dim == 0 || !time_embed_dim.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "time_embed_dim must be positive and even, got {time_embed_dim}"
            )));
        }
        if hidden_widths.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        let mut sizes = vec![input_dim + time_embed_dim];
        sizes.extend_from_slice(hidden_widths);
        sizes.push(input_dim);
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            input_dim,
            time_embed_dim,
            hidden_widths: hidden_widths.to_vec(),
            activation,
            layers,
        })
    }

    /// Rebuilds a net from stored layers, checking that shapes chain.
    pub fn from_layers(
        input_dim: usize,
        time_embed_dim: usize,
        hidden_widths: &[usize],
        activation: Activation,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_dim, time_embed_dim, hidden_widths, activation)?;
        if layers.len() != net.layers.len() {
            return Err(Error::schema(format!(
                "expected {} layers, got {}",
                net.layers.len(),
                layers.len()
            )));
        }
        for (i, (want, got)) in net.layers.iter().zip(&layers).enumerate() {
            if want.weight.dim() != got.weight.dim() || want.bias.len() != got.bias.len() {
                return Err(Error::schema(format!(
                    "layer {i}: expected weight {:?} and bias {}, got {:?} and {}",
                    want.weight.dim(),
                    want.bias.len(),
                    got.weight.dim(),
                    got.bias.len()
                )));
            }
            let finite = got.weight.iter().chain(got.bias.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::schema(format!("layer {i}: non-finite parameter")));
            }
        }
        net.layers = layers;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn time_embed_dim(&self) -> usize {
        self.time_embed_dim
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Sinusoidal features `[sin(f_k t), cos(f_k t)]` at geometric
    /// frequencies `f_k` from 1 to 1e4.
    pub fn time_embedding(&self, t_norm: f64) -> Vec<f64> {
        time_embedding(self.time_embed_dim, t_norm)
    }

    /// Evaluates the network on a single point.
    pub fn forward(&self, x: &[f64], t_norm: f64) -> Result<Vec<f64>> {
        self.predict(x, t_norm)
    }

    fn check_batch(&self, x: ArrayView2<'_, f64>, t_norm: &[f64]) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.ncols() });
        }
        if t_norm.len() != x.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: t_norm.len() });
        }
        if let Some(t) = t_norm.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::invalid(format!("t_norm must lie in [0, 1], got {t}")));
        }
        Ok(())
    }

    fn embed_batch(&self, x: ArrayView2<'_, f64>, t_norm: &[f64]) -> Array2<f64> {
        let n = x.nrows();
        let mut emb = Array2::zeros((n, self.time_embed_dim));
        for (mut row, &t) in emb.rows_mut().into_iter().zip(t_norm) {
            for (dst, v) in row.iter_mut().zip(time_embedding(self.time_embed_dim, t)) {
                *dst = v;
            }
        }
        concatenate(Axis(1), &[x, emb.view()]).expect("row counts agree")
    }

    /// Forward pass keeping every pre-activation and the layer inputs.
    fn forward_cached(&self, x: ArrayView2<'_, f64>, t_norm: &[f64]) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = self.embed_batch(x, t_norm);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weight.t()) + &layer.bias;
            inputs.push(h);
            h = if i == last {
                z.clone()
            } else {
                z.mapv(|v| self.activation.apply(v))
            };
            pre.push(z);
        }
        (inputs, pre)
    }

    /// Mean per-element loss against `targets` and its exact gradient.
    pub fn loss_and_grads(
        &self,
        x: ArrayView2<'_, f64>,
        t_norm: &[f64],
        targets: ArrayView2<'_, f64>,
        norm: LossNorm,
    ) -> Result<(f64, Gradients)> {
        self.weighted_loss_and_grads(x, t_norm, targets, norm, None)
    }

    /// As [`loss_and_grads`](Self::loss_and_grads) with optional per-sample
    /// weights: `loss = (1/(n d)) Σ_i w_i · ‖target_i − out_i‖`, with the
    /// squared or absolute norm summed over the `d` coordinates.
    pub fn weighted_loss_and_grads(
        &self,
        x: ArrayView2<'_, f64>,
        t_norm: &[f64],
        targets: ArrayView2<'_, f64>,
        norm: LossNorm,
        weights: Option<&[f64]>,
    ) -> Result<(f64, Gradients)> {
        self.check_batch(x, t_norm)?;
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InsufficientSamples { need: 1, got: 0 });
        }
        if targets.dim() != x.dim() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: targets.len() });
        }
        if let Some(w) = weights {
            if w.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: w.len() });
            }
        }
        let (inputs, pre) = self.forward_cached(x, t_norm);
        let out = pre.last().unwrap();
        let resid = out - &targets;

        let mut loss = 0.0;
        let mut grad = Array2::zeros(resid.raw_dim());
        for (i, (r, mut g)) in resid.rows().into_iter().zip(grad.rows_mut()).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]) / (n * r.len()) as f64;
            match norm {
                LossNorm::L2 => {
                    loss += w * r.iter().map(|v| v * v).sum::<f64>();
                    Zip::from(&mut g).and(&r).for_each(|g, &r| *g = 2.0 * w * r);
                }
                LossNorm::L1 => {
                    loss += w * r.iter().map(|v| v.abs()).sum::<f64>();
                    Zip::from(&mut g).and(&r).for_each(|g, &r| *g = w * sign(r));
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: 0, t: 0, loss });
        }

        let mut layers: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut delta = grad;
        for i in (0..self.layers.len()).rev() {
            let gw = delta.t().dot(&inputs[i]);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut up = delta.dot(&self.layers[i].weight);
                Zip::from(&mut up)
                    .and(&pre[i - 1])
                    .for_each(|u, &z| *u *= self.activation.derivative(z));
                delta = up;
            }
            layers.push(Layer { weight: gw, bias: gb });
        }
        layers.reverse();
        Ok((loss, Gradients { layers }))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn time_embedding(dim: usize, t_norm: f64) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = if half > 1 {
            // opaque base: the optimizer may otherwise turn pow(10, x) into
            // exp10 in some builds and not others
            std::hint::black_box(10f64).powf(4.0 * k as f64 / (half - 1) as f64)
        } else {
            1.0
        };
        let arg = freq * t_norm;
        out[k] = std::hint::black_box(arg).sin();
        out[half + k] = arg.cos();
    }
    out
}

impl EpsilonModel for EpsilonNet {
    fn data_dim(&self) -> usize {
        self.input_dim
    }

    fn predict_batch(&self, x: ArrayView2<'_, f64>, t_norm: &[f64]) -> Result<Array2<f64>> {
        self.check_batch(x, t_norm)?;
        let mut h = self.embed_batch(x, t_norm);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight.t()) + &layer.bias;
            if i != last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            h = z;
        }
        Ok(h)
    }
}

/// Adam moments and hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first_moment: Vec<Layer>,
    second_moment: Vec<Layer>,
}

/// Learning rate used for the 2D toys.
pub const DEFAULT_LR: f64 = 2e-4;

impl AdamState {
    pub fn new(net: &EpsilonNet, lr: f64) -> Self {
        let zeros: Vec<Layer> = net.layers.iter().map(Layer::zeros_like).collect();
        Self {
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn first_moment(&self) -> &[Layer] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Layer] {
        &self.second_moment
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut EpsilonNet, state: &mut AdamState, grads: &Gradients) -> Result<()> {
    if grads.layers.len() != net.layers.len() || state.first_moment.len() != net.layers.len() {
        return Err(Error::DimensionMismatch { expected: net.layers.len(), got: grads.layers.len() });
    }
    for ((p, g), m) in net.layers.iter().zip(&grads.layers).zip(&state.first_moment) {
        if p.weight.dim() != g.weight.dim()
            || p.bias.len() != g.bias.len()
            || p.weight.dim() != m.weight.dim()
        {
            return Err(Error::DimensionMismatch { expected: p.weight.len(), got: g.weight.len() });
        }
    }
    state.step_count += 1;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.eps, state.lr);
    let corr1 = 1.0 - b1.powf(state.step_count as f64);
    let corr2 = 1.0 - b2.powf(state.step_count as f64);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / corr1;
        let v_hat = *v / corr2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((p, g), m), v) in net
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        Zip::from(&mut p.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(|p, &g, m, v| update(p, g, m, v));
        Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand_distr::StandardNormal;

    fn random_batch(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let y = Array::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
        (x, t, y)
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = EpsilonNet::zeros(2, 8, &[16, 16], Activation::SmoothGated).unwrap();
        assert_eq!(net.forward(&[0.3, -1.2], 0.4).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = EpsilonNet::new(2, 32, &DEFAULT_HIDDEN, Activation::SmoothGated, 5).unwrap();
        let a = net.forward(&[0.1, 0.2], 0.7).unwrap();
        let b = net.forward(&[0.1, 0.2], 0.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_net_matches_hand_product() {
        let mut net = EpsilonNet::new(2, 4, &[], Activation::SmoothGated, 11).unwrap();
        net.layers[0].bias = Array1::from(vec![0.5, -0.25]);
        // t_norm = 0 embeds as [sin 0, sin 0, cos 0, cos 0] = [0, 0, 1, 1]
        let input = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        let w = &net.layers[0].weight;
        let expected: Vec<f64> = (0..2)
            .map(|r| (0..6).map(|c| w[[r, c]] * input[c]).sum::<f64>() + net.layers[0].bias[r])
            .collect();
        let got = net.forward(&[1.0, 0.0], 0.0).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let net = EpsilonNet::new(2, 4, &[3], Activation::Tanh, 0).unwrap();
        assert!(matches!(net.forward(&[1.0], 0.5), Err(Error::DimensionMismatch { .. })));
        assert!(net.forward(&[1.0, 2.0], 1.5).is_err());
    }

    #[test]
    fn perfect_targets_give_zero_loss_and_grads() {
        let net = EpsilonNet::new(2, 8, &[6, 5], Activation::SmoothGated, 3).unwrap();
        let (x, t, _) = random_batch(7, 2, 1);
        let y = net.predict_batch(x.view(), &t).unwrap();
        let (loss, grads) = net.loss_and_grads(x.view(), &t, y.view(), LossNorm::L2).unwrap();
        assert_eq!(loss, 0.0);
        for l in &grads.layers {
            assert!(l.weight.iter().chain(l.bias.iter()).all(|&g| g == 0.0));
        }
    }

    #[test]
    fn unit_residuals_agree_between_norms() {
        let net = EpsilonNet::new(3, 4, &[5], Activation::SmoothGated, 9).unwrap();
        let (x, t, _) = random_batch(4, 3, 2);
        let y = net.predict_batch(x.view(), &t).unwrap() + 1.0;
        let (l2, _) = net.loss_and_grads(x.view(), &t, y.view(), LossNorm::L2).unwrap();
        let (l1, _) = net.loss_and_grads(x.view(), &t, y.view(), LossNorm::L1).unwrap();
        assert!((l2 - 1.0).abs() < 1e-12);
        assert!((l1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..4 {
            let net = EpsilonNet::new(2, 4, &[6, 5], Activation::SmoothGated, seed).unwrap();
            let err = crate::checks::gradient_check(&net, LossNorm::L2, seed + 100).unwrap();
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
            let net = EpsilonNet::new(3, 6, &[4], Activation::Tanh, seed).unwrap();
            let err = crate::checks::gradient_check(&net, LossNorm::L2, seed + 200).unwrap();
            assert!(err < 1e-4, "tanh seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn zero_grads_leave_params_and_decay_moments() {
        let mut net = EpsilonNet::new(2, 4, &[3], Activation::SmoothGated, 1).unwrap();
        let mut state = AdamState::new(&net, 1e-3);
        let (x, t, y) = random_batch(4, 2, 3);
        let (_, g) = net.loss_and_grads(x.view(), &t, y.view(), LossNorm::L2).unwrap();
        adam_step(&mut net, &mut state, &g).unwrap();
        let before = net.clone();
        let m_before = state.first_moment[0].weight.clone();
        let zero = Gradients { layers: net.layers.iter().map(Layer::zeros_like).collect() };
        adam_step(&mut net, &mut state, &zero).unwrap();
        // m/v both decay, so m_hat/sqrt(v_hat) stays nonzero; only a truly
        // fresh state leaves params untouched
        assert_eq!(state.step_count, 2);
        assert_eq!(state.first_moment[0].weight, m_before * 0.9);

        let mut fresh_net = before.clone();
        let mut fresh = AdamState::new(&fresh_net, 1e-3);
        adam_step(&mut fresh_net, &mut fresh, &zero).unwrap();
        assert_eq!(fresh_net, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut net = EpsilonNet::zeros(1, 2, &[], Activation::Tanh).unwrap();
        let mut state = AdamState::new(&net, 2e-5);
        let mut g = Gradients { layers: net.layers.iter().map(Layer::zeros_like).collect() };
        g.layers[0].weight[[0, 0]] = 0.37;
        g.layers[0].bias[0] = -4.0;
        adam_step(&mut net, &mut state, &g).unwrap();
        let expect_w = -2e-5 * 0.37 / (0.37 + 1e-8);
        let expect_b = 2e-5 * 4.0 / (4.0 + 1e-8);
        assert!((net.layers[0].weight[[0, 0]] - expect_w).abs() < 1e-18);
        assert!((net.layers[0].bias[0] - expect_b).abs() < 1e-18);
    }

    #[test]
    fn adam_is_deterministic_and_checks_shapes() {
        let run = || {
            let mut net = EpsilonNet::new(2, 4, &[8], Activation::SmoothGated, 4).unwrap();
            let mut state = AdamState::new(&net, 1e-3);
            for s in 0..5 {
                let (x, t, y) = random_batch(6, 2, s);
                let (_, g) = net.loss_and_grads(x.view(), &t, y.view(), LossNorm::L1).unwrap();
                adam_step(&mut net, &mut state, &g).unwrap();
            }
            (net, state)
        };
        assert_eq!(run(), run());

        let mut net = EpsilonNet::new(2, 4, &[8], Activation::SmoothGated, 4).unwrap();
        let other = EpsilonNet::new(2, 4, &[7], Activation::SmoothGated, 4).unwrap();
        let mut state = AdamState::new(&net, 1e-3);
        let bad = Gradients { layers: other.layers.clone() };
        assert!(adam_step(&mut net, &mut state, &bad).is_err());
    }

    #[test]
    fn adam_fits_linear_regression() {
        // target is a fixed linear map of x; one linear layer can represent it
        let mut net = EpsilonNet::new(2, 2, &[], Activation::Tanh, 8).unwrap();
        let mut state = AdamState::new(&net, 1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut loss = f64::INFINITY;
        for _ in 0..5000 {
            let x = Array::from_shape_fn((32, 2), |_| rng.random_range(-1.0..1.0));
            let y = Array::from_shape_fn((32, 2), |(i, j)| {
                if j == 0 { 0.5 * x[[i, 0]] - x[[i, 1]] } else { 2.0 * x[[i, 1]] + 0.1 }
            });
            let t = vec![0.0; 32];
            let (l, g) = net.loss_and_grads(x.view(), &t, y.view(), LossNorm::L2).unwrap();
            loss = l;
            adam_step(&mut net, &mut state, &g).unwrap();
        }
        assert!(loss < 1e-3, "final loss {loss}");
    }

    #[test]
    fn bounded_inputs_give_finite_outputs() {
        let net = EpsilonNet::new(2, 32, &DEFAULT_HIDDEN, Activation::SmoothGated, 2).unwrap();
        for &x in &[-50.0, -1.0, 0.0, 1.0, 50.0] {
            let out = net.forward(&[x, -x], 1.0).unwrap();
            assert!(out.iter().all(|v| v.is_finite()));
        }
    }
}
