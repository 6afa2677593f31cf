//! Teacher training and single-fold distillation into a student chain.
//!
//! Both loops share one minibatch recipe: draw `x_0` from the data, a student
//! step `t` and Gaussian noise `eps` per sample, noise to
//! `z = sqrt(a_t) x_0 + sqrt(1 - a_t) eps`, then regress the network at
//! `(z, t/T')` onto a target. The teacher (and the from-scratch student
//! baseline) regresses onto `eps`; distillation regresses onto the frozen
//! teacher's prediction at the matched teacher step `phi[t]`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::net::{adam_step, Activation, AdamState, EpsilonModel, EpsilonNet, LossNorm};
use crate::net::{DEFAULT_HIDDEN, DEFAULT_LR, DEFAULT_TIME_EMBED_DIM};
use crate::process::{loss_weight, teacher_time_input, time_input};
use crate::schedule::{AlphaSchedule, SubSequence};

/// Per-step loss weights: all ones, or the variational-bound weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Unit,
    Gamma,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Weighting::Unit),
            "gamma" => Ok(Weighting::Gamma),
            other => Err(Error::invalid(format!("unknown weighting {other:?} (want unit|gamma)"))),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Unit => "unit",
            Weighting::Gamma => "gamma",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss_norm: LossNorm,
    pub weighting: Weighting,
    pub seed: u64,
    pub log_every: usize,
}

/// Decay of the logged exponential moving average of the loss.
pub const EMA_DECAY: f64 = 0.99;
const LOSS_TAIL: usize = 10;

impl TrainConfig {
    /// l2 regression onto the true noise.
    pub fn teacher() -> Self {
        Self {
            steps: 40_000,
            batch_size: 256,
            lr: DEFAULT_LR,
            loss_norm: LossNorm::L2,
            weighting: Weighting::Unit,
            seed: 0,
            log_every: 100,
        }
    }

    /// l1 regression onto the teacher's prediction.
    pub fn distill() -> Self {
        Self {
            steps: 20_000,
            loss_norm: LossNorm::L1,
            ..Self::teacher()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if self.log_every == 0 {
            return Err(Error::invalid("log_every must be positive"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "steps": self.steps,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "loss_norm": self.loss_norm.to_string(),
            "weighting": self.weighting.to_string(),
            "seed": self.seed,
            "log_every": self.log_every,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundleKind {
    Teacher,
    Student,
}

impl BundleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BundleKind::Teacher => "teacher",
            BundleKind::Student => "student",
        }
    }
}

impl FromStr for BundleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teacher" => Ok(BundleKind::Teacher),
            "student" => Ok(BundleKind::Student),
            other => Err(Error::schema(format!("kind must be teacher|student, got {other:?}"))),
        }
    }
}

/// A trained model together with the chain it runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: BundleKind,
    pub schedule: AlphaSchedule,
    pub phi: SubSequence,
    pub net: EpsilonNet,
    pub metadata: Map<String, Value>,
}

impl ModelBundle {
    pub fn new(
        kind: BundleKind,
        schedule: AlphaSchedule,
        phi: SubSequence,
        net: EpsilonNet,
        metadata: Map<String, Value>,
    ) -> Result<Self> {
        let bundle = Self { kind, schedule, phi, net, metadata };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.teacher_steps() != self.schedule.steps() {
            return Err(Error::schema(format!(
                "phi ends at {} but the schedule has T = {}",
                self.phi.teacher_steps(),
                self.schedule.steps()
            )));
        }
        if self.kind == BundleKind::Teacher && !self.phi.is_identity() {
            return Err(Error::schema("teacher bundles must use the identity sub-sequence"));
        }
        Ok(())
    }

    /// Student step count T' (equal to T for a teacher).
    pub fn steps(&self) -> usize {
        self.phi.steps()
    }

    pub fn data_dim(&self) -> usize {
        self.net.input_dim()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    pub loss_ema: f64,
    pub wall_ms: u64,
}

impl LogRecord {
    pub fn to_json_line(&self) -> String {
        json!({"step": self.step, "loss_ema": self.loss_ema, "wall_ms": self.wall_ms}).to_string()
    }
}

pub fn log_to_jsonl(records: &[LogRecord]) -> String {
    records.iter().map(|r| r.to_json_line() + "\n").collect()
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub bundle: ModelBundle,
    pub log: Vec<LogRecord>,
    /// Raw minibatch loss of every step.
    pub losses: Vec<f64>,
}

/// Noised minibatch shared by the teacher loss, the distillation loss and the
/// from-scratch student loss.
#[derive(Debug, Clone)]
pub struct NoisedBatch {
    /// Student step of each sample, in `1..=T'`.
    pub steps: Vec<usize>,
    pub x0: Array2<f64>,
    pub eps: Array2<f64>,
    /// `sqrt(a_t) x0 + sqrt(1 - a_t) eps`
    pub noised: Array2<f64>,
}

impl NoisedBatch {
    /// Draws rows of `data` with replacement, one step and one noise vector
    /// per row.
    pub fn draw(
        data: ArrayView2<'_, f64>,
        schedule: &AlphaSchedule,
        phi: &SubSequence,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let d = data.ncols();
        let mut steps = Vec::with_capacity(batch_size);
        let mut x0 = Array2::zeros((batch_size, d));
        let mut eps = Array2::zeros((batch_size, d));
        let mut noised = Array2::zeros((batch_size, d));
        for i in 0..batch_size {
            let row = rng.random_range(0..data.nrows());
            let t = rng.random_range(1..=phi.steps());
            let a = schedule.alpha(phi.get(t));
            let (s, n) = (a.sqrt(), (1.0 - a).sqrt());
            for j in 0..d {
                let e: f64 = rng.sample(StandardNormal);
                x0[[i, j]] = data[[row, j]];
                eps[[i, j]] = e;
                noised[[i, j]] = s * data[[row, j]] + n * e;
            }
            steps.push(t);
        }
        Self { steps, x0, eps, noised }
    }

    pub fn student_times(&self, phi: &SubSequence) -> Vec<f64> {
        self.steps.iter().map(|&t| time_input(phi, t)).collect()
    }

    pub fn teacher_times(&self, phi: &SubSequence) -> Vec<f64> {
        self.steps.iter().map(|&t| teacher_time_input(phi, t)).collect()
    }
}

fn batch_weights(
    weighting: Weighting,
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    batch: &NoisedBatch,
) -> Result<Option<Vec<f64>>> {
    match weighting {
        Weighting::Unit => Ok(None),
        Weighting::Gamma => batch
            .steps
            .iter()
            .map(|&t| loss_weight(schedule, phi, t))
            .collect::<Result<Vec<_>>>()
            .map(Some),
    }
}

/// Fresh default-architecture network for `input_dim`-dimensional data.
pub fn default_net(input_dim: usize, seed: u64) -> Result<EpsilonNet> {
    EpsilonNet::new(input_dim, DEFAULT_TIME_EMBED_DIM, &DEFAULT_HIDDEN, Activation::SmoothGated, seed)
}

fn check_data(data: ArrayView2<'_, f64>, net: &EpsilonNet, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if data.ncols() != net.input_dim() {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), got: data.ncols() });
    }
    if data.nrows() < config.batch_size && config.steps > 0 {
        return Err(Error::InsufficientSamples { need: config.batch_size, got: data.nrows() });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    Ok(())
}

/// Regression target of one minibatch.
enum Target<'a> {
    TrueNoise,
    Teacher(&'a dyn EpsilonModel),
}

fn run_loop(
    mut net: EpsilonNet,
    target: Target<'_>,
    data: ArrayView2<'_, f64>,
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    config: &TrainConfig,
) -> Result<(EpsilonNet, Vec<LogRecord>, Vec<f64>)> {
    check_data(data, &net, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&net, config.lr);
    let started = Instant::now();
    let mut log = Vec::new();
    let mut losses = Vec::with_capacity(config.steps);
    let mut ema = 0.0;
    for step in 1..=config.steps {
        let batch = NoisedBatch::draw(data, schedule, phi, config.batch_size, &mut rng);
        let targets = match target {
            Target::TrueNoise => batch.eps.clone(),
            Target::Teacher(teacher) => teacher.predict_batch(batch.noised.view(), &batch.teacher_times(phi))?,
        };
        let weights = batch_weights(config.weighting, schedule, phi, &batch)?;
        let (loss, grads) = net
            .weighted_loss_and_grads(
                batch.noised.view(),
                &batch.student_times(phi),
                targets.view(),
                config.loss_norm,
                weights.as_deref(),
            )
            .map_err(|e| match e {
                Error::NonFiniteLoss { loss, .. } => Error::NonFiniteLoss { step, t: batch.steps[0], loss },
                other => other,
            })?;
        adam_step(&mut net, &mut adam, &grads)?;
        ema = if step == 1 { loss } else { EMA_DECAY * ema + (1.0 - EMA_DECAY) * loss };
        losses.push(loss);
        if step % config.log_every == 0 || step == config.steps {
            log.push(LogRecord {
                step,
                loss_ema: ema,
                wall_ms: started.elapsed().as_millis() as u64,
            });
        }
    }
    Ok((net, log, losses))
}

fn run_metadata(config: &TrainConfig, log: &[LogRecord]) -> Map<String, Value> {
    let tail: Vec<Value> = log[log.len().saturating_sub(LOSS_TAIL)..]
        .iter()
        .map(|r| json!({"step": r.step, "loss_ema": r.loss_ema}))
        .collect();
    let mut meta = Map::new();
    meta.insert("config".into(), config.to_json());
    meta.insert("loss_tail".into(), Value::Array(tail));
    meta
}

/// Trains a default-architecture teacher initialised from `config.seed`.
pub fn train_teacher(data: ArrayView2<'_, f64>, schedule: &AlphaSchedule, config: &TrainConfig) -> Result<TrainRun> {
    let net = default_net(data.ncols(), config.seed)?;
    train_teacher_from(net, data, schedule, config)
}

pub fn train_teacher_from(
    net: EpsilonNet,
    data: ArrayView2<'_, f64>,
    schedule: &AlphaSchedule,
    config: &TrainConfig,
) -> Result<TrainRun> {
    let phi = SubSequence::identity(schedule.steps());
    let (net, log, losses) = run_loop(net, Target::TrueNoise, data, schedule, &phi, config)?;
    let metadata = run_metadata(config, &log);
    let bundle = ModelBundle::new(BundleKind::Teacher, schedule.clone(), phi, net, metadata)?;
    Ok(TrainRun { bundle, log, losses })
}

/// How the student network starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudentInit {
    /// Fresh weights drawn from `config.seed`.
    Fresh,
    /// A copy of the teacher's weights.
    WarmStart,
}

/// Distils `teacher` into a student that runs on `phi`.
pub fn distill(
    teacher: &ModelBundle,
    phi: &SubSequence,
    config: &TrainConfig,
    data: ArrayView2<'_, f64>,
    init: StudentInit,
) -> Result<TrainRun> {
    if teacher.kind != BundleKind::Teacher {
        return Err(Error::invalid("distillation needs a teacher bundle"));
    }
    let student = match init {
        StudentInit::Fresh => EpsilonNet::new(
            teacher.net.input_dim(),
            teacher.net.time_embed_dim(),
            teacher.net.hidden_widths(),
            teacher.net.activation(),
            config.seed,
        )?,
        StudentInit::WarmStart => teacher.net.clone(),
    };
    distill_with(&teacher.net, &teacher.schedule, phi, student, config, data)
}

/// Distillation against any noise predictor acting as the teacher.
pub fn distill_with<M: EpsilonModel>(
    teacher: &M,
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    student: EpsilonNet,
    config: &TrainConfig,
    data: ArrayView2<'_, f64>,
) -> Result<TrainRun> {
    if phi.teacher_steps() != schedule.steps() {
        return Err(Error::invalid(format!(
            "sub-sequence ends at {} but the teacher has T = {}",
            phi.teacher_steps(),
            schedule.steps()
        )));
    }
    if teacher.data_dim() != student.input_dim() {
        return Err(Error::DimensionMismatch { expected: teacher.data_dim(), got: student.input_dim() });
    }
    let (net, log, losses) = run_loop(student, Target::Teacher(teacher), data, schedule, phi, config)?;
    let metadata = run_metadata(config, &log);
    let bundle = ModelBundle::new(BundleKind::Student, schedule.clone(), phi.clone(), net, metadata)?;
    Ok(TrainRun { bundle, log, losses })
}

fn weighted_loss(
    student: &EpsilonNet,
    schedule: &AlphaSchedule,
    phi: &SubSequence,
    batch: &NoisedBatch,
    targets: ArrayView2<'_, f64>,
    config: &TrainConfig,
) -> Result<f64> {
    let weights = batch_weights(config.weighting, schedule, phi, batch)?;
    let (loss, _) = student.weighted_loss_and_grads(
        batch.noised.view(),
        &batch.student_times(phi),
        targets,
        config.loss_norm,
        weights.as_deref(),
    )?;
    Ok(loss)
}

/// Distillation loss of `student` on `batch`: regression onto the teacher's
/// prediction at the matched teacher step.
pub fn distill_loss<M: EpsilonModel + ?Sized>(
    teacher: &M,
    student: &ModelBundle,
    batch: &NoisedBatch,
    config: &TrainConfig,
) -> Result<f64> {
    let targets = teacher.predict_batch(batch.noised.view(), &batch.teacher_times(&student.phi))?;
    weighted_loss(&student.net, &student.schedule, &student.phi, batch, targets.view(), config)
}

/// From-scratch student loss on `batch`: regression onto the true noise.
pub fn scratch_student_loss_step(student: &ModelBundle, batch: &NoisedBatch, config: &TrainConfig) -> Result<f64> {
    weighted_loss(&student.net, &student.schedule, &student.phi, batch, batch.eps.view(), config)
}
