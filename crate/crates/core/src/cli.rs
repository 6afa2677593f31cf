//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error (including invalid
//! checkpoints), 3 numerical failure, 4 I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map, Value};

use crate::checks::check_bundle;
use crate::data::{gaussian_mixture, load_csv, ring_centers, save_csv, swiss_roll};
use crate::error::{Error, Result};
use crate::eval::{consistency_score, energy_distance, sliced_wasserstein, DEFAULT_PROJECTIONS};
use crate::net::{LossNorm, DEFAULT_LR};
use crate::persistence::{canonical_json, load_bundle, save_bundle};
use crate::plot::scatter_svg;
use crate::sample::{ancestral_sample_with, chain_rng, ddim_sample, interpolate_noises, NoiseScale};
use crate::schedule::{
    concentrated_subsequence, make_linear_beta_schedule, make_sigmoid_schedule, uniform_subsequence, AlphaSchedule,
    SubSequence,
};
use crate::train::{distill, log_to_jsonl, train_teacher, ModelBundle, StudentInit, TrainConfig, Weighting};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "diffdistill", version, about = "Train a diffusion teacher on 2D data and distill it into a shorter chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a teacher on a dataset.
    TrainTeacher(TrainTeacherArgs),
    /// Distill a teacher into a student on a sub-sequence of its steps.
    Distill(DistillArgs),
    /// Draw samples from a checkpoint.
    Sample(SampleArgs),
    /// Score samples of a checkpoint against data, and optionally against a teacher.
    Evaluate(EvaluateArgs),
    /// Decode interpolated noises through a teacher and a student.
    Interpolate(InterpolateArgs),
    /// Run the numerical oracle suite against a checkpoint.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// swiss-roll, mixture or csv:<path>
    #[arg(long)]
    dataset: Option<String>,
    /// Points generated for synthetic datasets.
    #[arg(long, default_value_t = 20_000)]
    n_data: usize,
    /// Noise standard deviation of the Swiss roll, or the per-mode std of the mixture.
    #[arg(long)]
    data_noise: Option<f64>,
}

#[derive(Debug, Args)]
struct OptimArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// l1 or l2
    #[arg(long)]
    loss: Option<String>,
    /// unit or gamma
    #[arg(long, default_value = "unit")]
    weighting: String,
    #[arg(long, default_value_t = 100)]
    log_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainTeacherArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long = "T", default_value_t = 500)]
    teacher_steps: usize,
    /// sigmoid or linear
    #[arg(long, default_value = "sigmoid")]
    schedule: String,
    #[command(flatten)]
    optim: OptimArgs,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training log path (defaults to the checkpoint path with a .log.jsonl extension).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DistillArgs {
    #[arg(long)]
    teacher: PathBuf,
    /// Student step count for --mode.
    #[arg(long, conflicts_with = "phi")]
    tprime: Option<usize>,
    /// Explicit sub-sequence as a comma list, or a file holding one.
    #[arg(long)]
    phi: Option<String>,
    /// uniform, concentrated:<fraction>,<window> or scattered
    #[arg(long, default_value = "uniform")]
    mode: String,
    /// fresh or teacher (warm start from the teacher's weights)
    #[arg(long, default_value = "fresh")]
    init: String,
    /// Dataset (defaults to the one recorded in the teacher checkpoint).
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ancestral or ddim
    #[arg(long, default_value = "ancestral")]
    sampler: String,
    /// stddev or raw
    #[arg(long, default_value = "stddev")]
    noise_scale: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Reference samples (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Comma list of energy, swd.
    #[arg(long, default_value = "energy,swd")]
    metrics: String,
    /// Samples drawn from the checkpoint (defaults to the number of data rows).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_PROJECTIONS)]
    projections: usize,
    /// Teacher checkpoint for the consistency score.
    #[arg(long)]
    against: Option<PathBuf>,
    #[arg(long, requires = "against")]
    consistency: bool,
    /// Shared noises for the consistency score.
    #[arg(long, default_value_t = 1000)]
    consistency_n: usize,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct InterpolateArgs {
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    student: PathBuf,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFiniteLoss { .. } | Error::DegenerateStep { .. } => EXIT_NUMERIC,
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::TrainTeacher(a) => cmd_train_teacher(a),
        Command::Distill(a) => cmd_distill(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Interpolate(a) => cmd_interpolate(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn default_log_path(out: &Path) -> PathBuf {
    out.with_extension("log.jsonl")
}

/// Dataset name and generation parameters, kept in checkpoint metadata so a
/// later command can rebuild the same points.
fn dataset_spec(args: &DataArgs, fallback: Option<&Value>, seed: u64) -> Result<Value> {
    if args.dataset.is_none() {
        if let Some(v) = fallback {
            return Ok(v.clone());
        }
    }
    let name = args.dataset.clone().unwrap_or_else(|| "swiss-roll".into());
    Ok(match name.as_str() {
        "swiss-roll" => json!({"name": name, "n": args.n_data, "noise": args.data_noise.unwrap_or(0.05), "seed": seed}),
        "mixture" => json!({"name": name, "n": args.n_data, "noise": args.data_noise.unwrap_or(0.1), "seed": seed}),
        other if other.starts_with("csv:") => json!({"name": name}),
        other => return Err(Error::invalid(format!("unknown dataset {other:?} (want swiss-roll|mixture|csv:<path>)"))),
    })
}

const MIXTURE_MODES: usize = 8;
const MIXTURE_RADIUS: f64 = 2.0;

fn load_dataset(spec: &Value) -> Result<Array2<f64>> {
    let bad = || Error::invalid(format!("malformed dataset record {spec}"));
    let name = spec["name"].as_str().ok_or_else(bad)?;
    if let Some(path) = name.strip_prefix("csv:") {
        return load_csv(path);
    }
    let n = spec["n"].as_u64().ok_or_else(bad)? as usize;
    let noise = spec["noise"].as_f64().ok_or_else(bad)?;
    let seed = spec["seed"].as_u64().ok_or_else(bad)?;
    match name {
        "swiss-roll" => swiss_roll(n, noise, seed),
        "mixture" => gaussian_mixture(n, ring_centers(MIXTURE_MODES, MIXTURE_RADIUS).view(), noise, seed),
        _ => Err(bad()),
    }
}

fn train_config(args: &OptimArgs, base: TrainConfig, seed: u64) -> Result<TrainConfig> {
    let config = TrainConfig {
        steps: args.steps.unwrap_or(base.steps),
        batch_size: args.batch.unwrap_or(base.batch_size),
        lr: args.lr.unwrap_or(DEFAULT_LR),
        loss_norm: match &args.loss {
            Some(s) => s.parse::<LossNorm>()?,
            None => base.loss_norm,
        },
        weighting: args.weighting.parse::<Weighting>()?,
        seed,
        log_every: args.log_every,
    };
    if config.batch_size == 0 || config.log_every == 0 || !(config.lr > 0.0) {
        return Err(Error::invalid("batch, log-every and lr must be positive"));
    }
    Ok(config)
}

fn finish_run(
    bundle: &mut ModelBundle,
    dataset: Value,
    log: &[crate::train::LogRecord],
    out: &Path,
    log_path: Option<PathBuf>,
) -> Result<i32> {
    bundle.metadata.insert("dataset".into(), dataset);
    save_bundle(bundle, out)?;
    let log_path = log_path.unwrap_or_else(|| default_log_path(out));
    write_text(&log_path, &log_to_jsonl(log))?;
    Ok(EXIT_OK)
}

fn cmd_train_teacher(a: TrainTeacherArgs) -> Result<i32> {
    let mut seeds = ChaCha8Rng::seed_from_u64(a.optim.seed);
    let (data_seed, train_seed) = (seeds.next_u64(), seeds.next_u64());
    let spec = dataset_spec(&a.data, None, data_seed)?;
    let data = load_dataset(&spec)?;
    let schedule = match a.schedule.as_str() {
        "sigmoid" => make_sigmoid_schedule(a.teacher_steps, -3.0, 3.0, 1.0)?,
        "linear" => make_linear_beta_schedule(a.teacher_steps, 1e-4, 0.02)?,
        other => return Err(Error::invalid(format!("unknown schedule {other:?} (want sigmoid|linear)"))),
    };
    let config = train_config(&a.optim, TrainConfig::teacher(), train_seed)?;
    let mut run = train_teacher(data.view(), &schedule, &config)?;
    run.bundle.metadata.insert("schedule".into(), json!(a.schedule));
    run.bundle.metadata.insert("command_seed".into(), json!(a.optim.seed));
    finish_run(&mut run.bundle, spec, &run.log, &a.out, a.log)
}

fn parse_phi_list(text: &str) -> Result<Vec<usize>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| Error::invalid(format!("phi entry {s:?} is not a step index"))))
        .collect()
}

fn resolve_phi(a: &DistillArgs, schedule: &AlphaSchedule, seed: u64) -> Result<SubSequence> {
    let teacher_steps = schedule.steps();
    if let Some(phi) = &a.phi {
        let text = if Path::new(phi).is_file() {
            fs::read_to_string(phi).map_err(|e| Error::io(phi, e))?
        } else {
            phi.clone()
        };
        return SubSequence::new(parse_phi_list(&text)?, teacher_steps)
            .map_err(|e| Error::invalid(format!("invalid --phi: {e}")));
    }
    let tprime = a.tprime.ok_or_else(|| Error::invalid("distill needs --tprime or --phi"))?;
    if a.mode == "uniform" {
        uniform_subsequence(teacher_steps, tprime)
    } else if a.mode == "scattered" {
        concentrated_subsequence(teacher_steps, tprime, 0.0, 1.0, seed)
    } else if let Some(rest) = a.mode.strip_prefix("concentrated:") {
        let parts: Vec<&str> = rest.split(',').collect();
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad mode value {s:?}")));
        match parts.as_slice() {
            [f, w] => concentrated_subsequence(teacher_steps, tprime, parse(f)?, parse(w)?, seed),
            _ => Err(Error::invalid("mode concentrated needs <fraction>,<window>")),
        }
    } else {
        Err(Error::invalid(format!(
            "unknown mode {:?} (want uniform|concentrated:<frac>,<window>|scattered)",
            a.mode
        )))
    }
}

fn cmd_distill(a: DistillArgs) -> Result<i32> {
    let teacher = load_bundle(&a.teacher)?;
    let mut seeds = ChaCha8Rng::seed_from_u64(a.optim.seed);
    let (data_seed, train_seed, phi_seed) = (seeds.next_u64(), seeds.next_u64(), seeds.next_u64());
    let phi = resolve_phi(&a, &teacher.schedule, phi_seed)?;
    let spec = dataset_spec(&a.data, teacher.metadata.get("dataset"), data_seed)?;
    let data = load_dataset(&spec)?;
    let init = match a.init.as_str() {
        "fresh" => StudentInit::Fresh,
        "teacher" => StudentInit::WarmStart,
        other => return Err(Error::invalid(format!("unknown init {other:?} (want fresh|teacher)"))),
    };
    let config = train_config(&a.optim, TrainConfig::distill(), train_seed)?;
    let mut run = distill(&teacher, &phi, &config, data.view(), init)?;
    run.bundle.metadata.insert("command_seed".into(), json!(a.optim.seed));
    run.bundle.metadata.insert("init".into(), json!(a.init));
    run.bundle.metadata.insert("mode".into(), json!(if a.phi.is_some() { "explicit" } else { a.mode.as_str() }));
    finish_run(&mut run.bundle, spec, &run.log, &a.out, a.log)
}

/// Terminal noise for deterministic sampling: row `i` comes from chain `i`'s
/// stream, matching the first draw of ancestral sampling.
fn chain_noise(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut out = Array2::zeros((n, d));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let mut rng = chain_rng(seed, i);
        row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    }
    out
}

fn draw_samples(bundle: &ModelBundle, n: usize, seed: u64, sampler: &str, scale: NoiseScale) -> Result<Array2<f64>> {
    match sampler {
        "ancestral" => ancestral_sample_with(&bundle.net, &bundle.schedule, &bundle.phi, n, seed, scale),
        "ddim" => ddim_sample(bundle, chain_noise(n, bundle.data_dim(), seed).view()),
        other => Err(Error::invalid(format!("unknown sampler {other:?} (want ancestral|ddim)"))),
    }
}

fn cmd_sample(a: SampleArgs) -> Result<i32> {
    let bundle = load_bundle(&a.ckpt)?;
    let scale: NoiseScale = a.noise_scale.parse()?;
    if a.n == 0 {
        return Err(Error::invalid("--n must be positive"));
    }
    let samples = draw_samples(&bundle, a.n, a.seed, &a.sampler, scale)?;
    save_csv(&a.out, samples.view())?;
    if let Some(svg) = &a.svg {
        write_text(svg, &scatter_svg(samples.view()))?;
    }
    Ok(EXIT_OK)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<i32> {
    let bundle = load_bundle(&a.ckpt)?;
    let data = load_csv(&a.data)?;
    if data.ncols() != bundle.data_dim() {
        return Err(Error::DimensionMismatch { expected: bundle.data_dim(), got: data.ncols() });
    }
    let n = a.n.unwrap_or(data.nrows());
    let mut seeds = ChaCha8Rng::seed_from_u64(a.seed);
    let (sample_seed, swd_seed, consistency_seed) = (seeds.next_u64(), seeds.next_u64(), seeds.next_u64());
    let samples = ancestral_sample_with(&bundle.net, &bundle.schedule, &bundle.phi, n, sample_seed, NoiseScale::StdDev)?;

    let mut report = Map::new();
    for metric in a.metrics.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        match metric {
            "energy" => {
                report.insert("energy".into(), json!(energy_distance(samples.view(), data.view())?));
            }
            "swd" => {
                let v = sliced_wasserstein(samples.view(), data.view(), a.projections, swd_seed)?;
                report.insert("swd".into(), json!(v));
            }
            other => return Err(Error::invalid(format!("unknown metric {other:?} (want energy|swd)"))),
        }
    }
    if a.consistency {
        let path = a.against.as_ref().expect("clap enforces --against");
        let teacher = load_bundle(path)?;
        let score = consistency_score(&teacher, &bundle, a.consistency_n, consistency_seed)?;
        report.insert("paired_mse".into(), json!(score.paired_mse));
        report.insert("random_baseline_mse".into(), json!(score.random_baseline_mse));
        report.insert("consistency_ratio".into(), json!(score.ratio()));
    }
    report.insert(
        "config".into(),
        json!({
            "ckpt": a.ckpt.display().to_string(),
            "data": a.data.display().to_string(),
            "metrics": a.metrics,
            "n": n,
            "projections": a.projections,
            "against": a.against.as_ref().map(|p| p.display().to_string()),
            "consistency_n": if a.consistency { Some(a.consistency_n) } else { None },
        }),
    );
    report.insert(
        "seeds".into(),
        json!({"seed": a.seed, "sample": sample_seed, "swd": swd_seed, "consistency": consistency_seed}),
    );
    write_text(&a.report, &canonical_json(&Value::Object(report)))?;
    Ok(EXIT_OK)
}

fn cmd_interpolate(a: InterpolateArgs) -> Result<i32> {
    let teacher = load_bundle(&a.teacher)?;
    let student = load_bundle(&a.student)?;
    let d = teacher.data_dim();
    if student.data_dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: student.data_dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let end_a: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let end_b: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let interp = interpolate_noises(end_a.view(), end_b.view(), a.k)?;
    if interp.linear_fallback {
        eprintln!("warning: endpoints are antiparallel; used linear interpolation");
    }
    let from_teacher = ddim_sample(&teacher, interp.points.view())?;
    let from_student = ddim_sample(&student, interp.points.view())?;
    // teacher output in columns 0..d, student output in d..2d
    let out = ndarray::concatenate![ndarray::Axis(1), from_teacher, from_student];
    save_csv(&a.out, out.view())?;
    Ok(EXIT_OK)
}

fn cmd_check(a: CheckArgs) -> Result<i32> {
    let bundle = match load_bundle(&a.ckpt) {
        Ok(b) => b,
        Err(e @ Error::Io { .. }) => return Err(e),
        Err(e) => {
            println!("FAIL load: {e}");
            return Ok(EXIT_USAGE);
        }
    };
    println!("PASS load: schedule, sub-sequence and network invariants hold");
    let results = check_bundle(&bundle, a.seed)?;
    let mut all = true;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        all &= r.passed;
    }
    Ok(if all { EXIT_OK } else { EXIT_NUMERIC })
}
