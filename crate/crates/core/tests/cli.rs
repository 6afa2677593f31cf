use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_diffdistill"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small teacher: T = 10 linear schedule, a handful of training steps.
fn small_teacher(dir: &Path) -> PathBuf {
    let ckpt = dir.join("teacher.json");
    let out = run(&[
        "train-teacher", "--dataset", "swiss-roll", "--n-data", "300", "--T", "10", "--schedule", "linear",
        "--steps", "20", "--batch", "32", "--seed", "1", "--out", s(&ckpt),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    ckpt
}

#[test]
fn missing_out_is_a_usage_error() {
    let out = run(&["train-teacher", "--T", "10"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn zero_steps_writes_untrained_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("t.json");
    let out = run(&["train-teacher", "--T", "20", "--steps", "0", "--n-data", "100", "--out", s(&ckpt)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let bundle = diffdistill::persistence::load_bundle(&ckpt).unwrap();
    assert_eq!(bundle.schedule.steps(), 20);
    assert!(bundle.phi.is_identity());
    assert!(dir.path().join("t.log.jsonl").exists());
}

#[test]
fn unknown_dataset_and_schedule_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("t.json");
    let out = run(&["train-teacher", "--dataset", "moons", "--steps", "0", "--out", s(&ckpt)]);
    assert_eq!(code(&out), 2);
    let out = run(&["train-teacher", "--schedule", "cosine", "--steps", "0", "--out", s(&ckpt)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn csv_dataset_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let pts = diffdistill::data::swiss_roll(200, 0.05, 3).unwrap();
    diffdistill::data::save_csv(&data, pts.view()).unwrap();
    let ckpt = dir.path().join("t.json");
    let spec = format!("csv:{}", s(&data));
    let out = run(&["train-teacher", "--dataset", &spec, "--T", "10", "--steps", "5", "--batch", "16", "--out", s(&ckpt)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["train-teacher", "--dataset", "csv:/nonexistent/d.csv", "--steps", "0", "--out", s(&ckpt)]);
    assert_eq!(code(&out), 4);
}

#[test]
fn distill_accepts_modes_and_rejects_bad_phi() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = small_teacher(dir.path());
    let student = dir.path().join("s.json");
    let base = ["distill", "--teacher", s(&teacher), "--steps", "5", "--batch", "16", "--out", s(&student)];

    let mut args = base.to_vec();
    args.extend(["--tprime", "3"]);
    assert_eq!(code(&run(&args)), 0);

    let mut args = base.to_vec();
    args.extend(["--tprime", "7", "--mode", "scattered"]);
    assert_eq!(code(&run(&args)), 0);

    let mut args = base.to_vec();
    args.extend(["--tprime", "4", "--mode", "concentrated:0.5,0.5"]);
    assert_eq!(code(&run(&args)), 0);

    let mut args = base.to_vec();
    args.extend(["--phi", "0,2,5,10", "--init", "teacher"]);
    assert_eq!(code(&run(&args)), 0);
    let b = diffdistill::persistence::load_bundle(&student).unwrap();
    assert_eq!(b.phi.as_slice(), &[0, 2, 5, 10]);

    let mut args = base.to_vec();
    args.extend(["--phi", "0,3,6,9"]);
    let out = run(&args);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("must end at T = 10"));

    let mut args = base.to_vec();
    args.extend(["--tprime", "11"]);
    assert_eq!(code(&run(&args)), 2);

    let mut args = base.to_vec();
    args.extend(["--tprime", "3", "--mode", "spiral"]);
    assert_eq!(code(&run(&args)), 2);
}

#[test]
fn phi_can_come_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = small_teacher(dir.path());
    let phi = dir.path().join("phi.txt");
    fs::write(&phi, "0 4 10\n").unwrap();
    let student = dir.path().join("s.json");
    let out = run(&[
        "distill", "--teacher", s(&teacher), "--phi", s(&phi), "--steps", "3", "--batch", "16", "--out", s(&student),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let b = diffdistill::persistence::load_bundle(&student).unwrap();
    assert_eq!(b.phi.as_slice(), &[0, 4, 10]);
}

#[test]
fn sample_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = small_teacher(dir.path());
    let (csv, svg) = (dir.path().join("x.csv"), dir.path().join("x.svg"));
    for sampler in ["ancestral", "ddim"] {
        let out = run(&[
            "sample", "--ckpt", s(&teacher), "--n", "50", "--sampler", sampler, "--out", s(&csv), "--svg", s(&svg),
        ]);
        assert_eq!(code(&out), 0);
        let m = diffdistill::data::load_csv(&csv).unwrap();
        assert_eq!(m.dim(), (50, 2));
        assert_eq!(fs::read_to_string(&svg).unwrap().matches("<circle").count(), 50);
    }
    let out = run(&["sample", "--ckpt", s(&teacher), "--sampler", "euler", "--out", s(&csv)]);
    assert_eq!(code(&out), 2);
    let out = run(&["sample", "--ckpt", s(&dir.path().join("none.json")), "--out", s(&csv)]);
    assert_eq!(code(&out), 4);
}

#[test]
fn evaluate_report_has_metric_keys() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = small_teacher(dir.path());
    let student = dir.path().join("s.json");
    let out = run(&["distill", "--teacher", s(&teacher), "--tprime", "5", "--steps", "5", "--batch", "16", "--out", s(&student)]);
    assert_eq!(code(&out), 0);
    let data = dir.path().join("held.csv");
    diffdistill::data::save_csv(&data, diffdistill::data::swiss_roll(100, 0.05, 9).unwrap().view()).unwrap();
    let report = dir.path().join("r.json");
    let out = run(&[
        "evaluate", "--ckpt", s(&student), "--data", s(&data), "--metrics", "energy,swd", "--against", s(&teacher),
        "--consistency", "--consistency-n", "50", "--report", s(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for key in ["energy", "swd", "paired_mse", "random_baseline_mse", "config", "seeds"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["paired_mse"].as_f64().unwrap() >= 0.0);

    let out = run(&["evaluate", "--ckpt", s(&student), "--data", s(&data), "--metrics", "fid", "--report", s(&report)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn interpolate_writes_paired_rows() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = small_teacher(dir.path());
    let out_csv = dir.path().join("i.csv");
    let out = run(&[
        "interpolate", "--teacher", s(&teacher), "--student", s(&teacher), "--k", "6", "--seed", "2", "--out", s(&out_csv),
    ]);
    assert_eq!(code(&out), 0);
    let m = diffdistill::data::load_csv(&out_csv).unwrap();
    assert_eq!(m.dim(), (6, 4));
    // the same model on both sides decodes identically
    for row in m.rows() {
        assert_eq!((row[0], row[1]), (row[2], row[3]));
    }
    let out = run(&["interpolate", "--teacher", s(&teacher), "--student", s(&teacher), "--k", "1", "--out", s(&out_csv)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn check_passes_then_flags_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = small_teacher(dir.path());
    let out = run(&["check", "--ckpt", s(&teacher)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(stdout.contains("PASS reference-formulas"));
    assert!(!stdout.contains("FAIL"));

    let mut v: Value = serde_json::from_str(&fs::read_to_string(&teacher).unwrap()).unwrap();
    v["alpha"].as_array_mut().unwrap().swap(2, 6);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, v.to_string()).unwrap();
    let out = run(&["check", "--ckpt", s(&bad)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_ne!(code(&out), 0);
    assert!(stdout.contains("FAIL load") && stdout.contains("strictly decreasing"), "{stdout}");
}
