//! End-to-end run on the Swiss roll: train a 500-step teacher, distill it
//! into 50-step and 47-step students, and report sample quality and
//! teacher/student consistency.
//!
//! `cargo run --release --example swiss_roll_pipeline -- [teacher_steps] [distill_steps] [teacher.json]`
//!
//! With a checkpoint path the teacher is loaded from it when it exists and
//! saved to it otherwise.

use std::path::Path;
use std::time::Instant;

use diffdistill::data::swiss_roll;
use diffdistill::eval::{consistency_score, energy_distance};
use diffdistill::persistence::{load_bundle, save_bundle};
use diffdistill::sample::{ancestral_sample, ancestral_sample_with, NoiseScale};
use diffdistill::schedule::{make_sigmoid_schedule, uniform_subsequence};
use diffdistill::train::{distill, train_teacher, StudentInit, TrainConfig};

fn main() -> diffdistill::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let teacher_steps = args.first().map_or(40_000, |a| a.parse().expect("teacher steps"));
    let distill_steps = args.get(1).map_or(20_000, |a| a.parse().expect("distill steps"));
    let cache = args.get(2).map(Path::new);

    let train = swiss_roll(20_000, 0.05, 1)?;
    let held_out = swiss_roll(10_000, 0.05, 2)?;
    let n = held_out.nrows();

    let clock = Instant::now();
    let teacher = match cache {
        Some(path) if path.exists() => load_bundle(path)?,
        _ => {
            let schedule = make_sigmoid_schedule(500, -3.0, 3.0, 1.0)?;
            let config = TrainConfig { steps: teacher_steps, seed: 7, ..TrainConfig::teacher() };
            let run = train_teacher(train.view(), &schedule, &config)?;
            let last = run.log.last().map_or(f64::NAN, |r| r.loss_ema);
            println!("teacher: {teacher_steps} steps in {:.1?}, loss ema {last:.4}", clock.elapsed());
            if let Some(path) = cache {
                save_bundle(&run.bundle, path)?;
            }
            run.bundle
        }
    };
    let samples = ancestral_sample(&teacher, n, 11)?;
    let teacher_ed = energy_distance(samples.view(), held_out.view())?;
    let floor = energy_distance(swiss_roll(n, 0.05, 3)?.view(), held_out.view())?;
    println!("teacher energy distance {teacher_ed:.5} (fresh data scores {floor:.5})");

    for tprime in [50, 47] {
        let phi = uniform_subsequence(500, tprime)?;
        let short = ancestral_sample_with(&teacher.net, &teacher.schedule, &phi, n, 11, NoiseScale::StdDev)?;
        let short_ed = energy_distance(short.view(), held_out.view())?;
        println!("teacher net on the {tprime}-step chain: energy distance {short_ed:.5}");

        let clock = Instant::now();
        let config = TrainConfig { steps: distill_steps, seed: 8, ..TrainConfig::distill() };
        let student = distill(&teacher, &phi, &config, train.view(), StudentInit::Fresh)?;
        let samples = ancestral_sample(&student.bundle, n, 12)?;
        let ed = energy_distance(samples.view(), held_out.view())?;
        let score = consistency_score(&teacher, &student.bundle, 1000, 13)?;
        let emas: Vec<String> = student
            .log
            .iter()
            .filter(|r| r.step <= 2000 && r.step % 200 == 0)
            .map(|r| format!("{:.4}", r.loss_ema))
            .collect();
        println!(
            "student T'={tprime}: {:.1?}, energy distance {ed:.5} ({:.2}x teacher), consistency ratio {:.4}",
            clock.elapsed(),
            ed / teacher_ed,
            score.ratio()
        );
        println!("  early loss ema: {}", emas.join(" "));
    }
    Ok(())
}
