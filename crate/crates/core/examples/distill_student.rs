//! Distill a teacher into a 23-step student, from scratch and warm-started
//! from the teacher's weights, and compare both to the teacher itself.
//!
//! `cargo run --release --example distill_student -- [teacher.json]`
//!
//! Without a checkpoint a quick Swiss roll teacher is trained first.

use diffdistill::data::swiss_roll;
use diffdistill::eval::energy_distance;
use diffdistill::persistence::{load_bundle, save_bundle};
use diffdistill::sample::ancestral_sample;
use diffdistill::schedule::{make_sigmoid_schedule, uniform_subsequence};
use diffdistill::train::{distill, train_teacher, StudentInit, TrainConfig};

fn main() -> diffdistill::Result<()> {
    let data = swiss_roll(10_000, 0.05, 1)?;
    let held_out = swiss_roll(3_000, 0.05, 2)?;
    let teacher = match std::env::args().nth(1) {
        Some(path) => load_bundle(path)?,
        None => {
            let schedule = make_sigmoid_schedule(200, -3.0, 3.0, 1.0)?;
            let config = TrainConfig { steps: 3_000, lr: 1e-3, ..TrainConfig::teacher() };
            train_teacher(data.view(), &schedule, &config)?.bundle
        }
    };
    let ed = |b: &diffdistill::train::ModelBundle| -> diffdistill::Result<f64> {
        energy_distance(ancestral_sample(b, 3_000, 5)?.view(), held_out.view())
    };
    println!("teacher ({} steps): energy distance {:.5}", teacher.steps(), ed(&teacher)?);

    // when T' divides T a warm-started student already matches its targets
    // exactly; 23 does not divide 200
    let phi = uniform_subsequence(teacher.steps(), 23)?;
    let config = TrainConfig { steps: 2_000, lr: 1e-3, ..TrainConfig::distill() };
    for (name, init) in [("fresh", StudentInit::Fresh), ("warm start", StudentInit::WarmStart)] {
        let run = distill(&teacher, &phi, &config, data.view(), init)?;
        let (first, last) = (run.log.first().unwrap().loss_ema, run.log.last().unwrap().loss_ema);
        println!("student, {name}: loss ema {first:.3e} -> {last:.3e}, energy distance {:.5}", ed(&run.bundle)?);
        if init == StudentInit::Fresh {
            save_bundle(&run.bundle, "student23.json")?;
        }
    }
    Ok(())
}
