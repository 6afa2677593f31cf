//! One teacher, several students on sub-sequences that do not divide the
//! teacher's step count: uniform 47 steps, steps concentrated mid-chain, and
//! scattered steps.
//!
//! `cargo run --release --example flexible_subsequence`

use diffdistill::data::swiss_roll;
use diffdistill::eval::energy_distance;
use diffdistill::sample::ancestral_sample;
use diffdistill::schedule::{concentrated_subsequence, make_sigmoid_schedule, uniform_subsequence};
use diffdistill::train::{distill, train_teacher, StudentInit, TrainConfig};

fn main() -> diffdistill::Result<()> {
    let data = swiss_roll(10_000, 0.05, 1)?;
    let held_out = swiss_roll(3_000, 0.05, 2)?;
    let schedule = make_sigmoid_schedule(300, -3.0, 3.0, 1.0)?;
    let teacher = train_teacher(data.view(), &schedule, &TrainConfig { steps: 3_000, lr: 1e-3, ..TrainConfig::teacher() })?;

    let students = [
        ("uniform 47", uniform_subsequence(300, 47)?),
        ("concentrated 30", concentrated_subsequence(300, 30, 0.6, 0.3, 4)?),
        ("scattered 17", concentrated_subsequence(300, 17, 0.0, 1.0, 5)?),
    ];
    let config = TrainConfig { steps: 1_500, lr: 1e-3, ..TrainConfig::distill() };
    for (name, phi) in students {
        let run = distill(&teacher.bundle, &phi, &config, data.view(), StudentInit::Fresh)?;
        let samples = ancestral_sample(&run.bundle, 3_000, 6)?;
        println!(
            "{name:<16} loss ema {:.4}, energy distance {:.5}, first steps {:?}",
            run.log.last().map_or(f64::NAN, |r| r.loss_ema),
            energy_distance(samples.view(), held_out.view())?,
            &phi.as_slice()[..6.min(phi.as_slice().len())]
        );
    }
    Ok(())
}
