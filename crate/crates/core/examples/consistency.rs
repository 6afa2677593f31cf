//! Teacher/student consistency: decode shared noises with DDIM through both
//! models, compare paired distances against a shuffled pairing, then walk a
//! spherical interpolation between two noises.
//!
//! `cargo run --release --example consistency`

use diffdistill::data::swiss_roll;
use diffdistill::eval::consistency_score;
use diffdistill::sample::{ddim_sample, interpolate_noises};
use diffdistill::schedule::{make_sigmoid_schedule, uniform_subsequence};
use diffdistill::train::{distill, train_teacher, StudentInit, TrainConfig};
use ndarray::array;

fn main() -> diffdistill::Result<()> {
    let data = swiss_roll(10_000, 0.05, 1)?;
    let schedule = make_sigmoid_schedule(200, -3.0, 3.0, 1.0)?;
    let teacher = train_teacher(data.view(), &schedule, &TrainConfig { steps: 3_000, lr: 1e-3, ..TrainConfig::teacher() })?.bundle;
    let phi = uniform_subsequence(200, 20)?;
    let config = TrainConfig { steps: 2_000, lr: 1e-3, ..TrainConfig::distill() };
    let student = distill(&teacher, &phi, &config, data.view(), StudentInit::Fresh)?.bundle;

    let score = consistency_score(&teacher, &student, 1_000, 7)?;
    println!(
        "paired mse {:.4}, shuffled mse {:.4}, ratio {:.4}",
        score.paired_mse,
        score.random_baseline_mse,
        score.ratio()
    );
    let control = consistency_score(&teacher, &teacher, 1_000, 7)?;
    println!("teacher against itself: paired mse {}", control.paired_mse);

    let path = interpolate_noises(array![1.5, -0.3].view(), array![-0.4, 1.2].view(), 8)?;
    let (t, s) = (ddim_sample(&teacher, path.points.view())?, ddim_sample(&student, path.points.view())?);
    println!("\n{:>18} {:>18}", "teacher", "student");
    for (a, b) in t.rows().into_iter().zip(s.rows()) {
        println!("({:>7.3}, {:>7.3})  ({:>7.3}, {:>7.3})", a[0], a[1], b[0], b[1]);
    }
    Ok(())
}
