//! Train a small teacher on an eight-mode Gaussian mixture and save it.
//!
//! `cargo run --release --example train_teacher -- [steps] [out.json]`

use diffdistill::data::{gaussian_mixture, ring_centers};
use diffdistill::eval::energy_distance;
use diffdistill::persistence::save_bundle;
use diffdistill::sample::ancestral_sample;
use diffdistill::schedule::make_sigmoid_schedule;
use diffdistill::train::{train_teacher, TrainConfig};

fn main() -> diffdistill::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps = args.first().map_or(3_000, |a| a.parse().expect("steps"));
    let out = args.get(1).cloned().unwrap_or_else(|| "mixture_teacher.json".into());

    let centers = ring_centers(8, 2.0);
    let data = gaussian_mixture(10_000, centers.view(), 0.1, 1)?;
    let schedule = make_sigmoid_schedule(200, -3.0, 3.0, 1.0)?;
    let config = TrainConfig { steps, lr: 1e-3, log_every: steps.max(10) / 10, ..TrainConfig::teacher() };
    let run = train_teacher(data.view(), &schedule, &config)?;
    for r in &run.log {
        println!("step {:>6}  loss ema {:.4}", r.step, r.loss_ema);
    }

    let held_out = gaussian_mixture(2_000, centers.view(), 0.1, 2)?;
    let samples = ancestral_sample(&run.bundle, 2_000, 3)?;
    println!("energy distance to held-out data: {:.5}", energy_distance(samples.view(), held_out.view())?);
    save_bundle(&run.bundle, &out)?;
    println!("saved {out}");
    Ok(())
}
