//! Sample-quality metrics on synthetic point clouds.
//!
//! `cargo run --release --example metrics`

use diffdistill::data::{gaussian_mixture, ring_centers, swiss_roll};
use diffdistill::eval::{energy_distance, sliced_wasserstein};

fn main() -> diffdistill::Result<()> {
    let reference = swiss_roll(3_000, 0.05, 1)?;
    let candidates = [
        ("fresh swiss roll", swiss_roll(3_000, 0.05, 2)?),
        ("noisier swiss roll", swiss_roll(3_000, 0.3, 3)?),
        ("shifted swiss roll", swiss_roll(3_000, 0.05, 4)? + ndarray::array![0.5, 0.0]),
        ("ring of modes", gaussian_mixture(3_000, ring_centers(8, 1.0).view(), 0.1, 5)?),
    ];
    println!("{:<20} {:>10} {:>10}", "", "energy", "sliced W1");
    for (name, pts) in &candidates {
        println!(
            "{name:<20} {:>10.5} {:>10.5}",
            energy_distance(pts.view(), reference.view())?,
            sliced_wasserstein(pts.view(), reference.view(), 128, 6)?
        );
    }
    Ok(())
}
