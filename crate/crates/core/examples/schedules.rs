//! Noise schedules and step sub-sequences.
//!
//! `cargo run --example schedules`

use diffdistill::process::{loss_weight, step_alphas};
use diffdistill::schedule::{
    concentrated_subsequence, make_linear_beta_schedule, make_sigmoid_schedule, uniform_subsequence, SubSequence,
};

fn main() -> diffdistill::Result<()> {
    let sigmoid = make_sigmoid_schedule(500, -3.0, 3.0, 1.0)?;
    let linear = make_linear_beta_schedule(500, 1e-4, 0.02)?;
    println!("{:>5} {:>12} {:>12}", "t", "sigmoid", "linear");
    for t in [1, 10, 50, 100, 250, 400, 500] {
        println!("{t:>5} {:>12.6e} {:>12.6e}", sigmoid.alpha(t), linear.alpha(t));
    }

    let uniform = uniform_subsequence(500, 47)?;
    let dense = concentrated_subsequence(500, 20, 0.5, 0.2, 3)?;
    let explicit = SubSequence::new(vec![0, 1, 5, 40, 200, 500], 500)?;
    for (name, phi) in [("uniform", &uniform), ("concentrated", &dense), ("explicit", &explicit)] {
        println!("\n{name}: T' = {}, phi = {:?}", phi.steps(), phi.as_slice());
        for t in [1, phi.steps()] {
            let (a_t, a_prev) = step_alphas(&sigmoid, phi, t)?;
            let w = loss_weight(&sigmoid, phi, t)?;
            println!("  t = {t:>2}: a_t = {a_t:.6}, a_prev = {a_prev:.6}, gamma weight = {w:.4e}");
        }
    }

    // invalid sub-sequences name the broken invariant
    for bad in [vec![0, 3, 3, 500], vec![1, 250, 500], vec![0, 250, 499]] {
        println!("\n{bad:?}: {}", SubSequence::new(bad.clone(), 500).unwrap_err());
    }
    Ok(())
}
