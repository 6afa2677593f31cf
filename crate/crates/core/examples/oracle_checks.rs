//! The numerical oracles on their own: forward composition, the posterior
//! against Bayes' rule, the identity sub-sequence against the per-step
//! formulas, and a gradient check.
//!
//! `cargo run --release --example oracle_checks`

use diffdistill::checks::{
    bayes_grid_gap, forward_composition_gap, gradient_check, identity_reference_gap, noiseless_posterior_gap,
    random_cases,
};
use diffdistill::net::{Activation, EpsilonNet, LossNorm};
use diffdistill::schedule::make_sigmoid_schedule;

fn main() -> diffdistill::Result<()> {
    for (i, c) in random_cases(5, 1, 2, 40, 1)?.iter().enumerate() {
        let mc = forward_composition_gap(&c.schedule, &c.phi, c.t, &c.x0, 50_000, i as u64)?;
        let point = noiseless_posterior_gap(&c.schedule, &c.phi, c.t, &c.x0)?;
        let grid = bayes_grid_gap(&c.schedule, &c.phi, c.t, 0.5 * c.x0[0], c.x0[0], 101)?;
        println!(
            "T={:>3} T'={:>2} t={:>2}: composition {:.2}/{:.2} SE, noiseless point {point:.1e}, Bayes grid {grid:.1e}",
            c.schedule.steps(),
            c.phi.steps(),
            c.t,
            mc.mean_se,
            mc.variance_se
        );
    }
    let net = EpsilonNet::new(2, 8, &[16, 16], Activation::SmoothGated, 2)?;
    let schedule = make_sigmoid_schedule(100, -3.0, 3.0, 1.0)?;
    println!("identity sub-sequence vs per-step formulas: {:.1e}", identity_reference_gap(&net, &schedule, 200, 3)?);
    println!("gradient check: {:.1e}", gradient_check(&net, LossNorm::L2, 4)?);
    Ok(())
}
