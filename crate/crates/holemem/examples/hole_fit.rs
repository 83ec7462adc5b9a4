//! Recover hole parameters from a noisy absorption spectrum, the way a
//! measured optical-depth trace would be reduced.
//!
//! Run with `cargo run --release --example hole_fit`.

use holemem::{fit_hole, AbsorptionTrace, HoleProfile, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let truth = HoleProfile::new(230.0, 3.0, 8.7, 2.1)?;

    // sample the spectrum every 10 kHz and add 2% multiplicative noise
    let detunings: Vec<f64> = (0..161).map(|i| -800.0 + 10.0 * i as f64).collect();
    let clean = AbsorptionTrace::from_profile(&truth, detunings.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noisy: Vec<f64> = clean
        .optical_depths()
        .iter()
        .map(|&od| od * (1.0 + 0.02 * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    let trace = AbsorptionTrace::new(detunings, noisy)?;

    // start the fit well away from the truth
    let init = HoleProfile::new(150.0, 2.0, 5.0, 2.1)?;
    let (fit, report) = fit_hole(&trace, &init)?;

    println!("              truth     fitted    1-sigma");
    println!(
        "delta0_khz   {:7.1}   {:8.2}   {:.2}",
        truth.delta0_khz,
        fit.delta0_khz,
        report.sigma(0)
    );
    println!("n            {:7.1}   {:8.3}   {:.3}", truth.n, fit.n, report.sigma(1));
    println!("od           {:7.1}   {:8.3}   {:.3}", truth.d, fit.d, report.sigma(2));
    println!();
    println!(
        "{} iterations, residual norm {:.2e}",
        report.iterations, report.residual_norm
    );
    Ok(())
}
