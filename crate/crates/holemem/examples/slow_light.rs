//! Send a weak Gaussian pulse through the spectral hole and measure how
//! much the steep dispersion inside the transparency window delays it.
//!
//! Run with `cargo run --release --example slow_light`.

use holemem::atoms::EvolutionMode;
use holemem::envelope::ComplexEnvelope;
use holemem::propagation::{propagate, PropagateOptions};
use holemem::{config::Config, oracle, Result};

fn main() -> Result<()> {
    let config = Config::default();
    let profile = config.hole_profile()?;
    let sim = config.sim_grids()?;
    let input = config.input_envelope()?;

    let run = propagate(
        &input,
        &ComplexEnvelope::zeros(input.grid().clone()),
        &profile,
        &sim,
        EvolutionMode::Perturbative,
        &PropagateOptions::default(),
    )?;

    let delay = run.output.peak_time() - input.peak_time();
    let transmitted = run.output.energy() / input.energy();
    let predicted = oracle::group_delay_at_center(&profile);

    println!("hole: width {} kHz, exponent {}, depth d = {}", profile.delta0_khz, profile.n, profile.d);
    println!("input peak at {:.2} us, output peak at {:.2} us", input.peak_time(), run.output.peak_time());
    println!("measured delay    {delay:.3} us");
    println!("dispersion theory {predicted:.3} us");
    println!("transmitted energy fraction {transmitted:.3}");
    Ok(())
}
