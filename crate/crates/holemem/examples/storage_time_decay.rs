//! Efficiency against storage time, and the round trip back: fit the
//! simulated decay curve to recover the spin linewidth that produced it.
//!
//! Run with `cargo run --release --example storage_time_decay`.

use holemem::analysis::{fit_decay, DecayCurve};
use holemem::protocol::sweep_storage_time;
use holemem::{config::Config, Result};

fn main() -> Result<()> {
    let config = Config::default();
    let base = config.sequence_spec()?;

    let ts: Vec<f64> = (0..10).map(|i| 2.0 + 3.0 * i as f64).collect();
    let rows = sweep_storage_time(&base, &ts)?;

    println!("  T_s    eta_s");
    for (t, eta) in &rows {
        println!("{t:5.1}   {eta:.4}");
    }

    let curve = DecayCurve::new(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
    )?;
    let (gamma, eta0, report) = fit_decay(&curve)?;
    println!();
    println!(
        "gaussian decay fit: gamma_IS = {gamma:.2} kHz (configured {}), eta_s(0) = {eta0:.3}",
        base.gamma_is_khz
    );
    println!(
        "converged after {} iterations, residual norm {:.1e}",
        report.iterations, report.residual_norm
    );
    Ok(())
}
