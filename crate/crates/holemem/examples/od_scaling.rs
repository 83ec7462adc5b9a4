//! Storage efficiency as a function of optical depth. Each point
//! re-optimizes the write-pulse timing, since the slow-light delay that
//! sets the best moment for the transfer grows with d.
//!
//! Run with `cargo run --release --example od_scaling` (takes ~15 s).

use holemem::protocol::sweep_od;
use holemem::{config::Config, Result};

fn main() -> Result<()> {
    let config = Config::default();
    let base = config.sequence_spec()?;

    let ods = [2.0, 5.0, 8.0, 11.0];
    println!("   d   eta_s   write pulse at");
    for point in sweep_od(&base, &ods, 8)? {
        println!(
            "{:4.0}   {:.3}   {:.2} us",
            point.od, point.eta_s, point.write_start
        );
    }
    println!();
    println!("efficiency keeps growing with d: more of the pulse fits inside the medium");
    Ok(())
}
