//! Full write, store and read sequence: the input pulse is compressed
//! inside the hole, a Raman pulse converts the optical coherence to a
//! spin wave, and a second Raman pulse recalls it after the storage
//! time. Prints where every bit of the input energy ended up.
//!
//! Run with `cargo run --release --example storage_sequence`.

use holemem::protocol::{run_sequence, spin_dephasing_factor};
use holemem::{config::Config, Result};

fn main() -> Result<()> {
    let config = Config::default();
    let spec = config.sequence_spec()?;
    let stored = run_sequence(&spec)?;

    let ts = spec.storage_time;
    let decay = spin_dephasing_factor(spec.gamma_is_khz, ts);

    println!(
        "write pulse at {:.2} us, {:.2} us storage, read pulse at {:.2} us",
        spec.write_start,
        ts,
        spec.read_start()
    );
    println!("retrieval window {:?} us", spec.window());
    println!();
    println!("input pulse energy        {:.3e}", stored.input_energy);
    println!("leaked before the write   {:.1}%", 100.0 * stored.leaked);
    println!("retrieved in the window   {:.1}%  (eta_s)", 100.0 * stored.eta_s);
    println!("left in the excited state {:.1}%", 100.0 * stored.final_excited_energy);
    println!("left in the spin state    {:.1}%", 100.0 * stored.final_spin_energy);
    println!();
    println!(
        "spin dephasing over {ts} us multiplies eta_s by {decay:.3}: {:.1}%",
        100.0 * stored.eta_s_decayed
    );
    Ok(())
}
