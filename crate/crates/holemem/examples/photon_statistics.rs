//! Monte Carlo photon counting for weak coherent inputs: build arrival
//! histograms, take the signal-to-noise ratio in a detection window and
//! extrapolate to the input photon number where SNR crosses one.
//!
//! Run with `cargo run --release --example photon_statistics`.

use holemem::analysis::{compute_snr, fit_mu1, monte_carlo_counts, HistogramSpec, SignalShape};
use holemem::{config::Config, Result};

fn main() -> Result<()> {
    let config = Config::default();
    let spec = HistogramSpec {
        t_start_us: 0.0,
        span_us: config.scalar("photon.span_us"),
        bin_width_us: config.scalar("photon.bin_width_us"),
    };
    let shape = SignalShape::Gaussian {
        fwhm_us: config.scalar("photon.signal_fwhm_us"),
        center_us: config.scalar("photon.signal_center_us"),
    };
    let start = config.scalar("photon.window_start_us");
    let window = (start, start + config.scalar("photon.window_us"));
    let in_window = shape.window_fraction(window.0, window.1);
    let noise_mean = config.scalar("photon.noise_per_us") * spec.span_us;
    let trials = 30_000;

    println!(
        "{trials} trials, {:.1} us window catching {:.0}% of the signal shape",
        window.1 - window.0,
        100.0 * in_window
    );
    println!();
    println!(" mu_in    SNR            counts/trial in window");

    let noise = monte_carlo_counts(&spec, &shape, 0.0, noise_mean, trials, 0.0, 1)?;
    let mut reports = Vec::new();
    for (k, mu_in) in [0.25, 0.5, 1.0].into_iter().enumerate() {
        let signal_mean = config.detected_window_mean(mu_in) / in_window;
        let hist = monte_carlo_counts(
            &spec,
            &shape,
            signal_mean,
            noise_mean,
            trials,
            mu_in,
            2 + k as u64,
        )?;
        let report = compute_snr(&hist, &noise, window)?;
        println!(
            "{mu_in:5.2}   {:6.2} +- {:.2}   signal {:.4}, noise {:.4}",
            report.snr, report.snr_sigma, report.signal_mean, report.noise_mean
        );
        reports.push(report);
    }

    let (mu1, sigma) = fit_mu1(&reports)?;
    println!();
    println!("SNR reaches 1 at mu_in = {mu1:.4} +- {sigma:.4}");
    Ok(())
}
