//! Command-line front end: resolves a configuration, runs one of the
//! simulation or analysis commands and writes CSV files.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3
//! when a computation fails to converge or diverges.

use crate::analysis::{
    compute_snr, fit_decay, fit_mu1, monte_carlo_counts, DecayCurve, HistogramSpec, SignalShape,
    SnrReport,
};
use crate::atoms::EvolutionMode;
use crate::config::{self, Config};
use crate::envelope::ComplexEnvelope;
use crate::error::{Error, Result};
use crate::hole::{fit_hole, AbsorptionTrace};
use crate::oracle;
use crate::propagation::{propagate, PropagateOptions};
use crate::protocol::{run_sequence, sweep_od, sweep_storage_time};
use clap::{Arg, ArgAction, ArgMatches, Command};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Parses the process arguments, runs the selected command and returns
/// the exit code.
pub fn run() -> i32 {
    let matches = match command().try_get_matches() {
        Ok(matches) => matches,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn command() -> Command {
    Command::new("holemem")
        .about("Simulator and analysis toolkit for spectral-hole optical memories")
        .after_help(config::help_text())
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .global(true)
                .help("Configuration file (key = value lines, see below)"),
        )
        .arg(
            Arg::new("seed")
                .long("seed")
                .value_name("N")
                .value_parser(clap::value_parser!(u64))
                .global(true)
                .help("Override rng.seed"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("DIR")
                .default_value(".")
                .global(true)
                .help("Directory for output files"),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .global(true)
                .help("Worker threads (default: all cores); results do not depend on it"),
        )
        .subcommand(
            Command::new("simulate")
                .about("Run the write/store/read sequence; writes trace.csv and summary.csv")
                .arg(
                    Arg::new("raman-area")
                        .long("raman-area")
                        .value_name("PI")
                        .value_parser(clap::value_parser!(f64))
                        .help("Override both Raman pulse areas (units of pi)"),
                )
                .arg(
                    Arg::new("gnuplot-script")
                        .long("gnuplot-script")
                        .action(ArgAction::SetTrue)
                        .help("Also write plot.gp for plotting trace.csv"),
                ),
        )
        .subcommand(
            Command::new("sweep-od").about(
                "Storage efficiency against optical depth with per-point timing optimization; \
                 writes sweep_od.csv",
            ),
        )
        .subcommand(
            Command::new("sweep-ts")
                .about("Storage efficiency against storage time; writes sweep_ts.csv"),
        )
        .subcommand(
            Command::new("fit")
                .about("Fit a hole profile or a storage-time decay to a CSV file; writes fit.csv")
                .arg(
                    Arg::new("kind")
                        .long("kind")
                        .value_parser(["hole", "decay"])
                        .required(true)
                        .help("hole: detuning_khz,od columns; decay: ts_us,eta_s columns"),
                )
                .arg(
                    Arg::new("file")
                        .value_name("FILE")
                        .required(true)
                        .help("Input CSV file"),
                ),
        )
        .subcommand(
            Command::new("photon-stats").about(
                "Monte Carlo photon counting at the configured input photon numbers; \
                 writes histograms, snr.csv and mu1.txt",
            ),
        )
        .subcommand(
            Command::new("oracle-check").about(
                "Compare the propagation against the linear-response prediction; \
                 writes oracle.csv",
            ),
        )
}

fn dispatch(matches: &ArgMatches) -> Result<()> {
    if let Some(&threads) = matches.get_one::<usize>("threads") {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut config = match matches.get_one::<String>("config") {
        Some(path) => Config::load(Path::new(path))?,
        None => Config::default(),
    };
    if let Some(&seed) = matches.get_one::<u64>("seed") {
        config.set_count("rng.seed", seed);
    }
    let out = PathBuf::from(matches.get_one::<String>("out").expect("has a default"));
    std::fs::create_dir_all(&out)?;

    match matches.subcommand() {
        Some(("simulate", sub)) => simulate(&config, &out, sub),
        Some(("sweep-od", _)) => sweep_od_cmd(&config, &out),
        Some(("sweep-ts", _)) => sweep_ts_cmd(&config, &out),
        Some(("fit", sub)) => fit_cmd(&config, &out, sub),
        Some(("photon-stats", _)) => photon_stats_cmd(&config, &out),
        Some(("oracle-check", _)) => oracle_check_cmd(&config, &out),
        _ => unreachable!("a subcommand is required"),
    }
}

/// Writes through a temporary file so readers never see a partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn append_stanza(out: &mut String, name: &str, env: &ComplexEnvelope) {
    let _ = writeln!(out, "# run={name}");
    let grid = env.grid();
    for (k, e) in env.samples().iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", grid.time(k), e.re, e.im, e.norm_sqr());
    }
}

const GNUPLOT_SCRIPT: &str = "\
set datafile separator ','
set datafile commentschars '#'
set xlabel 'time (us)'
set ylabel 'intensity (rad/us)^2'
set key top left
plot 'trace.csv' index 0 using 1:4 with lines title 'input', \\
     'trace.csv' index 1 using 1:4 with lines title 'slow light', \\
     'trace.csv' index 2 using 1:4 with lines title 'stored and retrieved'
";

fn simulate(config: &Config, out: &Path, sub: &ArgMatches) -> Result<()> {
    let mut spec = config.sequence_spec()?;
    if let Some(&area_pi) = sub.get_one::<f64>("raman-area") {
        spec.write_area = area_pi * std::f64::consts::PI;
        spec.read_area = area_pi * std::f64::consts::PI;
    }
    spec.validate()?;
    let input = spec.input_envelope()?;

    // reference run without Raman pulses fixes the slow-light delay
    let no_raman = ComplexEnvelope::zeros(spec.time.clone());
    let opts = PropagateOptions {
        snapshots: config.flag("output.snapshots"),
        snapshot_stride: config.count("output.snapshot_stride").max(1) as usize,
        probe_times: vec![],
    };
    let slow = propagate(
        &input,
        &no_raman,
        &spec.profile,
        &spec.sim,
        EvolutionMode::Perturbative,
        &opts,
    )?;
    let delay = slow.output.peak_time() - input.peak_time();

    let stored = run_sequence(&spec)?;

    let mut trace = String::from("t_us,re_e,im_e,intensity\n");
    append_stanza(&mut trace, "input", &input);
    trace.push_str("\n\n");
    append_stanza(&mut trace, "slowlight", &slow.output);
    trace.push_str("\n\n");
    append_stanza(&mut trace, "storage", &stored.output);
    write_atomic(&out.join("trace.csv"), &trace)?;

    let summary = format!(
        "eta_s,eta_s_decayed,leaked,delay_us\n{},{},{},{}\n",
        stored.eta_s, stored.eta_s_decayed, stored.leaked, delay
    );
    write_atomic(&out.join("summary.csv"), &summary)?;

    if let Some(snap) = &slow.snapshots {
        let nz = snap.z_nodes.len();
        let crystal_length = snap.z_nodes.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
        let mut text = String::from("t_us,z_norm,re_e,im_e\n");
        for (ti, &t) in snap.times.iter().enumerate() {
            for (zi, &z) in snap.z_nodes.iter().enumerate() {
                let e = snap.fields[ti * nz + zi];
                let _ = writeln!(text, "{},{},{},{}", t, z / crystal_length, e.re, e.im);
            }
        }
        write_atomic(&out.join("snapshots.csv"), &text)?;
    }

    if sub.get_flag("gnuplot-script") {
        write_atomic(&out.join("plot.gp"), GNUPLOT_SCRIPT)?;
    }

    println!(
        "delay = {:.3} us, eta_s = {:.4}, with spin dephasing {:.4}, leaked = {:.4}",
        delay, stored.eta_s, stored.eta_s_decayed, stored.leaked
    );
    Ok(())
}

fn sweep_od_cmd(config: &Config, out: &Path) -> Result<()> {
    let spec = config.sequence_spec()?;
    let od_values = config.list("sweep.od_values");
    if od_values.is_empty() {
        return Err(Error::Config("sweep.od_values is empty".into()));
    }
    let iterations = config.count("sweep.optimize_iterations") as usize;
    let rows = sweep_od(&spec, od_values, iterations)?;
    let mut csv = String::from("od,eta_s\n");
    for row in &rows {
        let _ = writeln!(csv, "{},{}", row.od, row.eta_s);
        println!(
            "od = {:5.2}: eta_s = {:.4} (write pulse at {:.3} us)",
            row.od, row.eta_s, row.write_start
        );
    }
    write_atomic(&out.join("sweep_od.csv"), &csv)
}

fn sweep_ts_cmd(config: &Config, out: &Path) -> Result<()> {
    let spec = config.sequence_spec()?;
    let ts_values = config.list("sweep.ts_values");
    if ts_values.is_empty() {
        return Err(Error::Config("sweep.ts_values is empty".into()));
    }
    let rows = sweep_storage_time(&spec, ts_values)?;
    let mut csv = String::from("ts_us,eta_s\n");
    for (ts, eta) in &rows {
        let _ = writeln!(csv, "{ts},{eta}");
        println!("ts = {ts:5.1} us: eta_s = {eta:.4}");
    }
    write_atomic(&out.join("sweep_ts.csv"), &csv)
}

fn fit_cmd(config: &Config, out: &Path, sub: &ArgMatches) -> Result<()> {
    let kind = sub.get_one::<String>("kind").expect("required");
    let file = PathBuf::from(sub.get_one::<String>("file").expect("required"));
    let mut csv = String::from("parameter,value,sigma\n");
    match kind.as_str() {
        "hole" => {
            let trace = AbsorptionTrace::read_csv(&file)?;
            let init = config.hole_profile()?;
            let (profile, report) = fit_hole(&trace, &init)?;
            for (name, value, sigma) in [
                ("delta0_khz", profile.delta0_khz, report.sigma(0)),
                ("n", profile.n, report.sigma(1)),
                ("od", profile.d, report.sigma(2)),
            ] {
                let _ = writeln!(csv, "{name},{value},{sigma}");
                println!("{name:>12} = {value:.6} +- {sigma:.2e}");
            }
        }
        "decay" => {
            let curve = DecayCurve::read_csv(&file)?;
            let (gamma, eta0, report) = fit_decay(&curve)?;
            for (name, value, sigma) in [
                ("gamma_is_khz", gamma, report.sigma(0)),
                ("eta0", eta0, report.sigma(1)),
            ] {
                let _ = writeln!(csv, "{name},{value},{sigma}");
                println!("{name:>12} = {value:.6} +- {sigma:.2e}");
            }
        }
        other => return Err(Error::InvalidInput(format!("unknown fit kind '{other}'"))),
    }
    write_atomic(&out.join("fit.csv"), &csv)
}

fn photon_stats_cmd(config: &Config, out: &Path) -> Result<()> {
    let mu_values = config.list("photon.mu_in_values");
    if mu_values.is_empty() {
        return Err(Error::Config("photon.mu_in_values is empty".into()));
    }
    if mu_values.iter().any(|m| *m <= 0.0) {
        return Err(Error::Config(
            "photon.mu_in_values entries must be > 0".into(),
        ));
    }
    let spec = HistogramSpec {
        t_start_us: 0.0,
        span_us: config.scalar("photon.span_us"),
        bin_width_us: config.scalar("photon.bin_width_us"),
    };
    let shape = SignalShape::Gaussian {
        fwhm_us: config.scalar("photon.signal_fwhm_us"),
        center_us: config.scalar("photon.signal_center_us"),
    };
    let window_start = config.scalar("photon.window_start_us");
    let window = (window_start, window_start + config.scalar("photon.window_us"));
    let window_fraction = shape.window_fraction(window.0, window.1);
    if window_fraction <= 0.0 {
        return Err(Error::Config(
            "the counting window misses the signal entirely".into(),
        ));
    }
    let trials = config
        .count("photon.trials")
        .checked_mul(config.count("photon.preparations"))
        .ok_or_else(|| Error::Config("trials * preparations overflows".into()))?;
    let noise_mean = config.scalar("photon.noise_per_us") * spec.span_us;
    let seed = config.count("rng.seed");
    let run_seed = |k: u64| seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k));

    let noise_hist =
        monte_carlo_counts(&spec, &shape, 0.0, noise_mean, trials, 0.0, run_seed(0))?;
    write_atomic(&out.join("histogram_noise.csv"), &noise_hist.to_csv())?;

    let mut reports: Vec<SnrReport> = Vec::with_capacity(mu_values.len());
    let mut csv = String::from("mu_in,signal_mean,noise_mean,snr,snr_sigma\n");
    for (k, &mu) in mu_values.iter().enumerate() {
        let signal_mean = config.detected_window_mean(mu) / window_fraction;
        let hist = monte_carlo_counts(
            &spec,
            &shape,
            signal_mean,
            noise_mean,
            trials,
            mu,
            run_seed(k as u64 + 1),
        )?;
        write_atomic(&out.join(format!("histogram_{}.csv", k + 1)), &hist.to_csv())?;
        let report = compute_snr(&hist, &noise_hist, window)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            report.mu_in, report.signal_mean, report.noise_mean, report.snr, report.snr_sigma
        );
        println!(
            "mu_in = {:6.3}: SNR = {:.2} +- {:.2} (signal {:.4}, noise {:.4} per window)",
            report.mu_in, report.snr, report.snr_sigma, report.signal_mean, report.noise_mean
        );
        reports.push(report);
    }
    write_atomic(&out.join("snr.csv"), &csv)?;

    let (mu1, mu1_sigma) = fit_mu1(&reports)?;
    write_atomic(
        &out.join("mu1.txt"),
        &format!("mu1 = {mu1}\nmu1_sigma = {mu1_sigma}\n"),
    )?;
    println!("SNR crosses 1 at mu_in = {mu1:.4} +- {mu1_sigma:.4}");
    Ok(())
}

fn oracle_check_cmd(config: &Config, out: &Path) -> Result<()> {
    let profile = config.hole_profile()?;
    let grids = config.sim_grids()?;
    let input = config.input_envelope()?;
    let report = oracle::compare_oracle(&input, &profile, &grids)?;
    let csv = format!(
        "rms_rel,max_dev_rel\n{},{}\n",
        report.rms_rel, report.max_dev_rel
    );
    write_atomic(&out.join("oracle.csv"), &csv)?;
    println!(
        "propagation vs linear response: rms {:.3e}, worst point {:.3e} (relative)",
        report.rms_rel, report.max_dev_rel
    );
    Ok(())
}
