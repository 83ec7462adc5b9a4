//! Drives the installed binary end to end: every subcommand against a
//! small but physical configuration, plus the error paths users hit
//! first (bad keys, malformed CSV, missing files).

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_holemem");

const SMALL_CONF: &str = "\
# small grids, fast to run
grid.t_end_us = 28
grid.dt_us = 0.015
grid.z_slices = 30
grid.detuning_bins = 300
input.fwhm_us = 2.5
input.center_us = 7.0
raman.write_start_us = 8.6
storage.ts_us = 6.0
retrieval.offset_us = 0.5
retrieval.window_us = 6.0
sweep.od_values = 2,5
sweep.ts_values = 6,10,14
sweep.optimize_iterations = 3
photon.trials = 200
photon.preparations = 2
";

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("small.conf"), SMALL_CONF).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .unwrap()
    }

    fn run_ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn simulate_writes_trace_and_summary() {
    let ws = Workspace::new();
    let stdout = ws.run_ok(&[
        "simulate",
        "--config",
        "small.conf",
        "--out",
        "run",
        "--gnuplot-script",
    ]);
    assert!(stdout.contains("eta_s"), "summary line missing: {stdout}");

    let trace = fs::read_to_string(ws.path("run/trace.csv")).unwrap();
    assert!(trace.starts_with("t_us,re_e,im_e,intensity\n"));
    for run in ["input", "slowlight", "storage"] {
        assert!(trace.contains(&format!("# run={run}")), "missing {run} stanza");
    }
    assert_eq!(
        first_line(&ws.path("run/summary.csv")),
        "eta_s,eta_s_decayed,leaked,delay_us"
    );
    assert!(ws.path("run/plot.gp").exists());
}

#[test]
fn simulate_without_control_pulses_retrieves_almost_nothing() {
    let ws = Workspace::new();
    let eta = |out: &str| -> f64 {
        fs::read_to_string(ws.path(out).join("summary.csv"))
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };
    ws.run_ok(&["simulate", "--config", "small.conf", "--out", "on"]);
    ws.run_ok(&[
        "simulate",
        "--config",
        "small.conf",
        "--out",
        "off",
        "--raman-area",
        "0",
    ]);
    // with the pulses off, only the transmitted input tail crosses the
    // retrieval window
    let (on, off) = (eta("on"), eta("off"));
    assert!(
        off < 0.1 * on,
        "window energy {off} without pulses vs {on} with them"
    );
}

#[test]
fn sweeps_write_expected_tables() {
    let ws = Workspace::new();
    ws.run_ok(&["sweep-od", "--config", "small.conf", "--out", "s"]);
    let od = fs::read_to_string(ws.path("s/sweep_od.csv")).unwrap();
    assert!(od.starts_with("od,eta_s\n"));
    assert_eq!(od.lines().count(), 3, "expected header plus two rows: {od}");

    ws.run_ok(&["sweep-ts", "--config", "small.conf", "--out", "s"]);
    let ts = fs::read_to_string(ws.path("s/sweep_ts.csv")).unwrap();
    assert!(ts.starts_with("ts_us,eta_s\n"));
    assert_eq!(ts.lines().count(), 4);
    // longer storage, more dephasing
    let etas: Vec<f64> = ts
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(etas.windows(2).all(|w| w[1] < w[0]), "decay not monotone: {etas:?}");
}

#[test]
fn oracle_check_reports_small_residual() {
    let ws = Workspace::new();
    let stdout = ws.run_ok(&["oracle-check", "--config", "small.conf", "--out", "o"]);
    assert!(stdout.contains("rms"), "stdout: {stdout}");
    let csv = fs::read_to_string(ws.path("o/oracle.csv")).unwrap();
    assert!(csv.starts_with("rms_rel,max_dev_rel\n"));
    let rms: f64 = csv.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(rms < 0.05, "rms {rms} surprisingly large for this grid");
}

#[test]
fn photon_stats_writes_histograms_snr_and_mu1() {
    let ws = Workspace::new();
    ws.run_ok(&["photon-stats", "--config", "small.conf", "--out", "p", "--seed", "7"]);
    for name in ["p/histogram_noise.csv", "p/histogram_1.csv"] {
        let text = fs::read_to_string(ws.path(name)).unwrap();
        assert!(text.starts_with("# trials="), "{name} missing trials header");
        assert!(text.contains("bin_start_us,counts"), "{name} missing column header");
    }
    assert_eq!(
        first_line(&ws.path("p/snr.csv")),
        "mu_in,signal_mean,noise_mean,snr,snr_sigma"
    );
    let mu1 = fs::read_to_string(ws.path("p/mu1.txt")).unwrap();
    assert!(mu1.starts_with("mu1 = "), "mu1.txt: {mu1}");
    assert!(mu1.contains("mu1_sigma = "));
}

#[test]
fn fit_recovers_parameters_from_csv() {
    let ws = Workspace::new();
    // exact synthetic inputs, so the fits must land on the truth
    let mut hole = String::from("detuning_khz,od\n");
    for i in 0..81 {
        let dk = -800.0 + 20.0 * i as f64;
        let g = 1.0 - 1.0 / (1.0 + (2.0 * dk / 230.0).abs().powf(3.0));
        hole.push_str(&format!("{dk},{}\n", 8.7 * g));
    }
    fs::write(ws.path("hole.csv"), hole).unwrap();
    let stdout = ws.run_ok(&["fit", "--kind", "hole", "hole.csv", "--out", "f"]);
    assert!(stdout.contains("delta0_khz"), "stdout: {stdout}");
    let fit = fs::read_to_string(ws.path("f/fit.csv")).unwrap();
    assert!(fit.starts_with("parameter,value,sigma\n"));
    let od: f64 = fit
        .lines()
        .find(|l| l.starts_with("od,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((od - 8.7).abs() < 1e-6, "fitted od {od}");

    let mut decay = String::from("ts_us,eta_s\n");
    for ts in [2.0f64, 6.0, 10.0, 14.0, 18.0, 22.0] {
        let arg = std::f64::consts::PI * 25.6e-3 * ts;
        decay.push_str(&format!("{ts},{}\n", 0.3 * (-arg * arg / (2.0 * 2f64.ln())).exp()));
    }
    fs::write(ws.path("decay.csv"), decay).unwrap();
    ws.run_ok(&["fit", "--kind", "decay", "decay.csv", "--out", "f"]);
    let fit = fs::read_to_string(ws.path("f/fit.csv")).unwrap();
    let gamma: f64 = fit
        .lines()
        .find(|l| l.starts_with("gamma_is_khz,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((gamma - 25.6).abs() < 1e-6, "fitted gamma {gamma}");
}

#[test]
fn help_lists_configuration_keys_with_units() {
    let ws = Workspace::new();
    let help = ws.run_ok(&["--help"]);
    for key in ["hole.od", "grid.dt_us", "photon.trials", "rng.seed"] {
        assert!(help.contains(key), "--help does not mention {key}");
    }
    assert!(help.contains("(kHz)"), "units missing from key help");
    for sub in ["simulate", "sweep-od", "sweep-ts", "fit", "photon-stats", "oracle-check"] {
        assert!(help.contains(sub), "--help does not list {sub}");
    }
}

#[test]
fn bad_inputs_exit_with_code_2_and_name_the_line() {
    let ws = Workspace::new();
    fs::write(ws.path("bad.conf"), "hole.od = 8.7\nmystery.knob = 1\n").unwrap();
    let out = ws.run(&["simulate", "--config", "bad.conf", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.conf:2"), "stderr should cite the line: {err}");
    assert!(err.contains("mystery.knob"), "stderr should name the key: {err}");

    fs::write(ws.path("bad.csv"), "ts_us,eta_s\n1.0,0.2\noops\n").unwrap();
    let out = ws.run(&["fit", "--kind", "decay", "bad.csv", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3"), "stderr should cite the line: {err}");

    let out = ws.run(&["fit", "--kind", "decay", "missing.csv", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ws.run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_and_thread_counts_give_identical_bytes() {
    let ws = Workspace::new();
    for (out, threads) in [("a", "1"), ("b", "1"), ("c", "4")] {
        ws.run_ok(&[
            "photon-stats",
            "--config",
            "small.conf",
            "--out",
            out,
            "--seed",
            "3",
            "--threads",
            threads,
        ]);
    }
    for name in ["histogram_noise.csv", "histogram_1.csv", "snr.csv", "mu1.txt"] {
        let a = fs::read(ws.path("a").join(name)).unwrap();
        let b = fs::read(ws.path("b").join(name)).unwrap();
        let c = fs::read(ws.path("c").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
        assert_eq!(a, c, "{name} differs between 1 and 4 threads");
    }

    ws.run_ok(&["simulate", "--config", "small.conf", "--out", "s1"]);
    ws.run_ok(&["simulate", "--config", "small.conf", "--out", "s2"]);
    assert_eq!(
        fs::read(ws.path("s1/trace.csv")).unwrap(),
        fs::read(ws.path("s2/trace.csv")).unwrap(),
        "trace.csv differs between reruns"
    );
}

#[test]
fn seed_flag_changes_sampled_histograms() {
    let ws = Workspace::new();
    ws.run_ok(&["photon-stats", "--config", "small.conf", "--out", "s1", "--seed", "1"]);
    ws.run_ok(&["photon-stats", "--config", "small.conf", "--out", "s2", "--seed", "2"]);
    assert_ne!(
        fs::read(ws.path("s1/histogram_1.csv")).unwrap(),
        fs::read(ws.path("s2/histogram_1.csv")).unwrap(),
        "different seeds should sample different counts"
    );
}
