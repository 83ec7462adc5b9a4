//! Run configuration: a flat `key = value` file with a fixed set of
//! keys, each with a default and a documented unit.
//!
//! Every run parameter lives here so that a single file reproduces a
//! run exactly. Unknown keys and duplicates are rejected with the line
//! number; the canonical dump round-trips through the parser.

use crate::envelope::ComplexEnvelope;
use crate::error::{Error, Result};
use crate::grid::{DetuningGrid, TimeGrid};
use crate::hole::HoleProfile;
use crate::propagation::SimGrids;
use crate::protocol::SequenceSpec;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Count(u64),
    Flag(bool),
    List(Vec<f64>),
}

enum Default_ {
    Scalar(f64),
    Count(u64),
    Flag(bool),
    List(&'static [f64]),
}

struct Entry {
    name: &'static str,
    default: Default_,
    help: &'static str,
}

const PI: f64 = std::f64::consts::PI;

static REGISTRY: &[Entry] = &[
    Entry {
        name: "hole.delta0_khz",
        default: Default_::Scalar(230.0),
        help: "spectral hole width parameter (kHz)",
    },
    Entry {
        name: "hole.n",
        default: Default_::Scalar(3.0),
        help: "hole edge steepness exponent (dimensionless)",
    },
    Entry {
        name: "hole.od",
        default: Default_::Scalar(8.7),
        help: "peak optical depth of the absorbing feature (dimensionless)",
    },
    Entry {
        name: "hole.feature_width_mhz",
        default: Default_::Scalar(2.1),
        help: "full width of the prepared absorbing feature (MHz)",
    },
    Entry {
        name: "hole.oscillator_strength_ratio",
        default: Default_::Scalar(1.0),
        help: "optical-depth scale factor for stronger or weaker transitions (dimensionless)",
    },
    Entry {
        name: "grid.t_start_us",
        default: Default_::Scalar(0.0),
        help: "start of the time grid (us)",
    },
    Entry {
        name: "grid.t_end_us",
        default: Default_::Scalar(40.0),
        help: "end of the time grid (us)",
    },
    Entry {
        name: "grid.dt_us",
        default: Default_::Scalar(0.01),
        help: "time step (us)",
    },
    Entry {
        name: "grid.z_slices",
        default: Default_::Count(100),
        help: "number of propagation slices through the crystal (count)",
    },
    Entry {
        name: "grid.detuning_bins",
        default: Default_::Count(1200),
        help: "number of detuning bins across the span (count, even)",
    },
    Entry {
        name: "grid.detuning_span_mhz",
        default: Default_::Scalar(6.0),
        help: "full width of the detuning grid centered on the hole (MHz)",
    },
    Entry {
        name: "input.fwhm_us",
        default: Default_::Scalar(3.0),
        help: "input pulse intensity FWHM (us)",
    },
    Entry {
        name: "input.center_us",
        default: Default_::Scalar(10.0),
        help: "input pulse center time (us)",
    },
    Entry {
        name: "input.peak_rad_per_us",
        default: Default_::Scalar(1e-3),
        help: "input pulse peak Rabi frequency (rad/us)",
    },
    Entry {
        name: "raman.write_start_us",
        default: Default_::Scalar(12.1),
        help: "start of the write pulse (us)",
    },
    Entry {
        name: "raman.duration_us",
        default: Default_::Scalar(1.0),
        help: "duration of each Raman pulse (us)",
    },
    Entry {
        name: "raman.rise_us",
        default: Default_::Scalar(0.05),
        help: "raised-cosine edge time of the Raman pulses (us)",
    },
    Entry {
        name: "raman.write_area_pi",
        default: Default_::Scalar(0.85),
        help: "write pulse area (units of pi)",
    },
    Entry {
        name: "raman.read_area_pi",
        default: Default_::Scalar(0.85),
        help: "read pulse area (units of pi)",
    },
    Entry {
        name: "storage.ts_us",
        default: Default_::Scalar(5.0),
        help: "storage time between the Raman pulse starts (us)",
    },
    Entry {
        name: "storage.gamma_is_khz",
        default: Default_::Scalar(25.6),
        help: "inhomogeneous spin linewidth FWHM, 0 disables dephasing (kHz)",
    },
    Entry {
        name: "retrieval.offset_us",
        default: Default_::Scalar(0.0),
        help: "gap between the read pulse end and the retrieval window (us)",
    },
    Entry {
        name: "retrieval.window_us",
        default: Default_::Scalar(7.0),
        help: "length of the retrieval window (us)",
    },
    Entry {
        name: "sweep.od_values",
        default: Default_::List(&[2.0, 4.0, 6.0, 8.0, 10.0, 12.0]),
        help: "optical depths for sweep-od, strictly increasing (dimensionless)",
    },
    Entry {
        name: "sweep.ts_values",
        default: Default_::List(&[2.0, 6.0, 10.0, 14.0, 18.0, 22.0, 26.0, 30.0]),
        help: "storage times for sweep-ts (us)",
    },
    Entry {
        name: "sweep.optimize_iterations",
        default: Default_::Count(10),
        help: "golden-section refinements of the write-pulse timing (count)",
    },
    Entry {
        name: "photon.mu_in_values",
        default: Default_::List(&[1.0]),
        help: "mean input photon numbers for photon-stats (photons)",
    },
    Entry {
        name: "photon.noise_per_us",
        default: Default_::Scalar(2.25e-3),
        help: "background counts per trial per microsecond (1/us)",
    },
    Entry {
        name: "photon.span_us",
        default: Default_::Scalar(10.0),
        help: "histogram span (us)",
    },
    Entry {
        name: "photon.window_start_us",
        default: Default_::Scalar(3.0),
        help: "start of the counting window inside the histogram (us)",
    },
    Entry {
        name: "photon.window_us",
        default: Default_::Scalar(4.0),
        help: "length of the counting window (us)",
    },
    Entry {
        name: "photon.bin_width_us",
        default: Default_::Scalar(0.2),
        help: "histogram bin width (us)",
    },
    Entry {
        name: "photon.signal_fwhm_us",
        default: Default_::Scalar(3.0),
        help: "FWHM of the retrieved signal used for arrival times (us)",
    },
    Entry {
        name: "photon.signal_center_us",
        default: Default_::Scalar(5.0),
        help: "center of the retrieved signal inside the histogram (us)",
    },
    Entry {
        name: "photon.trials",
        default: Default_::Count(1000),
        help: "storage trials per preparation (count)",
    },
    Entry {
        name: "photon.preparations",
        default: Default_::Count(30),
        help: "hole preparations, each followed by the full trial block (count)",
    },
    Entry {
        name: "photon.detected_mean_at_mu1",
        default: Default_::Scalar(0.297),
        help: "detected in-window signal mean per trial at mu_in = 1; set <= 0 to \
               derive it from eta_s, path transmission and detector efficiency (photons)",
    },
    Entry {
        name: "photon.path_transmission",
        default: Default_::Scalar(0.15),
        help: "optical transmission between the crystal and the detector (dimensionless)",
    },
    Entry {
        name: "photon.detector_efficiency",
        default: Default_::Scalar(1.0),
        help: "detector quantum efficiency (dimensionless)",
    },
    Entry {
        name: "photon.eta_s",
        default: Default_::Scalar(0.23),
        help: "storage efficiency assumed when deriving the detected mean (dimensionless)",
    },
    Entry {
        name: "rng.seed",
        default: Default_::Count(1),
        help: "random seed for photon statistics (count)",
    },
    Entry {
        name: "output.snapshots",
        default: Default_::Flag(false),
        help: "write field snapshots along the crystal (true/false)",
    },
    Entry {
        name: "output.snapshot_stride",
        default: Default_::Count(10),
        help: "time steps between snapshots (count)",
    },
];

fn materialize(d: &Default_) -> Value {
    match d {
        Default_::Scalar(v) => Value::Scalar(*v),
        Default_::Count(v) => Value::Count(*v),
        Default_::Flag(v) => Value::Flag(*v),
        Default_::List(v) => Value::List(v.to_vec()),
    }
}

/// One line per key for the command-line help.
pub fn help_text() -> String {
    let mut out = String::from("Configuration keys (key = value, one per line, # comments):\n");
    for entry in REGISTRY {
        let default = format_value(&materialize(&entry.default));
        let shown = if default.is_empty() { "(empty)" } else { &default };
        let _ = writeln!(out, "  {:32} {} [default: {}]", entry.name, entry.help, shown);
    }
    out
}

fn format_value(value: &Value) -> String {
    match value {
        Value::Scalar(v) => format!("{v}"),
        Value::Count(v) => format!("{v}"),
        Value::Flag(v) => format!("{v}"),
        Value::List(v) => v
            .iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(","),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: Vec<Value>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: REGISTRY.iter().map(|e| materialize(&e.default)).collect(),
        }
    }
}

impl Config {
    fn index(name: &str) -> Option<usize> {
        REGISTRY.iter().position(|e| e.name == name)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut seen = vec![false; REGISTRY.len()];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: source.to_string(),
                line,
                message,
            };
            let (key, value_text) = trimmed
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', found '{trimmed}'")))?;
            let key = key.trim();
            let value_text = value_text.trim();
            let slot = Self::index(key).ok_or_else(|| err(format!("unknown key '{key}'")))?;
            if seen[slot] {
                return Err(err(format!("duplicate key '{key}'")));
            }
            seen[slot] = true;
            config.values[slot] = parse_value(&REGISTRY[slot].default, value_text)
                .map_err(|message| err(format!("{key}: {message}")))?;
        }
        Ok(config)
    }

    /// Canonical form: every key in registry order.
    pub fn dump(&self) -> String {
        let mut out = String::from("# holemem run configuration\n");
        for (entry, value) in REGISTRY.iter().zip(&self.values) {
            let _ = writeln!(out, "{} = {}", entry.name, format_value(value));
        }
        out
    }

    pub fn scalar(&self, name: &str) -> f64 {
        match &self.values[Self::index(name).expect("registered key")] {
            Value::Scalar(v) => *v,
            other => panic!("{name} is not a scalar: {other:?}"),
        }
    }

    pub fn count(&self, name: &str) -> u64 {
        match &self.values[Self::index(name).expect("registered key")] {
            Value::Count(v) => *v,
            other => panic!("{name} is not a count: {other:?}"),
        }
    }

    pub fn flag(&self, name: &str) -> bool {
        match &self.values[Self::index(name).expect("registered key")] {
            Value::Flag(v) => *v,
            other => panic!("{name} is not a flag: {other:?}"),
        }
    }

    pub fn list(&self, name: &str) -> &[f64] {
        match &self.values[Self::index(name).expect("registered key")] {
            Value::List(v) => v,
            other => panic!("{name} is not a list: {other:?}"),
        }
    }

    pub fn set_count(&mut self, name: &str, value: u64) {
        let slot = Self::index(name).expect("registered key");
        match &mut self.values[slot] {
            Value::Count(v) => *v = value,
            other => panic!("{name} is not a count: {other:?}"),
        }
    }

    pub fn set_scalar(&mut self, name: &str, value: f64) {
        let slot = Self::index(name).expect("registered key");
        match &mut self.values[slot] {
            Value::Scalar(v) => *v = value,
            other => panic!("{name} is not a scalar: {other:?}"),
        }
    }

    pub fn hole_profile(&self) -> Result<HoleProfile> {
        HoleProfile::new(
            self.scalar("hole.delta0_khz"),
            self.scalar("hole.n"),
            self.scalar("hole.od") * self.scalar("hole.oscillator_strength_ratio"),
            self.scalar("hole.feature_width_mhz"),
        )
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(
            self.scalar("grid.t_start_us"),
            self.scalar("grid.t_end_us"),
            self.scalar("grid.dt_us"),
        )
    }

    pub fn sim_grids(&self) -> Result<SimGrids> {
        let bins = self.count("grid.detuning_bins");
        let slices = self.count("grid.z_slices");
        if bins > usize::MAX as u64 || slices > usize::MAX as u64 {
            return Err(Error::Config("grid sizes exceed the platform limits".into()));
        }
        let detuning = DetuningGrid::uniform(self.scalar("grid.detuning_span_mhz"), bins as usize)?;
        SimGrids::new(slices as usize, detuning)
    }

    pub fn sequence_spec(&self) -> Result<SequenceSpec> {
        Ok(SequenceSpec {
            profile: self.hole_profile()?,
            time: self.time_grid()?,
            sim: self.sim_grids()?,
            input_fwhm: self.scalar("input.fwhm_us"),
            input_center: self.scalar("input.center_us"),
            input_peak: self.scalar("input.peak_rad_per_us"),
            write_start: self.scalar("raman.write_start_us"),
            storage_time: self.scalar("storage.ts_us"),
            raman_duration: self.scalar("raman.duration_us"),
            raman_rise: self.scalar("raman.rise_us"),
            write_area: self.scalar("raman.write_area_pi") * PI,
            read_area: self.scalar("raman.read_area_pi") * PI,
            retrieval_offset: self.scalar("retrieval.offset_us"),
            retrieval_window: self.scalar("retrieval.window_us"),
            gamma_is_khz: self.scalar("storage.gamma_is_khz"),
        })
    }

    pub fn input_envelope(&self) -> Result<ComplexEnvelope> {
        self.sequence_spec()?.input_envelope()
    }

    /// Detected in-window signal mean per trial at a given input photon
    /// number, from the measured override or the efficiency chain.
    pub fn detected_window_mean(&self, mu_in: f64) -> f64 {
        let measured = self.scalar("photon.detected_mean_at_mu1");
        if measured > 0.0 {
            mu_in * measured
        } else {
            mu_in
                * self.scalar("photon.eta_s")
                * self.scalar("photon.path_transmission")
                * self.scalar("photon.detector_efficiency")
        }
    }
}

fn parse_value(kind: &Default_, text: &str) -> std::result::Result<Value, String> {
    match kind {
        Default_::Scalar(_) => {
            let v: f64 = text.parse().map_err(|_| format!("invalid number '{text}'"))?;
            if !v.is_finite() {
                return Err(format!("value '{text}' is not finite"));
            }
            Ok(Value::Scalar(v))
        }
        Default_::Count(_) => Ok(Value::Count(
            text.parse().map_err(|_| format!("invalid count '{text}'"))?,
        )),
        Default_::Flag(_) => match text {
            "true" => Ok(Value::Flag(true)),
            "false" => Ok(Value::Flag(false)),
            _ => Err(format!("expected true or false, found '{text}'")),
        },
        Default_::List(_) => {
            if text.is_empty() {
                return Ok(Value::List(Vec::new()));
            }
            let mut items = Vec::new();
            for part in text.split(',') {
                let v: f64 = part
                    .trim()
                    .parse()
                    .map_err(|_| format!("invalid list entry '{}'", part.trim()))?;
                if !v.is_finite() {
                    return Err(format!("list entry '{}' is not finite", part.trim()));
                }
                items.push(v);
            }
            Ok(Value::List(items))
        }
    }
}
