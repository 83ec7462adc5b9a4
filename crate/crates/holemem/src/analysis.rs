//! Post-processing: storage-time decay fits and photon-counting
//! statistics for few-photon inputs.
//!
//! The counting model is deliberately simple. A detection record is a
//! histogram of arrival times accumulated over many trials; signal
//! photons arrive with a known temporal shape, dark and leakage counts
//! arrive uniformly. The signal-to-noise ratio compares the in-window
//! count rate of a run against a signal-blocked reference run.

use crate::envelope::ComplexEnvelope;
use crate::error::{Error, Result};
use crate::fitting::{least_squares, FitOptions, FitReport};
use crate::protocol::spin_dephasing_factor;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;

/// Efficiency measured at a set of storage times.
#[derive(Debug, Clone)]
pub struct DecayCurve {
    ts_us: Vec<f64>,
    eta_s: Vec<f64>,
}

impl DecayCurve {
    pub fn new(ts_us: Vec<f64>, eta_s: Vec<f64>) -> Result<Self> {
        if ts_us.len() != eta_s.len() {
            return Err(Error::InvalidInput(
                "storage times and efficiencies differ in length".into(),
            ));
        }
        if ts_us.is_empty() {
            return Err(Error::InvalidInput("decay curve is empty".into()));
        }
        if ts_us.iter().any(|t| !t.is_finite() || *t < 0.0)
            || eta_s.iter().any(|e| !e.is_finite() || *e < 0.0)
        {
            return Err(Error::InvalidInput(
                "decay curve entries must be finite and >= 0".into(),
            ));
        }
        if ts_us.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "storage times must be strictly increasing".into(),
            ));
        }
        Ok(Self { ts_us, eta_s })
    }

    pub fn len(&self) -> usize {
        self.ts_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts_us.is_empty()
    }

    pub fn ts_us(&self) -> &[f64] {
        &self.ts_us
    }

    pub fn eta_s(&self) -> &[f64] {
        &self.eta_s
    }

    /// Reads `ts_us,eta_s` rows; `#` lines are comments.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path.display().to_string();
        let mut ts = Vec::new();
        let mut eta = Vec::new();
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !saw_header {
                if trimmed != "ts_us,eta_s" {
                    return Err(Error::Parse {
                        path: name,
                        line,
                        message: format!("expected header 'ts_us,eta_s', found '{trimmed}'"),
                    });
                }
                saw_header = true;
                continue;
            }
            let mut fields = trimmed.split(',');
            let parse = |field: Option<&str>, what: &str| -> Result<f64> {
                field
                    .map(str::trim)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        path: path.display().to_string(),
                        line,
                        message: format!("missing or invalid {what}"),
                    })
            };
            ts.push(parse(fields.next(), "storage time")?);
            eta.push(parse(fields.next(), "efficiency")?);
            if fields.next().is_some() {
                return Err(Error::Parse {
                    path: name,
                    line,
                    message: "expected exactly two columns".into(),
                });
            }
        }
        if !saw_header {
            return Err(Error::Parse {
                path: name,
                line: text.lines().count().max(1),
                message: "no 'ts_us,eta_s' header found".into(),
            });
        }
        Self::new(ts, eta)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ts_us,eta_s\n");
        for (t, e) in self.ts_us.iter().zip(&self.eta_s) {
            let _ = writeln!(out, "{t},{e}");
        }
        out
    }
}

/// Fits `eta0 * exp(-(pi*gamma*ts)^2 / (2 ln 2))` to a decay curve and
/// returns `(gamma_is_khz, eta0, report)`. The curve must reach down to
/// `1/e` of its maximum, otherwise the linewidth is not constrained.
pub fn fit_decay(curve: &DecayCurve) -> Result<(f64, f64, FitReport)> {
    if curve.len() < 4 {
        return Err(Error::DegenerateData(format!(
            "decay fit needs at least 4 points, got {}",
            curve.len()
        )));
    }
    let max = curve.eta_s.iter().cloned().fold(f64::MIN, f64::max);
    let min = curve.eta_s.iter().cloned().fold(f64::MAX, f64::min);
    if max <= 0.0 {
        return Err(Error::DegenerateData("all efficiencies are zero".into()));
    }
    if min > max / std::f64::consts::E {
        return Err(Error::DegenerateData(
            "curve never decays below 1/e of its maximum; extend the storage times".into(),
        ));
    }

    // crossing of half maximum pins the initial linewidth guess
    let half = max / 2.0;
    let mut t_half = *curve.ts_us.last().unwrap();
    for w in 0..curve.len() - 1 {
        let (e0, e1) = (curve.eta_s[w], curve.eta_s[w + 1]);
        if e0 > half && e1 <= half {
            let frac = (e0 - half) / (e0 - e1);
            t_half = curve.ts_us[w] + frac * (curve.ts_us[w + 1] - curve.ts_us[w]);
            break;
        }
    }
    let gamma_init_khz = if t_half > 0.0 {
        1e3 * (2.0f64.sqrt() * std::f64::consts::LN_2) / (std::f64::consts::PI * t_half)
    } else {
        50.0
    };

    let ts = curve.ts_us.clone();
    let eta = curve.eta_s.clone();
    let model = move |p: &[f64], residuals: &mut Vec<f64>| {
        residuals.clear();
        for (t, e) in ts.iter().zip(&eta) {
            residuals.push(p[1] * spin_dephasing_factor(p[0], *t) - e);
        }
    };
    let (params, report) = least_squares(
        model,
        &[gamma_init_khz, max],
        |p| p[0] >= 0.0 && p[1] > 0.0,
        &FitOptions::default(),
    )?;
    Ok((params[0], params[1], report))
}

/// Arrival-time histogram layout: `n_bins` equal bins covering
/// `[t_start, t_start + span)`.
#[derive(Debug, Clone, Copy)]
pub struct HistogramSpec {
    pub t_start_us: f64,
    pub span_us: f64,
    pub bin_width_us: f64,
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.span_us.is_finite()
            || self.span_us <= 0.0
            || !self.bin_width_us.is_finite()
            || self.bin_width_us <= 0.0
            || !self.t_start_us.is_finite()
        {
            return Err(Error::InvalidInput(
                "histogram needs span > 0 and bin width > 0".into(),
            ));
        }
        if self.bin_width_us > self.span_us {
            return Err(Error::InvalidInput(
                "histogram bin width exceeds the span".into(),
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        (self.span_us / self.bin_width_us).round().max(1.0) as usize
    }

    pub fn edges(&self) -> Vec<f64> {
        let n = self.n_bins();
        (0..=n)
            .map(|k| self.t_start_us + k as f64 * self.span_us / n as f64)
            .collect()
    }
}

/// Temporal distribution of the signal photons.
#[derive(Debug, Clone)]
pub enum SignalShape {
    /// Gaussian intensity profile (FWHM and center in us).
    Gaussian { fwhm_us: f64, center_us: f64 },
    /// Arrival density proportional to a simulated output intensity.
    Trace(ComplexEnvelope),
}

impl SignalShape {
    fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { fwhm_us, center_us } => {
                if !fwhm_us.is_finite() || *fwhm_us <= 0.0 || !center_us.is_finite() {
                    return Err(Error::InvalidInput(
                        "gaussian signal shape needs fwhm > 0".into(),
                    ));
                }
            }
            Self::Trace(env) => {
                if env.energy() <= 0.0 {
                    return Err(Error::InvalidInput(
                        "signal trace carries no energy".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Fraction of the arrival distribution inside `[lo, hi)`.
    pub fn window_fraction(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match self {
            Self::Gaussian { fwhm_us, center_us } => {
                let sigma = fwhm_us / (8.0 * std::f64::consts::LN_2).sqrt();
                let z = |t: f64| (t - center_us) / (sigma * std::f64::consts::SQRT_2);
                0.5 * (erf(z(hi)) - erf(z(lo)))
            }
            Self::Trace(env) => env.energy_in_window(lo, hi) / env.energy(),
        }
    }
}

/// Abramowitz-Stegun 7.1.26 rational approximation, absolute error
/// below 1.5e-7 which is far inside every tolerance used here.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Accumulated arrival-time histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct CountHistogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
    trials: u64,
    mu_in: f64,
}

impl CountHistogram {
    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn mu_in(&self) -> f64 {
        self.mu_in
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn span(&self) -> f64 {
        self.bin_edges.last().unwrap() - self.bin_edges[0]
    }

    /// Counts in bins whose centers fall inside `[lo, hi)`, together
    /// with the covered duration.
    pub fn windowed_counts(&self, lo: f64, hi: f64) -> (u64, f64) {
        let mut total = 0u64;
        let mut duration = 0.0;
        for (k, count) in self.counts.iter().enumerate() {
            let center = 0.5 * (self.bin_edges[k] + self.bin_edges[k + 1]);
            if center >= lo && center < hi {
                total += count;
                duration += self.bin_edges[k + 1] - self.bin_edges[k];
            }
        }
        (total, duration)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# trials={}", self.trials);
        let _ = writeln!(out, "# mu_in={}", self.mu_in);
        out.push_str("bin_start_us,counts\n");
        for (k, count) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.bin_edges[k], count);
        }
        out
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path.display().to_string();
        let mut trials: Option<u64> = None;
        let mut mu_in: Option<f64> = None;
        let mut starts = Vec::new();
        let mut counts = Vec::new();
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("trials=") {
                    trials = Some(v.trim().parse().map_err(|_| Error::Parse {
                        path: name.clone(),
                        line,
                        message: "invalid trials count".into(),
                    })?);
                } else if let Some(v) = rest.strip_prefix("mu_in=") {
                    mu_in = Some(v.trim().parse().map_err(|_| Error::Parse {
                        path: name.clone(),
                        line,
                        message: "invalid mu_in".into(),
                    })?);
                }
                continue;
            }
            if !saw_header {
                if trimmed != "bin_start_us,counts" {
                    return Err(Error::Parse {
                        path: name,
                        line,
                        message: format!(
                            "expected header 'bin_start_us,counts', found '{trimmed}'"
                        ),
                    });
                }
                saw_header = true;
                continue;
            }
            let mut fields = trimmed.split(',');
            let start: f64 = fields
                .next()
                .map(str::trim)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: name.clone(),
                    line,
                    message: "missing or invalid bin start".into(),
                })?;
            let count: u64 = fields
                .next()
                .map(str::trim)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: name.clone(),
                    line,
                    message: "missing or invalid count".into(),
                })?;
            starts.push(start);
            counts.push(count);
        }
        let trials = trials.ok_or_else(|| Error::Parse {
            path: name.clone(),
            line: 1,
            message: "missing '# trials=' comment".into(),
        })?;
        let mu_in = mu_in.ok_or_else(|| Error::Parse {
            path: name.clone(),
            line: 1,
            message: "missing '# mu_in=' comment".into(),
        })?;
        if starts.len() < 2 {
            return Err(Error::Parse {
                path: name,
                line: text.lines().count().max(1),
                message: "histogram needs at least two bins".into(),
            });
        }
        let width = starts[1] - starts[0];
        if width <= 0.0 || starts.windows(2).any(|w| (w[1] - w[0] - width).abs() > 1e-9 * width) {
            return Err(Error::Parse {
                path: name,
                line: 1,
                message: "bin starts are not uniformly spaced".into(),
            });
        }
        let mut edges = starts;
        edges.push(edges.last().unwrap() + width);
        Ok(Self {
            bin_edges: edges,
            counts,
            trials,
            mu_in,
        })
    }
}

const TRIAL_BLOCK: u64 = 1024;

/// Splits one run seed into independent per-block streams.
fn block_seed(seed: u64, block: u64) -> u64 {
    let mut z = seed ^ block.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn poisson_count(lambda: f64, rng: &mut ChaCha8Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(lambda).expect("positive finite mean");
    dist.sample(rng) as u64
}

/// Simulates photon counting over `trials` repetitions. `signal_mean`
/// is the detected signal photons per trial integrated over all time,
/// `noise_mean` the uniform background counts per trial over the whole
/// span. Blocks of trials run in parallel on independent substreams;
/// the result depends only on the seed, not on the thread count.
pub fn monte_carlo_counts(
    spec: &HistogramSpec,
    shape: &SignalShape,
    signal_mean: f64,
    noise_mean: f64,
    trials: u64,
    mu_in: f64,
    seed: u64,
) -> Result<CountHistogram> {
    spec.validate()?;
    shape.validate()?;
    if !signal_mean.is_finite() || signal_mean < 0.0 || !noise_mean.is_finite() || noise_mean < 0.0
    {
        return Err(Error::InvalidInput(
            "mean counts must be finite and >= 0".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }

    let edges = spec.edges();
    let n_bins = spec.n_bins();
    let t0 = spec.t_start_us;
    let span = spec.span_us;
    let width = span / n_bins as f64;

    // arrival sampler shared by all blocks
    enum Sampler {
        Gauss(Normal<f64>),
        Cdf { times: Vec<f64>, cdf: Vec<f64> },
    }
    let sampler = match shape {
        SignalShape::Gaussian { fwhm_us, center_us } => {
            let sigma = fwhm_us / (8.0 * std::f64::consts::LN_2).sqrt();
            Sampler::Gauss(Normal::new(*center_us, sigma).expect("finite parameters"))
        }
        SignalShape::Trace(env) => {
            let times: Vec<f64> = env.grid().times().collect();
            let mut cdf = Vec::with_capacity(times.len());
            let mut acc = 0.0;
            for s in env.samples() {
                acc += s.norm_sqr();
                cdf.push(acc);
            }
            let total = *cdf.last().unwrap();
            for c in &mut cdf {
                *c /= total;
            }
            Sampler::Cdf { times, cdf }
        }
    };

    let n_blocks = trials.div_ceil(TRIAL_BLOCK);
    let counts = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let block_trials = TRIAL_BLOCK.min(trials - block * TRIAL_BLOCK) as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(block_seed(seed, block));
            let mut bins = vec![0u64; n_bins];
            let record = |t: f64, bins: &mut Vec<u64>| {
                let idx = ((t - t0) / width).floor();
                if idx >= 0.0 && (idx as usize) < n_bins {
                    bins[idx as usize] += 1;
                }
            };
            let n_signal = poisson_count(block_trials * signal_mean, &mut rng);
            for _ in 0..n_signal {
                let t = match &sampler {
                    Sampler::Gauss(normal) => normal.sample(&mut rng),
                    Sampler::Cdf { times, cdf } => {
                        let u: f64 = rng.random();
                        let k = cdf.partition_point(|c| *c < u).min(times.len() - 1);
                        times[k]
                    }
                };
                record(t, &mut bins);
            }
            let n_noise = poisson_count(block_trials * noise_mean, &mut rng);
            for _ in 0..n_noise {
                record(t0 + rng.random::<f64>() * span, &mut bins);
            }
            bins
        })
        .reduce(
            || vec![0u64; n_bins],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );

    Ok(CountHistogram {
        bin_edges: edges,
        counts,
        trials,
        mu_in,
    })
}

/// Signal-to-noise of one input level against a signal-blocked
/// reference.
#[derive(Debug, Clone, Copy)]
pub struct SnrReport {
    pub mu_in: f64,
    /// In-window counts per trial in the signal run.
    pub signal_mean: f64,
    /// Reference counts per trial, scaled to the window duration.
    pub noise_mean: f64,
    pub snr: f64,
    pub snr_sigma: f64,
    pub window: (f64, f64),
    /// Set when the reference run recorded no counts at all.
    pub infinite: bool,
}

/// Compares a signal histogram against a noise-only reference taken
/// with the same binning. The reference integrates its whole span to
/// beat counting noise; rates are normalized per trial and per us.
pub fn compute_snr(
    signal: &CountHistogram,
    noise: &CountHistogram,
    window: (f64, f64),
) -> Result<SnrReport> {
    if noise.mu_in != 0.0 {
        return Err(Error::InvalidInput(
            "reference histogram must come from a signal-blocked run (mu_in = 0)".into(),
        ));
    }
    if signal.bin_edges.len() != noise.bin_edges.len()
        || signal
            .bin_edges
            .iter()
            .zip(&noise.bin_edges)
            .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::InvalidInput(
            "signal and reference histograms use different binning".into(),
        ));
    }
    if signal.trials == 0 || noise.trials == 0 {
        return Err(Error::InvalidInput("histograms carry no trials".into()));
    }
    let (lo, hi) = window;
    let (s_counts, s_duration) = signal.windowed_counts(lo, hi);
    if s_duration <= 0.0 {
        return Err(Error::InvalidInput(
            "the analysis window covers no bins".into(),
        ));
    }
    let n_counts = noise.total_counts();
    let n_duration = noise.span();

    let signal_mean = s_counts as f64 / signal.trials as f64;
    let noise_mean = n_counts as f64 / noise.trials as f64 * (s_duration / n_duration);

    if n_counts == 0 {
        return Ok(SnrReport {
            mu_in: signal.mu_in,
            signal_mean,
            noise_mean: 0.0,
            snr: f64::INFINITY,
            snr_sigma: f64::INFINITY,
            window,
            infinite: true,
        });
    }

    let s_rate = s_counts as f64 / (signal.trials as f64 * s_duration);
    let n_rate = n_counts as f64 / (noise.trials as f64 * n_duration);
    let ratio = s_rate / n_rate;
    let sigma = if s_counts == 0 {
        ratio * (1.0 / n_counts as f64).sqrt()
    } else {
        ratio * (1.0 / s_counts as f64 + 1.0 / n_counts as f64).sqrt()
    };
    Ok(SnrReport {
        mu_in: signal.mu_in,
        signal_mean,
        noise_mean,
        snr: ratio - 1.0,
        snr_sigma: sigma,
        window,
        infinite: false,
    })
}

/// Input photon number at which the SNR crosses one, from a weighted
/// through-origin fit of SNR against the mean input photon number.
/// Returns the crossing and its standard error.
pub fn fit_mu1(reports: &[SnrReport]) -> Result<(f64, f64)> {
    let usable: Vec<&SnrReport> = reports
        .iter()
        .filter(|r| r.mu_in > 0.0 && r.snr.is_finite() && r.snr_sigma.is_finite() && r.snr_sigma > 0.0)
        .collect();
    if usable.is_empty() {
        return Err(Error::DegenerateData(
            "no finite SNR points with mu_in > 0".into(),
        ));
    }
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for r in &usable {
        let w = 1.0 / (r.snr_sigma * r.snr_sigma);
        sxx += w * r.mu_in * r.mu_in;
        sxy += w * r.mu_in * r.snr;
    }
    let slope = sxy / sxx;
    if !slope.is_finite() || slope <= 0.0 {
        return Err(Error::DegenerateData(
            "SNR does not grow with the input photon number".into(),
        ));
    }
    let slope_sigma = (1.0 / sxx).sqrt();
    Ok((1.0 / slope, slope_sigma / (slope * slope)))
}
