//! Complex field envelopes on a shared time grid.
//!
//! Envelope amplitudes are Rabi frequencies in rad/us, so `|s|^2` has
//! units of rad^2/us^2 and the trapezoidal "energy" integral
//! `sum |s|^2 dt` is proportional to pulse energy. Only energy ratios
//! are ever reported, so the proportionality constant never matters.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEnvelope {
    grid: TimeGrid,
    samples: Vec<Complex64>,
}

impl ComplexEnvelope {
    pub fn new(grid: TimeGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.count() {
            return Err(Error::InvalidPulse(format!(
                "sample count {} does not match grid count {}",
                samples.len(),
                grid.count()
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidPulse("non-finite sample".into()));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        let n = grid.count();
        Self {
            grid,
            samples: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let samples = grid.times().map(f).collect();
        Self::new(grid, samples)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn sample(&self, k: usize) -> Complex64 {
        self.samples[k]
    }

    /// Trapezoidal energy integral over the whole grid.
    pub fn energy(&self) -> f64 {
        trapezoid_map(&self.samples, self.grid.dt(), |s| s.norm_sqr())
    }

    /// Trapezoidal energy restricted to `[t_lo, t_hi]`, snapped to the
    /// nearest grid samples.
    pub fn energy_in_window(&self, t_lo: f64, t_hi: f64) -> f64 {
        if t_hi <= t_lo {
            return 0.0;
        }
        let i_lo = self.grid.nearest_index(t_lo);
        let i_hi = self.grid.nearest_index(t_hi);
        if i_hi <= i_lo {
            return 0.0;
        }
        trapezoid_map(&self.samples[i_lo..=i_hi], self.grid.dt(), |s| s.norm_sqr())
    }

    /// Pointwise sum; both envelopes must share a grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid(
                "cannot add envelopes on different time grids".into(),
            ));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            samples,
        })
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            samples: self.samples.iter().map(|s| s * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.norm()))
    }

    /// Time of the intensity maximum, refined below the sampling step by
    /// a parabolic fit through the peak sample and its neighbours.
    pub fn peak_time(&self) -> f64 {
        let intensities: Vec<f64> = self.samples.iter().map(|s| s.norm_sqr()).collect();
        let mut k_max = 0;
        for (k, v) in intensities.iter().enumerate() {
            if *v > intensities[k_max] {
                k_max = k;
            }
        }
        if k_max == 0 || k_max == intensities.len() - 1 {
            return self.grid.time(k_max);
        }
        let (a, b, c) = (
            intensities[k_max - 1],
            intensities[k_max],
            intensities[k_max + 1],
        );
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() < 1e-300 {
            0.0
        } else {
            0.5 * (a - c) / denom
        };
        self.grid.time(k_max) + shift.clamp(-0.5, 0.5) * self.grid.dt()
    }
}

/// Real Gaussian pulse whose *intensity* full width at half maximum is
/// `fwhm_us`. `peak` is the amplitude maximum in rad/us.
///
/// Fails if the grid clips more than 1e-6 of the pulse energy, comparing
/// the on-grid energy against the closed form
/// `peak^2 * fwhm * sqrt(pi / (4 ln 2))`.
pub fn gaussian_pulse(
    fwhm_us: f64,
    center_us: f64,
    peak: f64,
    grid: &TimeGrid,
) -> Result<ComplexEnvelope> {
    if !fwhm_us.is_finite() || fwhm_us <= 0.0 {
        return Err(Error::InvalidPulse(format!(
            "gaussian fwhm must be positive, got {fwhm_us}"
        )));
    }
    if !peak.is_finite() || !center_us.is_finite() {
        return Err(Error::InvalidPulse("non-finite gaussian parameter".into()));
    }
    if !grid.contains(center_us) {
        return Err(Error::InvalidPulse(format!(
            "pulse center {center_us} us lies outside the grid [{}, {}]",
            grid.t_start(),
            grid.t_end()
        )));
    }
    let env = ComplexEnvelope::from_fn(grid.clone(), |t| {
        let x = (t - center_us) / fwhm_us;
        Complex64::new(peak * (-2.0 * LN2 * x * x).exp(), 0.0)
    })?;
    if peak != 0.0 {
        let exact = gaussian_pulse_energy(peak, fwhm_us);
        let lost = 1.0 - env.energy() / exact;
        if lost > 1e-6 {
            return Err(Error::TruncatedPulse {
                lost_fraction: lost,
            });
        }
    }
    Ok(env)
}

/// Closed-form energy of the Gaussian produced by [`gaussian_pulse`].
pub fn gaussian_pulse_energy(peak: f64, fwhm_us: f64) -> f64 {
    peak * peak * fwhm_us * (std::f64::consts::PI / (4.0 * LN2)).sqrt()
}

/// Square pulse of time-integrated area `area_rad` with raised-cosine
/// rise and fall of `rise_us` each. The sampled shape is rescaled so its
/// trapezoidal integral equals `area_rad` exactly; with `rise_us = 0` and
/// grid-aligned edges the amplitude is simply `area/duration`.
pub fn square_pulse(
    duration_us: f64,
    start_us: f64,
    area_rad: f64,
    rise_us: f64,
    grid: &TimeGrid,
) -> Result<ComplexEnvelope> {
    if !duration_us.is_finite() || duration_us <= 0.0 {
        return Err(Error::InvalidPulse(format!(
            "square pulse duration must be positive, got {duration_us}"
        )));
    }
    if !rise_us.is_finite() || rise_us < 0.0 || 2.0 * rise_us >= duration_us {
        return Err(Error::InvalidPulse(format!(
            "need 0 <= 2*rise < duration, got rise {rise_us}, duration {duration_us}"
        )));
    }
    if !area_rad.is_finite() || !start_us.is_finite() {
        return Err(Error::InvalidPulse("non-finite square pulse parameter".into()));
    }
    let end_us = start_us + duration_us;
    let shape = |t: f64| -> f64 {
        if t < start_us || t > end_us {
            0.0
        } else if rise_us > 0.0 && t < start_us + rise_us {
            0.5 * (1.0 - (std::f64::consts::PI * (t - start_us) / rise_us).cos())
        } else if rise_us > 0.0 && t > end_us - rise_us {
            0.5 * (1.0 - (std::f64::consts::PI * (end_us - t) / rise_us).cos())
        } else {
            1.0
        }
    };
    let raw: Vec<f64> = grid.times().map(shape).collect();
    let raw_area = trapezoid_map(&raw, grid.dt(), |x| *x);
    if area_rad != 0.0 && raw_area <= 0.0 {
        return Err(Error::InvalidPulse(
            "square pulse does not overlap the time grid".into(),
        ));
    }
    let amp = if raw_area > 0.0 { area_rad / raw_area } else { 0.0 };
    ComplexEnvelope::new(
        grid.clone(),
        raw.iter().map(|x| Complex64::new(amp * x, 0.0)).collect(),
    )
}

/// Trapezoidal pulse energy, `sum |s|^2 dt`.
pub fn pulse_energy(env: &ComplexEnvelope) -> f64 {
    env.energy()
}

fn trapezoid_map<T>(values: &[T], dt: f64, f: impl Fn(&T) -> f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut sum = 0.5 * (f(&values[0]) + f(&values[values.len() - 1]));
    for v in &values[1..values.len() - 1] {
        sum += f(v);
    }
    sum * dt
}
