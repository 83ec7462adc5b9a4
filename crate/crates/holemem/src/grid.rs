//! Time and detuning axes.

use crate::error::{Error, Result};
use crate::units::mhz_to_rad_per_us;

/// Uniformly sampled time axis in microseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    dt: f64,
    count: usize,
}

impl TimeGrid {
    /// Builds a grid from `t_start` to (approximately) `t_end` with step
    /// `dt`. The sample count is `round((t_end - t_start)/dt) + 1`, so the
    /// actual end point snaps to the nearest whole number of steps.
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if !t_start.is_finite() || !t_end.is_finite() || t_end <= t_start {
            return Err(Error::InvalidGrid(format!(
                "need t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        let steps = ((t_end - t_start) / dt).round();
        if !(1.0..=1e9).contains(&steps) {
            return Err(Error::InvalidGrid(format!(
                "grid would have {steps} steps"
            )));
        }
        Ok(Self {
            t_start,
            dt,
            count: steps as usize + 1,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.count - 1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|k| self.time(k))
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start - 1e-12 && t <= self.t_end() + 1e-12
    }

    /// Index of the sample nearest to `t`, clamped to the grid.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = ((t - self.t_start) / self.dt).round();
        (k.max(0.0) as usize).min(self.count - 1)
    }

    /// Checks the sampling rule `dt <= 0.1 / max_rate`, where `max_rate`
    /// is the largest angular rate (detuning or Rabi frequency, rad/us)
    /// the integration has to follow.
    pub fn check_resolution(&self, max_rate: f64) -> Result<()> {
        if max_rate > 0.0 && self.dt > 0.1 / max_rate {
            return Err(Error::InvalidGrid(format!(
                "dt = {} us cannot resolve a drive rate of {:.3} rad/us (need dt <= {:.4})",
                self.dt,
                max_rate,
                0.1 / max_rate
            )));
        }
        Ok(())
    }
}

/// Discretized detuning axis for the inhomogeneous ensemble: node
/// positions in rad/us with trapezoidal quadrature weights.
///
/// The node spacing sets an alias horizon: a uniform comb of detunings
/// rephases after 2*pi/spacing microseconds, so the spacing must be fine
/// enough for the longest simulated sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningGrid {
    deltas: Vec<f64>,
    weights: Vec<f64>,
}

impl DetuningGrid {
    /// Uniform symmetric axis covering `span_mhz` (full width, ordinary
    /// frequency) with `bins` trapezoid intervals. `bins` must be even so
    /// that the axis is symmetric about zero and contains it.
    pub fn uniform(span_mhz: f64, bins: usize) -> Result<Self> {
        if !span_mhz.is_finite() || span_mhz <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "detuning span must be positive, got {span_mhz} MHz"
            )));
        }
        if bins < 2 || !bins.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "detuning bin count must be even and >= 2, got {bins}"
            )));
        }
        let half = mhz_to_rad_per_us(span_mhz) / 2.0;
        let h = 2.0 * half / bins as f64;
        let n = bins + 1;
        let deltas: Vec<f64> = (0..n).map(|k| -half + k as f64 * h).collect();
        let weights: Vec<f64> = (0..n)
            .map(|k| if k == 0 || k == n - 1 { h / 2.0 } else { h })
            .collect();
        Ok(Self { deltas, weights })
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    /// Node detunings in rad/us, strictly increasing.
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.deltas.iter().copied().zip(self.weights.iter().copied())
    }

    /// Total quadrature weight; equals the angular span of the axis.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_abs_delta(&self) -> f64 {
        self.deltas
            .iter()
            .fold(0.0f64, |acc, d| acc.max(d.abs()))
    }
}
