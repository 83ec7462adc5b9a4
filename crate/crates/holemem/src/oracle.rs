//! Frequency-domain reference solution for the Raman-free medium.
//!
//! A weak probe component at detuning `w` (envelope convention
//! `e^{+iwt}`) leaves the medium multiplied by
//!
//! ```text
//! H(w) = exp(-(d/2) * [g(w) - i Hg(w)])
//! ```
//!
//! where `Hg` is the Hilbert transform of the absorption profile,
//! `Hf(w) = (1/pi) PV Integral f(D)/(w - D) dD`. The imaginary part is
//! the Kramers-Kronig phase forced by causality; its slope at the hole
//! center is the group delay. Applying `H` to the input spectrum gives
//! an independent prediction to hold the time-domain integrator against.
//!
//! The principal-value integral is evaluated by subtracting the
//! singularity: over the feature `[-a, a]` with `g = 1 - h`,
//!
//! ```text
//! pi*Hg(w) = (1 - h(w)) ln|(w+a)/(w-a)|
//!            - Integral (h(D) - h(w)) / (w - D) dD
//! ```
//!
//! whose integrand is smooth through `D = w`, so plain Simpson quadrature
//! converges fast.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::atoms::EvolutionMode;
use crate::envelope::ComplexEnvelope;
use crate::error::{Error, Result};
use crate::hole::HoleProfile;
use crate::propagation::{propagate, PropagateOptions, SimGrids};
use crate::units::khz_to_rad_per_us;

/// Simpson nodes over the absorbing feature with the hole shape
/// pretabulated, shared across all requested detunings.
struct HilbertTable {
    a: f64,
    step: f64,
    nodes: Vec<f64>,
    hole_vals: Vec<f64>,
    delta0: f64,
    n: f64,
}

const HILBERT_INTERVALS: usize = 8192;

impl HilbertTable {
    fn new(profile: &HoleProfile) -> Self {
        let a = profile.feature_half_width_angular();
        let m = HILBERT_INTERVALS;
        let step = 2.0 * a / m as f64;
        let nodes: Vec<f64> = (0..=m).map(|i| -a + i as f64 * step).collect();
        let delta0 = khz_to_rad_per_us(profile.delta0_khz);
        let n = profile.n;
        let hole_vals = nodes
            .iter()
            .map(|&d| hole_shape(d, delta0, n))
            .collect();
        Self {
            a,
            step,
            nodes,
            hole_vals,
            delta0,
            n,
        }
    }

    /// Hilbert transform of the absorption profile at angular detuning
    /// `w` (rad/us), valid inside and outside the feature.
    fn hilbert_g(&self, w: f64) -> f64 {
        let hw = hole_shape(w, self.delta0, self.n);
        let log_term = (((w + self.a) / (w - self.a)).abs().max(1e-300)).ln();

        let mut simpson = 0.0;
        let m = self.nodes.len() - 1;
        for i in 0..=m {
            let coeff = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let dist = w - self.nodes[i];
            let integrand = if dist.abs() < self.step * 1e-9 {
                -hole_shape_slope(w, self.delta0, self.n)
            } else {
                (self.hole_vals[i] - hw) / dist
            };
            simpson += coeff * integrand;
        }
        simpson *= self.step / 3.0;

        ((1.0 - hw) * log_term - simpson) / PI
    }
}

/// The untruncated hole dip `1 / (1 + |2 w / delta0|^n)`, all angular.
fn hole_shape(w: f64, delta0: f64, n: f64) -> f64 {
    let u = (2.0 * w / delta0).abs();
    1.0 / (1.0 + u.powf(n))
}

fn hole_shape_slope(w: f64, delta0: f64, n: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let u = (2.0 * w / delta0).abs();
    let denom = 1.0 + u.powf(n);
    -n * u.powf(n - 1.0) * (2.0 / delta0) * w.signum() / (denom * denom)
}

/// Hilbert transform of the absorption profile at the given angular
/// detunings.
pub fn hilbert_absorption(profile: &HoleProfile, omegas: &[f64]) -> Vec<f64> {
    let table = HilbertTable::new(profile);
    omegas.iter().map(|&w| table.hilbert_g(w)).collect()
}

/// Complex amplitude transfer of the medium at the given angular
/// detunings.
pub fn transfer_function(profile: &HoleProfile, omegas: &[f64]) -> Vec<Complex64> {
    let table = HilbertTable::new(profile);
    omegas
        .iter()
        .map(|&w| {
            let g = profile.g_angular(w);
            let phase = 0.5 * profile.d * table.hilbert_g(w);
            Complex64::from_polar((-0.5 * profile.d * g).exp(), phase)
        })
        .collect()
}

/// Group delay `-d(arg H)/dw` at the hole center, in us.
pub fn group_delay_at_center(profile: &HoleProfile) -> f64 {
    let table = HilbertTable::new(profile);
    let dw = profile.hole_hwhm_angular() / 256.0;
    // arg H = (d/2) Hg, and Hg is odd
    -0.5 * profile.d * (table.hilbert_g(dw) - table.hilbert_g(-dw)) / (2.0 * dw)
}

/// Predicted exit envelope: FFT, multiply by `H`, inverse FFT. The axis
/// is padded past the grid so the delayed pulse cannot wrap around;
/// energy that leaves the original grid is dropped on truncation.
pub fn predict_output(input: &ComplexEnvelope, profile: &HoleProfile) -> Result<ComplexEnvelope> {
    let grid = input.grid().clone();
    let n = grid.count();
    let dt = grid.dt();
    let margin_us = 6.0 * profile.group_delay_estimate() + 20.0;
    let m = (n + (margin_us / dt).ceil() as usize).next_power_of_two();

    let mut buf: Vec<Complex64> = Vec::with_capacity(m);
    buf.extend_from_slice(input.samples());
    buf.resize(m, Complex64::ZERO);

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);

    // the axis must actually contain the input spectrum
    let total: f64 = buf.iter().map(|x| x.norm_sqr()).sum();
    if total > 0.0 {
        let edge: f64 = buf
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let k_fold = (*k).min(m - *k);
                k_fold as f64 > 0.95 * (m as f64 / 2.0)
            })
            .map(|(_, x)| x.norm_sqr())
            .sum();
        if edge > 1e-6 * total {
            return Err(Error::NarrowAxis(format!(
                "{:.2e} of the input spectral energy sits within 5% of the Nyquist \
                 frequency; refine dt",
                edge / total
            )));
        }
    }

    let half = m / 2;
    let omegas: Vec<f64> = (0..=half)
        .map(|k| 2.0 * PI * k as f64 / (m as f64 * dt))
        .collect();
    let transfer = transfer_function(profile, &omegas);
    for (k, value) in buf.iter_mut().enumerate() {
        let h = if k <= half {
            transfer[k]
        } else {
            transfer[m - k].conj()
        };
        *value *= h;
    }

    planner.plan_fft_inverse(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    buf.truncate(n);
    for v in &mut buf {
        *v *= scale;
    }
    ComplexEnvelope::new(grid, buf)
}

/// Agreement between the time-domain integrator and the frequency-domain
/// prediction, both normalized against the prediction.
#[derive(Debug, Clone, Copy)]
pub struct OracleReport {
    /// Relative root-mean-square deviation.
    pub rms_rel: f64,
    /// Largest per-sample deviation over the peak predicted amplitude.
    pub max_dev_rel: f64,
}

/// Runs the Raman-free medium both ways and reports the discrepancy.
pub fn compare_oracle(
    input: &ComplexEnvelope,
    profile: &HoleProfile,
    grids: &SimGrids,
) -> Result<OracleReport> {
    let raman = ComplexEnvelope::zeros(input.grid().clone());
    let simulated = propagate(
        input,
        &raman,
        profile,
        grids,
        EvolutionMode::Perturbative,
        &PropagateOptions::default(),
    )?;
    let predicted = predict_output(input, profile)?;

    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    let mut max_dev = 0.0f64;
    let mut max_ref = 0.0f64;
    for (a, b) in simulated.output.samples().iter().zip(predicted.samples()) {
        diff_sq += (a - b).norm_sqr();
        ref_sq += b.norm_sqr();
        max_dev = max_dev.max((a - b).norm());
        max_ref = max_ref.max(b.norm());
    }
    if ref_sq == 0.0 {
        return Ok(OracleReport {
            rms_rel: if diff_sq == 0.0 { 0.0 } else { f64::INFINITY },
            max_dev_rel: if max_dev == 0.0 { 0.0 } else { f64::INFINITY },
        });
    }
    Ok(OracleReport {
        rms_rel: (diff_sq / ref_sq).sqrt(),
        max_dev_rel: max_dev / max_ref,
    })
}
