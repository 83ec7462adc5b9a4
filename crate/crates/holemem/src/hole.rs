//! Spectral hole profile, measured absorption traces, and hole-shape
//! fitting.
//!
//! The medium is a flat absorbing feature of width `feature_width_mhz`
//! with a hole burnt at its center. The normalized absorption profile is
//!
//! ```text
//! g(D) = 1 - 1 / (1 + |2 D / delta0|^n)    for |D| <= W/2,
//! g(D) = 0                                 outside the feature,
//! ```
//!
//! where `delta0` is the hole FWHM and the exponent `n` controls how
//! square the hole is: larger `n` gives a flatter bottom and steeper
//! walls (`n = 2` is a plain lorentzian dip). The optical depth at
//! detuning `D` is `d * g(D)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fitting::{least_squares, FitOptions, FitReport};
use crate::units::{khz_to_rad_per_us, mhz_to_rad_per_us, rad_per_us_to_khz};

#[derive(Debug, Clone, PartialEq)]
pub struct HoleProfile {
    /// Hole full width at half depth, kHz.
    pub delta0_khz: f64,
    /// Squarishness exponent, >= 1.
    pub n: f64,
    /// Peak optical depth of the feature (alpha L).
    pub d: f64,
    /// Width of the absorbing feature, MHz. Transparent outside.
    pub feature_width_mhz: f64,
}

impl HoleProfile {
    pub fn new(delta0_khz: f64, n: f64, d: f64, feature_width_mhz: f64) -> Result<Self> {
        let p = Self {
            delta0_khz,
            n,
            d,
            feature_width_mhz,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta0_khz.is_finite() || self.delta0_khz <= 0.0 {
            return Err(Error::InvalidProfile(format!(
                "hole width must be positive, got {} kHz",
                self.delta0_khz
            )));
        }
        if !self.n.is_finite() || self.n < 1.0 {
            return Err(Error::InvalidProfile(format!(
                "exponent must be >= 1, got {}",
                self.n
            )));
        }
        if !self.d.is_finite() || self.d < 0.0 {
            return Err(Error::InvalidProfile(format!(
                "optical depth must be >= 0, got {}",
                self.d
            )));
        }
        if !self.feature_width_mhz.is_finite()
            || self.feature_width_mhz * 1000.0 <= self.delta0_khz
        {
            return Err(Error::InvalidProfile(format!(
                "feature width ({} MHz) must exceed the hole width ({} kHz)",
                self.feature_width_mhz, self.delta0_khz
            )));
        }
        Ok(())
    }

    /// Normalized absorption at detuning `delta_khz`; in [0, 1], zero
    /// outside the feature.
    pub fn g(&self, delta_khz: f64) -> f64 {
        if delta_khz.abs() > self.feature_width_mhz * 1000.0 / 2.0 {
            return 0.0;
        }
        1.0 - self.hole_depth(delta_khz)
    }

    /// Same profile with the detuning given in rad/us.
    pub fn g_angular(&self, delta: f64) -> f64 {
        self.g(rad_per_us_to_khz(delta))
    }

    /// The untruncated hole shape `1 / (1 + |2 D / delta0|^n)`.
    fn hole_depth(&self, delta_khz: f64) -> f64 {
        let u = (2.0 * delta_khz / self.delta0_khz).abs();
        1.0 / (1.0 + u.powf(self.n))
    }

    /// Hole half width at half depth in rad/us.
    pub fn hole_hwhm_angular(&self) -> f64 {
        khz_to_rad_per_us(self.delta0_khz) / 2.0
    }

    /// Feature half width in rad/us.
    pub fn feature_half_width_angular(&self) -> f64 {
        mhz_to_rad_per_us(self.feature_width_mhz) / 2.0
    }

    /// Closed-form estimate of the group delay at the hole center, in us.
    ///
    /// The dispersion slope of the untruncated hole is
    /// `(2/(pi*gamma)) * (pi/n)/sin(pi/n)` with `gamma` the angular half
    /// width, giving a delay `d/(gamma*n*sin(pi/n))`; the finite feature
    /// subtracts `2*d/(pi*W)` of anomalous dispersion from its edges.
    /// Diverges as `n -> 1` where the hole wings decay too slowly.
    pub fn group_delay_estimate(&self) -> f64 {
        let gamma = self.hole_hwhm_angular();
        let w = 2.0 * self.feature_half_width_angular();
        let x = std::f64::consts::PI / self.n;
        let hole_term = (2.0 / (std::f64::consts::PI * gamma)) * x / x.sin();
        let edge_term = 4.0 / (std::f64::consts::PI * w);
        let tau = 0.5 * self.d * (hole_term - edge_term);
        if tau.is_finite() {
            tau.max(0.0)
        } else {
            // fall back to the lorentzian value when the wing integral blows up
            self.d / gamma
        }
    }
}

/// Rescales a fitted optical depth to a different transition using the
/// ratio of oscillator strengths.
pub fn extrapolate_od(d_ref: f64, strength_ratio: f64) -> Result<f64> {
    if !d_ref.is_finite() || d_ref < 0.0 {
        return Err(Error::InvalidInput(format!(
            "reference optical depth must be >= 0, got {d_ref}"
        )));
    }
    if !strength_ratio.is_finite() || strength_ratio <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "oscillator strength ratio must be positive, got {strength_ratio}"
        )));
    }
    Ok(d_ref * strength_ratio)
}

/// A measured (or synthesized) optical-depth trace around the hole.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionTrace {
    detunings_khz: Vec<f64>,
    optical_depths: Vec<f64>,
}

impl AbsorptionTrace {
    pub fn new(detunings_khz: Vec<f64>, optical_depths: Vec<f64>) -> Result<Self> {
        if detunings_khz.len() != optical_depths.len() {
            return Err(Error::InvalidInput(
                "detuning and depth columns have different lengths".into(),
            ));
        }
        if detunings_khz.len() < 4 {
            return Err(Error::InvalidInput(
                "absorption trace needs at least 4 points".into(),
            ));
        }
        if detunings_khz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "detunings must be strictly increasing".into(),
            ));
        }
        if detunings_khz.iter().any(|x| !x.is_finite())
            || optical_depths.iter().any(|x| !x.is_finite())
        {
            return Err(Error::InvalidInput("non-finite trace value".into()));
        }
        Ok(Self {
            detunings_khz,
            optical_depths,
        })
    }

    /// Samples a profile on the given detunings (optical depth `d*g`).
    pub fn from_profile(profile: &HoleProfile, detunings_khz: Vec<f64>) -> Result<Self> {
        profile.validate()?;
        let od = detunings_khz
            .iter()
            .map(|&dk| profile.d * profile.g(dk))
            .collect();
        Self::new(detunings_khz, od)
    }

    pub fn detunings_khz(&self) -> &[f64] {
        &self.detunings_khz
    }

    pub fn optical_depths(&self) -> &[f64] {
        &self.optical_depths
    }

    pub fn len(&self) -> usize {
        self.detunings_khz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings_khz.is_empty()
    }

    /// Returns a copy with the depths perturbed, for building noisy test
    /// and demo data.
    pub fn with_depths(&self, optical_depths: Vec<f64>) -> Result<Self> {
        Self::new(self.detunings_khz.clone(), optical_depths)
    }

    /// Reads a two-column CSV with header `detuning_khz,od`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let loc = |line: usize, message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let mut detunings = Vec::new();
        let mut depths = Vec::new();
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "detuning_khz,od" {
                    return Err(loc(
                        line_no,
                        format!("expected header 'detuning_khz,od', found '{line}'"),
                    ));
                }
                saw_header = true;
                continue;
            }
            let mut cols = line.split(',');
            let (a, b) = match (cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(b), None) => (a, b),
                _ => return Err(loc(line_no, "expected exactly 2 columns".into())),
            };
            let dk: f64 = a
                .trim()
                .parse()
                .map_err(|_| loc(line_no, format!("bad detuning value '{a}'")))?;
            let od: f64 = b
                .trim()
                .parse()
                .map_err(|_| loc(line_no, format!("bad od value '{b}'")))?;
            detunings.push(dk);
            depths.push(od);
        }
        if !saw_header {
            return Err(loc(1, "file has no header row".into()));
        }
        Self::new(detunings, depths).map_err(|e| loc(1, e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("detuning_khz,od\n");
        for (dk, od) in self.detunings_khz.iter().zip(&self.optical_depths) {
            out.push_str(&format!("{dk},{od}\n"));
        }
        out
    }
}

/// Fits `(delta0, n, d)` of a hole profile to an optical-depth trace.
/// The feature width is taken from `init` and not fitted; the trace is
/// expected to sit well inside the feature.
///
/// Returns the fitted profile together with a report carrying the
/// residual norm, parameter covariance and iteration count.
pub fn fit_hole(trace: &AbsorptionTrace, init: &HoleProfile) -> Result<(HoleProfile, FitReport)> {
    init.validate()?;
    let span_lo = trace.detunings_khz[0];
    let span_hi = *trace.detunings_khz.last().unwrap();
    if span_lo > -2.0 * init.delta0_khz || span_hi < 2.0 * init.delta0_khz {
        return Err(Error::DegenerateData(format!(
            "trace [{span_lo}, {span_hi}] kHz must cover +/- 2*delta0 = {} kHz around the hole",
            2.0 * init.delta0_khz
        )));
    }
    let od = &trace.optical_depths;
    let spread = od.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if spread.1 - spread.0 < 1e-12 * spread.1.abs().max(1.0) {
        return Err(Error::DegenerateData(
            "optical depth trace is constant; hole parameters are unconstrained".into(),
        ));
    }

    let width = init.feature_width_mhz;
    let model = |p: &[f64], out: &mut Vec<f64>| {
        let prof = HoleProfile {
            delta0_khz: p[0],
            n: p[1],
            d: p[2],
            feature_width_mhz: width,
        };
        out.clear();
        for (dk, od) in trace.detunings_khz.iter().zip(&trace.optical_depths) {
            out.push(prof.d * prof.g(*dk) - od);
        }
    };
    let feasible =
        |p: &[f64]| p[0] > 0.0 && p[1] >= 1.0 && p[2] >= 0.0 && p[0] < width * 1000.0;
    let (params, report) = least_squares(
        model,
        &[init.delta0_khz, init.n, init.d],
        feasible,
        &FitOptions::default(),
    )?;
    let fitted = HoleProfile::new(params[0], params[1], params[2], width)?;
    Ok((fitted, report))
}
