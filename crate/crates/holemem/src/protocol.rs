//! Write/store/read memory sequence and its figures of merit.
//!
//! A weak Gaussian signal enters the hole and is compressed by the slow
//! group velocity. While it sits inside the crystal, a first Raman pulse
//! (uniform over the medium) converts the optical coherence into a spin
//! wave; after a storage time a second Raman pulse converts it back and
//! the pulse is re-emitted. The storage efficiency is the energy in a
//! retrieval window after the second pulse over the input energy.
//!
//! Spin inhomogeneity is not part of the propagation model; it enters as
//! the analytic dephasing factor [`spin_dephasing_factor`] applied to
//! the efficiency as a function of storage time.

use crate::atoms::EvolutionMode;
use crate::envelope::{gaussian_pulse, square_pulse, ComplexEnvelope};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hole::HoleProfile;
use crate::propagation::{propagate, PropagateOptions, SimGrids};

/// Everything needed to run one storage sequence. Times in us, areas in
/// radians, the Raman pair shares duration, rise and envelope shape.
#[derive(Debug, Clone)]
pub struct SequenceSpec {
    pub profile: HoleProfile,
    pub time: TimeGrid,
    pub sim: SimGrids,
    /// Input pulse: intensity FWHM, center, peak Rabi frequency.
    pub input_fwhm: f64,
    pub input_center: f64,
    pub input_peak: f64,
    /// Start of the write (first Raman) pulse.
    pub write_start: f64,
    /// Delay between write and read pulse starts.
    pub storage_time: f64,
    pub raman_duration: f64,
    pub raman_rise: f64,
    pub write_area: f64,
    pub read_area: f64,
    /// Retrieval window starts this long after the read pulse ends.
    pub retrieval_offset: f64,
    pub retrieval_window: f64,
    /// Inhomogeneous spin linewidth (FWHM, kHz); 0 disables dephasing.
    pub gamma_is_khz: f64,
}

impl SequenceSpec {
    pub fn write_end(&self) -> f64 {
        self.write_start + self.raman_duration
    }

    pub fn read_start(&self) -> f64 {
        self.write_start + self.storage_time
    }

    pub fn read_end(&self) -> f64 {
        self.read_start() + self.raman_duration
    }

    /// Retrieval window bounds.
    pub fn window(&self) -> (f64, f64) {
        let lo = self.read_end() + self.retrieval_offset;
        (lo, lo + self.retrieval_window)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        let bad = |msg: String| Err(Error::InvalidSequence(msg));
        if !self.time.contains(self.input_center) {
            return bad(format!(
                "input center {} us lies outside the time grid",
                self.input_center
            ));
        }
        if self.input_fwhm <= 0.0 || self.input_peak < 0.0 {
            return bad("input pulse needs fwhm > 0 and peak >= 0".into());
        }
        if self.write_start <= self.input_center {
            return bad(format!(
                "write pulse at {} us must start after the input peak at {} us \
                 has entered the medium",
                self.write_start, self.input_center
            ));
        }
        if self.raman_duration <= 0.0 || 2.0 * self.raman_rise >= self.raman_duration {
            return bad("raman pulses need duration > 2*rise >= 0".into());
        }
        if self.storage_time < self.raman_duration {
            return bad(format!(
                "storage time {} us would overlap the {} us raman pulses",
                self.storage_time, self.raman_duration
            ));
        }
        if self.write_area < 0.0 || self.read_area < 0.0 {
            return bad("raman areas must be >= 0".into());
        }
        if self.retrieval_offset < 0.0 || self.retrieval_window <= 0.0 {
            return bad("retrieval window needs offset >= 0 and length > 0".into());
        }
        let (_, hi) = self.window();
        if hi > self.time.t_end() + 1e-9 {
            return bad(format!(
                "retrieval window ends at {hi} us, beyond the grid end {} us",
                self.time.t_end()
            ));
        }
        if self.gamma_is_khz < 0.0 {
            return bad("spin linewidth must be >= 0".into());
        }
        Ok(())
    }

    /// Same sequence with the write pulse moved; the read pulse and the
    /// retrieval window move along with it.
    pub fn with_write_start(&self, write_start: f64) -> Self {
        Self {
            write_start,
            ..self.clone()
        }
    }

    pub fn with_optical_depth(&self, d: f64) -> Self {
        let mut spec = self.clone();
        spec.profile.d = d;
        spec
    }

    pub fn input_envelope(&self) -> Result<ComplexEnvelope> {
        gaussian_pulse(self.input_fwhm, self.input_center, self.input_peak, &self.time)
    }

    pub fn raman_envelope(&self) -> Result<ComplexEnvelope> {
        let mut raman = ComplexEnvelope::zeros(self.time.clone());
        for (start, area) in [
            (self.write_start, self.write_area),
            (self.read_start(), self.read_area),
        ] {
            if area > 0.0 {
                let pulse =
                    square_pulse(self.raman_duration, start, area, self.raman_rise, &self.time)?;
                raman = raman.add(&pulse)?;
            }
        }
        Ok(raman)
    }
}

/// Gaussian-inhomogeneous spin dephasing: the fraction of the spin wave
/// surviving a storage time `ts_us` under a spin-frequency spread of
/// FWHM `gamma_is_khz`.
pub fn spin_dephasing_factor(gamma_is_khz: f64, ts_us: f64) -> f64 {
    let x = std::f64::consts::PI * gamma_is_khz * 1e-3 * ts_us;
    (-x * x / (2.0 * std::f64::consts::LN_2)).exp()
}

#[derive(Debug, Clone)]
pub struct StorageResult {
    /// Field at the crystal exit over the whole sequence.
    pub output: ComplexEnvelope,
    pub input_energy: f64,
    /// Retrieved-over-input energy ratio, dephasing not applied.
    pub eta_s: f64,
    /// `eta_s` times the spin dephasing factor for the storage time.
    pub eta_s_decayed: f64,
    /// Fraction of the input escaping before the write pulse.
    pub leaked: f64,
    /// Collective spin energy right after the write pulse, over the
    /// input energy.
    pub spin_fraction_after_write: f64,
    /// Ensemble energies left at the end of the grid, in input units.
    pub final_excited_energy: f64,
    pub final_spin_energy: f64,
}

/// Runs the full sequence in perturbative mode.
pub fn run_sequence(spec: &SequenceSpec) -> Result<StorageResult> {
    spec.validate()?;
    let input = spec.input_envelope()?;
    let raman = spec.raman_envelope()?;
    let opts = PropagateOptions {
        probe_times: vec![spec.write_end(), spec.time.t_end()],
        ..Default::default()
    };
    let run = propagate(
        &input,
        &raman,
        &spec.profile,
        &spec.sim,
        EvolutionMode::Perturbative,
        &opts,
    )?;

    let input_energy = input.energy();
    let (win_lo, win_hi) = spec.window();
    let retrieved = run.output.energy_in_window(win_lo, win_hi);
    let leaked_energy = run
        .output
        .energy_in_window(spec.time.t_start(), spec.write_start);
    let eta_s = if input_energy > 0.0 {
        retrieved / input_energy
    } else {
        0.0
    };
    let norm = if input_energy > 0.0 { input_energy } else { 1.0 };

    let after_write = run
        .probes
        .iter()
        .find(|p| (p.time - spec.write_end()).abs() <= spec.time.dt())
        .copied();
    let at_end = run.probes.last().copied();

    Ok(StorageResult {
        output: run.output,
        input_energy,
        eta_s,
        eta_s_decayed: eta_s * spin_dephasing_factor(spec.gamma_is_khz, spec.storage_time),
        leaked: leaked_energy / norm,
        spin_fraction_after_write: after_write.map_or(0.0, |p| p.spin / norm),
        final_excited_energy: at_end.map_or(0.0, |p| p.excited / norm),
        final_spin_energy: at_end.map_or(0.0, |p| p.spin / norm),
    })
}

/// Searches the write-pulse start that maximizes `eta_s`, by golden
/// section over one input-pulse width centered on the expected arrival
/// of the slowed pulse. Returns the best start and its result.
pub fn optimize_write_start(
    spec: &SequenceSpec,
    iterations: usize,
) -> Result<(f64, StorageResult)> {
    let tau = crate::oracle::group_delay_at_center(&spec.profile);
    let guess = spec.input_center + 0.75 * tau.max(0.0);
    let latest = spec.time.t_end()
        - (spec.storage_time
            + spec.raman_duration
            + spec.retrieval_offset
            + spec.retrieval_window);
    let earliest = spec.input_center + 2.0 * spec.time.dt();
    let lo = (guess - 0.5 * spec.input_fwhm).max(earliest);
    let hi = (guess + 0.5 * spec.input_fwhm).min(latest);
    if hi <= lo {
        return Err(Error::InvalidSequence(format!(
            "no room to place the write pulse between {earliest:.2} and {latest:.2} us"
        )));
    }

    let mut best: Option<(f64, StorageResult)> = None;
    let eval = |start: f64, best: &mut Option<(f64, StorageResult)>| -> Result<f64> {
        let result = run_sequence(&spec.with_write_start(start))?;
        let eta = result.eta_s;
        if best.as_ref().is_none_or(|(_, b)| eta > b.eta_s) {
            *best = Some((start, result));
        }
        Ok(eta)
    };

    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(c, &mut best)?;
    let mut fd = eval(d, &mut best)?;
    for _ in 0..iterations {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c, &mut best)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d, &mut best)?;
        }
    }
    Ok(best.expect("at least two evaluations ran"))
}

/// Efficiency against optical depth, re-optimizing the write-pulse
/// timing at every point (the slowed pulse arrives earlier at lower
/// optical depth). Rows follow the input order.
pub fn sweep_od(
    base: &SequenceSpec,
    od_values: &[f64],
    optimize_iterations: usize,
) -> Result<Vec<OdPoint>> {
    if od_values.is_empty() {
        return Err(Error::InvalidInput("optical-depth sweep list is empty".into()));
    }
    if od_values.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidInput(
            "optical depths must be finite and >= 0".into(),
        ));
    }
    if od_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "optical depths must be strictly increasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(od_values.len());
    for &d in od_values {
        let spec = base.with_optical_depth(d);
        let (write_start, result) = optimize_write_start(&spec, optimize_iterations)?;
        rows.push(OdPoint {
            od: d,
            eta_s: result.eta_s,
            write_start,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy)]
pub struct OdPoint {
    pub od: f64,
    pub eta_s: f64,
    /// Optimized write-pulse start for this depth.
    pub write_start: f64,
}

/// Efficiency against storage time. The propagation model is free of
/// spin decoherence, so one run at the shortest requested time fixes the
/// undecayed efficiency and the dephasing factor supplies the decay.
pub fn sweep_storage_time(base: &SequenceSpec, ts_values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if ts_values.is_empty() {
        return Err(Error::InvalidInput("storage-time sweep list is empty".into()));
    }
    let min_ts = ts_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !min_ts.is_finite() || min_ts < base.raman_duration {
        return Err(Error::InvalidInput(format!(
            "storage times must be finite and >= the raman duration ({} us)",
            base.raman_duration
        )));
    }
    let mut spec = base.clone();
    spec.storage_time = min_ts;
    let result = run_sequence(&spec)?;
    Ok(ts_values
        .iter()
        .map(|&ts| (ts, result.eta_s * spin_dephasing_factor(base.gamma_is_khz, ts)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DetuningGrid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Reduced grids keep each run around a tenth of a second.
    fn small_spec() -> SequenceSpec {
        SequenceSpec {
            profile: HoleProfile::new(230.0, 3.0, 4.0, 2.1).unwrap(),
            time: TimeGrid::new(0.0, 28.0, 0.015).unwrap(),
            sim: SimGrids::new(30, DetuningGrid::uniform(3.0, 300).unwrap()).unwrap(),
            input_fwhm: 2.5,
            input_center: 7.0,
            input_peak: 1e-3,
            write_start: 8.6,
            storage_time: 6.0,
            raman_duration: 1.0,
            raman_rise: 0.05,
            write_area: std::f64::consts::PI,
            read_area: std::f64::consts::PI,
            retrieval_offset: 0.5,
            retrieval_window: 6.0,
            gamma_is_khz: 0.0,
        }
    }

    #[test]
    fn pi_pulses_store_and_retrieve() {
        let spec = small_spec();
        let result = run_sequence(&spec).unwrap();
        assert!(
            result.eta_s > 0.05 && result.eta_s < 1.0,
            "eta_s = {}",
            result.eta_s
        );
        assert!(result.leaked >= 0.0 && result.leaked < 1.0);
        assert!(result.eta_s + result.leaked <= 1.0 + 1e-6);
        assert!(
            result.spin_fraction_after_write > 0.1,
            "spin fraction {}",
            result.spin_fraction_after_write
        );
        // the stored excitation stays dark between the raman pulses; the
        // leftover trickle is the input tail that entered after the write
        let held = result
            .output
            .energy_in_window(spec.write_end(), spec.read_start());
        assert!(
            held < 1e-2 * result.input_energy,
            "emission during storage: {held:e}"
        );
    }

    #[test]
    fn no_raman_means_no_retrieval() {
        let mut spec = small_spec();
        spec.write_area = 0.0;
        spec.read_area = 0.0;
        let result = run_sequence(&spec).unwrap();
        assert!(result.eta_s < 0.01, "eta_s = {}", result.eta_s);
        assert_eq!(result.spin_fraction_after_write, 0.0);
    }

    #[test]
    fn efficiency_ignores_the_input_amplitude() {
        let spec = small_spec();
        let mut bright = spec.clone();
        bright.input_peak = 2.7e-3;
        let a = run_sequence(&spec).unwrap();
        let b = run_sequence(&bright).unwrap();
        assert!((a.eta_s - b.eta_s).abs() <= 1e-12);
    }

    #[test]
    fn energy_is_accounted_for() {
        let spec = small_spec();
        let result = run_sequence(&spec).unwrap();
        let balance = result.output.energy() / result.input_energy
            + result.final_excited_energy
            + result.final_spin_energy;
        assert_relative_eq!(balance, 1.0, max_relative = 0.02);
    }

    #[test]
    fn dephasing_factor_reference_points() {
        assert_eq!(spin_dephasing_factor(25.6, 0.0), 1.0);
        assert_relative_eq!(
            spin_dephasing_factor(25.6, 12.18847),
            0.5,
            max_relative = 1e-4
        );
        assert_eq!(spin_dephasing_factor(0.0, 50.0), 1.0);
        let mut last = 1.0;
        for k in 1..20 {
            let now = spin_dephasing_factor(25.6, k as f64);
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn storage_sweep_is_one_run_scaled_by_the_decay() {
        let mut spec = small_spec();
        spec.gamma_is_khz = 25.6;
        let ts = [6.0, 10.0, 15.0, 20.0];
        let rows = sweep_storage_time(&spec, &ts).unwrap();
        let base = rows[0].1 / spin_dephasing_factor(25.6, 6.0);
        for (t, eta) in &rows {
            assert_relative_eq!(
                *eta,
                base * spin_dephasing_factor(25.6, *t),
                max_relative = 1e-12
            );
        }
        // without broadening the sweep is flat
        spec.gamma_is_khz = 0.0;
        let flat = sweep_storage_time(&spec, &ts).unwrap();
        assert!(flat.windows(2).all(|w| w[0].1 == w[1].1));
    }

    #[test]
    fn deeper_holes_store_better() {
        let mut spec = small_spec();
        spec.retrieval_offset = 0.2;
        let rows = sweep_od(&spec, &[2.0, 5.0, 8.0], 4).unwrap();
        assert!(rows[0].eta_s < rows[1].eta_s);
        assert!(rows[1].eta_s < rows[2].eta_s);
    }

    #[test]
    fn optimizer_beats_a_deliberately_early_write() {
        let spec = small_spec();
        let early = run_sequence(&spec.with_write_start(7.3)).unwrap();
        let (best_start, best) = optimize_write_start(&spec, 6).unwrap();
        assert!(best.eta_s >= early.eta_s - 1e-9);
        assert!(best_start > spec.input_center);
    }

    #[test]
    fn sequence_validation_rejects_misordered_pulses() {
        let mut spec = small_spec();
        spec.write_start = 6.0; // before the input peak
        assert!(matches!(
            run_sequence(&spec),
            Err(Error::InvalidSequence(_))
        ));

        let mut spec = small_spec();
        spec.storage_time = 0.5; // overlapping raman pulses
        assert!(run_sequence(&spec).is_err());

        let mut spec = small_spec();
        spec.retrieval_window = 20.0; // past the grid end
        assert!(run_sequence(&spec).is_err());

        let mut spec = small_spec();
        spec.write_area = -1.0;
        assert!(run_sequence(&spec).is_err());
    }

    #[test]
    fn shifting_the_write_start_moves_the_whole_tail() {
        let spec = small_spec();
        let shifted = spec.with_write_start(9.4);
        assert_relative_eq!(shifted.read_start(), 9.4 + spec.storage_time);
        let (lo, _) = shifted.window();
        assert_relative_eq!(
            lo,
            9.4 + spec.storage_time + spec.raman_duration + spec.retrieval_offset
        );
    }

    #[test]
    fn empty_sweeps_are_rejected() {
        let spec = small_spec();
        assert!(sweep_od(&spec, &[], 4).is_err());
        assert!(sweep_od(&spec, &[5.0, 3.0], 4).is_err());
        assert!(sweep_storage_time(&spec, &[]).is_err());
        assert!(sweep_storage_time(&spec, &[0.2]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        /// Once the input has fully entered the medium, pi pulses leave
        /// the stored excitation dark until the read pulse.
        #[test]
        fn late_write_keeps_the_storage_interval_dark(
            write_start in 12.5f64..13.5,
            storage_time in 4.0f64..5.5
        ) {
            let mut spec = small_spec();
            spec.write_start = write_start;
            spec.storage_time = storage_time;
            let result = run_sequence(&spec).unwrap();
            let held = result
                .output
                .energy_in_window(spec.write_end(), spec.read_start());
            prop_assert!(
                held < 1e-3 * result.input_energy,
                "emission during storage: {:e} of the input",
                held / result.input_energy
            );
        }
    }
}
