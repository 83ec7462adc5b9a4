//! Coupled field-ensemble propagation through the hole-burnt medium.
//!
//! The signal envelope is marched through a dimensionless crystal
//! coordinate `z in [0, 1]` in the retarded frame (the crystal transit
//! time is five orders of magnitude below the time step, so the `1/c`
//! term is dropped):
//!
//! ```text
//! dE/dz = -i * kappa * Integral g(D) cg*(D) ce(D) dD,    kappa = d / pi
//! ```
//!
//! With `kappa = d/pi` a weak cw probe at detuning `D` leaves the medium
//! with intensity transmission `exp(-d g(D))` in the continuum limit,
//! which ties the coupling constant to the measured optical depth.
//!
//! Per time step the field is marched first (Euler in z, using the
//! coherences at the step start), then every atom advances one RK4 step
//! driven by the field held constant at the value in the middle of its
//! slice. Detuning bins where `g = 0` carry no absorbers and are skipped
//! entirely; they neither radiate nor evolve.
//!
//! All reductions run in a fixed pairwise order and the per-cell updates
//! write by index only, so results are byte-identical for any worker
//! thread count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::atoms::{rk4_step, AtomicState, DriveSample, EvolutionMode};
use crate::envelope::ComplexEnvelope;
use crate::error::{Error, Result};
use crate::grid::DetuningGrid;
use crate::hole::HoleProfile;

/// Spatial and spectral discretization of the medium.
#[derive(Debug, Clone)]
pub struct SimGrids {
    /// Number of z slices (atom cells); field nodes sit on the `z_slices + 1`
    /// cell boundaries.
    pub z_slices: usize,
    pub detuning: DetuningGrid,
}

impl SimGrids {
    pub fn new(z_slices: usize, detuning: DetuningGrid) -> Result<Self> {
        if z_slices == 0 {
            return Err(Error::InvalidGrid("need at least one z slice".into()));
        }
        Ok(Self { z_slices, detuning })
    }
}

/// Optional extras recorded during a run.
#[derive(Debug, Clone, Default)]
pub struct PropagateOptions {
    /// Record the field over the whole crystal every `snapshot_stride`
    /// steps (memory: one complex row per recorded step).
    pub snapshots: bool,
    pub snapshot_stride: usize,
    /// Times at which to record collective excited and spin energies.
    pub probe_times: Vec<f64>,
}

/// Field over the crystal at a subset of times; `fields` is row-major
/// `[time][z node]`.
#[derive(Debug, Clone)]
pub struct FieldSnapshots {
    pub times: Vec<f64>,
    pub z_nodes: Vec<f64>,
    pub fields: Vec<Complex64>,
}

/// Collective ensemble energies at one probe time, in the same units as
/// envelope energies, so they slot directly into the input-energy budget.
#[derive(Debug, Clone, Copy)]
pub struct ExcitationProbe {
    pub time: f64,
    pub excited: f64,
    pub spin: f64,
}

/// Final amplitudes of every (z slice, detuning bin) cell. Bins outside
/// the absorbing feature hold no atoms and read as ground state.
#[derive(Debug, Clone)]
pub struct AtomicEnsembleState {
    z_slices: usize,
    bins: usize,
    states: Vec<AtomicState>,
}

impl AtomicEnsembleState {
    fn ground(z_slices: usize, bins: usize) -> Self {
        Self {
            z_slices,
            bins,
            states: vec![AtomicState::ground(); z_slices * bins],
        }
    }

    pub fn z_slices(&self) -> usize {
        self.z_slices
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn state(&self, slice: usize, bin: usize) -> &AtomicState {
        &self.states[slice * self.bins + bin]
    }

    /// Detuning-integrated excited and spin weights per slice, weighted
    /// by the absorption profile (bins without absorbers contribute 0).
    pub fn populations_by_slice(
        &self,
        detuning: &DetuningGrid,
        profile: &HoleProfile,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut excited = vec![0.0; self.z_slices];
        let mut spin = vec![0.0; self.z_slices];
        for j in 0..self.z_slices {
            for (k, (delta, w)) in detuning.iter().enumerate() {
                let wg = w * profile.g_angular(delta);
                if wg == 0.0 {
                    continue;
                }
                let s = self.state(j, k);
                excited[j] += wg * s.excited_population();
                spin[j] += wg * s.spin_population();
            }
        }
        (excited, spin)
    }
}

#[derive(Debug, Clone)]
pub struct PropagationResult {
    /// Field at the crystal exit, on the input time grid.
    pub output: ComplexEnvelope,
    pub snapshots: Option<FieldSnapshots>,
    pub probes: Vec<ExcitationProbe>,
    pub final_ensemble: AtomicEnsembleState,
}

/// Fixed-order pairwise sum; the reduction tree depends only on the
/// index range, never on threading.
fn pairwise_sum(f: &impl Fn(usize) -> Complex64, lo: usize, hi: usize) -> Complex64 {
    if hi - lo <= 32 {
        let mut acc = Complex64::ZERO;
        for k in lo..hi {
            acc += f(k);
        }
        acc
    } else {
        let mid = lo + (hi - lo) / 2;
        pairwise_sum(f, lo, mid) + pairwise_sum(f, mid, hi)
    }
}

/// RK4 applied to `ce' = i*delta*ce + b` with constant `b` collapses to
/// `ce <- r*ce + s*b`; these are the per-bin coefficients.
fn linear_rk4_coefficients(delta: f64, dt: f64) -> (Complex64, Complex64) {
    let z = Complex64::new(0.0, delta * dt);
    let z2 = z * z;
    let z3 = z2 * z;
    let r = 1.0 + z + z2 / 2.0 + z3 / 6.0 + z2 * z2 / 24.0;
    let s = dt * (1.0 + z / 2.0 + z2 / 6.0 + z3 / 24.0);
    (r, s)
}

/// Runs the signal `input` and the z-independent Raman control `raman`
/// (same time grid) through the medium. Returns the exit field, optional
/// snapshots and probes, and the final ensemble state.
pub fn propagate(
    input: &ComplexEnvelope,
    raman: &ComplexEnvelope,
    profile: &HoleProfile,
    grids: &SimGrids,
    mode: EvolutionMode,
    opts: &PropagateOptions,
) -> Result<PropagationResult> {
    profile.validate()?;
    if grids.z_slices == 0 {
        return Err(Error::InvalidGrid("need at least one z slice".into()));
    }
    if raman.grid() != input.grid() {
        return Err(Error::InvalidInput(
            "signal and Raman envelopes must share one time grid".into(),
        ));
    }
    let grid = input.grid().clone();
    let dt = grid.dt();
    let n_t = grid.count();
    let nz = grids.z_slices;
    let dz = 1.0 / nz as f64;
    let kappa = profile.d / PI;

    // Bins with d*g = 0 hold no absorbers; only the rest are integrated.
    let mut act_bin = Vec::new();
    let mut act_delta = Vec::new();
    let mut act_wg = Vec::new();
    if profile.d > 0.0 {
        for (k, (delta, w)) in grids.detuning.iter().enumerate() {
            let wg = w * profile.g_angular(delta);
            if wg > 0.0 {
                act_bin.push(k);
                act_delta.push(delta);
                act_wg.push(wg);
            }
        }
    }
    let na = act_bin.len();

    let max_delta = act_delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    grid.check_resolution(max_delta.max(raman.max_abs()))?;

    let coeffs: Vec<(Complex64, Complex64)> = act_delta
        .iter()
        .map(|&d| linear_rk4_coefficients(d, dt))
        .collect();

    let mut states = vec![AtomicState::ground(); nz * na];
    let mut e_nodes = vec![Complex64::ZERO; nz + 1];
    let mut pol = vec![Complex64::ZERO; nz];
    let mut out = Vec::with_capacity(n_t);

    let stride = opts.snapshot_stride.max(1);
    let mut snapshots = opts.snapshots.then(|| FieldSnapshots {
        times: Vec::new(),
        z_nodes: (0..=nz).map(|j| j as f64 * dz).collect(),
        fields: Vec::new(),
    });

    let mut probe_indices: Vec<usize> = opts
        .probe_times
        .iter()
        .map(|&t| grid.nearest_index(t))
        .collect();
    probe_indices.sort_unstable();
    probe_indices.dedup();
    let mut probes = Vec::with_capacity(probe_indices.len());

    let raman_samples = raman.samples();
    for i in 0..n_t {
        let t = grid.time(i);

        if probe_indices.binary_search(&i).is_ok() {
            let mut excited = 0.0;
            let mut spin = 0.0;
            for s in states.chunks(na) {
                for (k, cell) in s.iter().enumerate() {
                    excited += act_wg[k] * cell.excited_population();
                    spin += act_wg[k] * cell.spin_population();
                }
            }
            let scale = 2.0 * kappa * dz;
            probes.push(ExcitationProbe {
                time: t,
                excited: scale * excited,
                spin: scale * spin,
            });
        }

        // polarization of every slice from the coherences at time t
        if na > 0 {
            pol.par_iter_mut().enumerate().for_each(|(j, p)| {
                let cells = &states[j * na..(j + 1) * na];
                *p = match mode {
                    EvolutionMode::Perturbative => {
                        pairwise_sum(&|k| act_wg[k] * cells[k].ce, 0, na)
                    }
                    EvolutionMode::Full => {
                        pairwise_sum(&|k| act_wg[k] * cells[k].cg.conj() * cells[k].ce, 0, na)
                    }
                };
            });
        }

        // Euler march along z
        e_nodes[0] = input.sample(i);
        for j in 0..nz {
            e_nodes[j + 1] = e_nodes[j] - Complex64::I * kappa * pol[j] * dz;
        }
        let exit = e_nodes[nz];
        if !exit.is_finite() {
            return Err(Error::Divergence {
                last_stable_index: i.saturating_sub(1),
            });
        }
        out.push(exit);

        if let Some(snap) = snapshots.as_mut() {
            if i % stride == 0 {
                snap.times.push(t);
                snap.fields.extend_from_slice(&e_nodes);
            }
        }

        if i + 1 == n_t || na == 0 {
            continue;
        }

        // advance the ensemble from t to t + dt
        let raman_begin = raman_samples[i];
        let raman_end = raman_samples[i + 1];
        let raman_mid = 0.5 * (raman_begin + raman_end);
        let raman_off = raman_begin.norm_sqr() == 0.0 && raman_end.norm_sqr() == 0.0;

        if mode == EvolutionMode::Perturbative && raman_off {
            // no Raman drive: each bin obeys ce' = i*delta*ce - i*E_mid/2,
            // so the RK4 step reduces to two precomputed multiplies
            let e_ref = &e_nodes;
            states
                .par_chunks_mut(na)
                .enumerate()
                .for_each(|(j, cells)| {
                    let b = Complex64::new(0.0, -0.25) * (e_ref[j] + e_ref[j + 1]);
                    for (k, cell) in cells.iter_mut().enumerate() {
                        let (r, s) = coeffs[k];
                        cell.ce = r * cell.ce + s * b;
                    }
                });
        } else {
            let e_ref = &e_nodes;
            states
                .par_chunks_mut(na)
                .enumerate()
                .for_each(|(j, cells)| {
                    let signal = 0.5 * (e_ref[j] + e_ref[j + 1]);
                    for (k, cell) in cells.iter_mut().enumerate() {
                        let begin = DriveSample {
                            signal,
                            raman: raman_begin,
                            detuning: act_delta[k],
                        };
                        let mid = DriveSample {
                            raman: raman_mid,
                            ..begin
                        };
                        let end = DriveSample {
                            raman: raman_end,
                            ..begin
                        };
                        *cell = rk4_step(cell, &begin, &mid, &end, dt, mode);
                    }
                });
        }
    }

    let mut final_ensemble = AtomicEnsembleState::ground(nz, grids.detuning.len());
    for j in 0..nz {
        for (a, &bin) in act_bin.iter().enumerate() {
            final_ensemble.states[j * grids.detuning.len() + bin] = states[j * na + a];
        }
    }

    Ok(PropagationResult {
        output: ComplexEnvelope::new(grid, out)?,
        snapshots,
        probes,
        final_ensemble,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::gaussian_pulse;
    use crate::grid::TimeGrid;
    use approx::assert_relative_eq;

    fn test_profile(d: f64) -> HoleProfile {
        HoleProfile::new(230.0, 3.0, d, 2.1).unwrap()
    }

    fn test_grids(nz: usize, bins: usize) -> SimGrids {
        SimGrids::new(nz, DetuningGrid::uniform(3.0, bins).unwrap()).unwrap()
    }

    fn quiet_raman(grid: &TimeGrid) -> ComplexEnvelope {
        ComplexEnvelope::zeros(grid.clone())
    }

    fn slow_light_run(
        d: f64,
        nz: usize,
        bins: usize,
        mode: EvolutionMode,
        peak: f64,
    ) -> (ComplexEnvelope, PropagationResult) {
        let grid = TimeGrid::new(0.0, 25.0, 0.015).unwrap();
        let input = gaussian_pulse(3.0, 8.0, peak, &grid).unwrap();
        let result = propagate(
            &input,
            &quiet_raman(&grid),
            &test_profile(d),
            &test_grids(nz, bins),
            mode,
            &PropagateOptions::default(),
        )
        .unwrap();
        (input, result)
    }

    #[test]
    fn transparent_medium_passes_the_input_through() {
        let (input, result) = slow_light_run(0.0, 20, 200, EvolutionMode::Perturbative, 1e-3);
        for (a, b) in input.samples().iter().zip(result.output.samples()) {
            assert!((a - b).norm() <= 1e-10 * input.max_abs());
        }
        let ens = &result.final_ensemble;
        assert_eq!(ens.z_slices(), 20);
        assert_eq!(ens.bins(), 201);
        assert_eq!(ens.state(7, 100).ce, Complex64::ZERO);
    }

    #[test]
    fn cw_transmission_follows_beer_lambert() {
        // raised-cosine switch-on, then hold; intensities averaged late
        let grid = TimeGrid::new(0.0, 30.0, 0.015).unwrap();
        let delta = crate::units::mhz_to_rad_per_us(0.3);
        let ramp = 5.0;
        let input = ComplexEnvelope::from_fn(grid.clone(), |t| {
            // half-cosine switch-on keeps the turn-on transient narrowband
            let env = if t < ramp {
                0.5 * (1.0 - (PI * t / ramp).cos())
            } else {
                1.0
            };
            1e-4 * env * Complex64::from_polar(1.0, delta * t)
        })
        .unwrap();
        let profile = test_profile(2.0);
        let result = propagate(
            &input,
            &quiet_raman(&grid),
            &profile,
            &test_grids(60, 400),
            EvolutionMode::Perturbative,
            &PropagateOptions::default(),
        )
        .unwrap();
        let t_in = input.energy_in_window(18.0, 29.0);
        let t_out = result.output.energy_in_window(18.0, 29.0);
        let expect = (-profile.d * profile.g(300.0)).exp();
        assert_relative_eq!(t_out / t_in, expect, max_relative = 0.02);
    }

    #[test]
    fn perturbative_response_is_linear_in_the_input() {
        let (_, small) = slow_light_run(4.0, 30, 300, EvolutionMode::Perturbative, 1e-3);
        let (_, big) = slow_light_run(4.0, 30, 300, EvolutionMode::Perturbative, 3.7e-3);
        for (a, b) in small.output.samples().iter().zip(big.output.samples()) {
            assert!((3.7 * a - b).norm() <= 1e-12 * 3.7e-3);
        }
    }

    #[test]
    fn medium_never_amplifies() {
        let (input, result) = slow_light_run(4.0, 30, 300, EvolutionMode::Perturbative, 1e-3);
        assert!(result.output.energy() <= input.energy() * (1.0 + 1e-9));
    }

    #[test]
    fn output_is_causal() {
        let grid = TimeGrid::new(0.0, 20.0, 0.015).unwrap();
        let input = gaussian_pulse(3.0, 8.0, 1e-3, &grid).unwrap();
        let cut = 700;
        let mut cut_samples = input.samples().to_vec();
        for s in &mut cut_samples[cut + 1..] {
            *s = Complex64::ZERO;
        }
        let cut_input = ComplexEnvelope::new(grid.clone(), cut_samples).unwrap();
        let profile = test_profile(4.0);
        let grids = test_grids(30, 300);
        let opts = PropagateOptions::default();
        let full = propagate(
            &input,
            &quiet_raman(&grid),
            &profile,
            &grids,
            EvolutionMode::Perturbative,
            &opts,
        )
        .unwrap();
        let truncated = propagate(
            &cut_input,
            &quiet_raman(&grid),
            &profile,
            &grids,
            EvolutionMode::Perturbative,
            &opts,
        )
        .unwrap();
        for k in 0..=cut {
            let a = full.output.sample(k);
            let b = truncated.output.sample(k);
            assert!((a - b).norm() <= 1e-14, "outputs differ at index {k}");
        }
    }

    #[test]
    fn pulse_is_delayed_by_the_hole_dispersion() {
        let (input, result) = slow_light_run(4.0, 40, 400, EvolutionMode::Perturbative, 1e-3);
        let delay = result.output.peak_time() - input.peak_time();
        let expect = test_profile(4.0).group_delay_estimate();
        assert_relative_eq!(delay, expect, max_relative = 0.25);
    }

    #[test]
    fn full_mode_agrees_with_perturbative_for_weak_fields() {
        let (_, pert) = slow_light_run(2.0, 25, 240, EvolutionMode::Perturbative, 1e-5);
        let (_, full) = slow_light_run(2.0, 25, 240, EvolutionMode::Full, 1e-5);
        let scale = pert.output.max_abs();
        for (a, b) in pert.output.samples().iter().zip(full.output.samples()) {
            assert!((a - b).norm() <= 1e-6 * scale);
        }
    }

    #[test]
    fn absorbed_energy_shows_up_in_the_ensemble() {
        let grid = TimeGrid::new(0.0, 25.0, 0.015).unwrap();
        let input = gaussian_pulse(3.0, 8.0, 1e-3, &grid).unwrap();
        let opts = PropagateOptions {
            probe_times: vec![grid.t_end()],
            ..Default::default()
        };
        let result = propagate(
            &input,
            &quiet_raman(&grid),
            &test_profile(4.0),
            &test_grids(40, 400),
            EvolutionMode::Perturbative,
            &opts,
        )
        .unwrap();
        let probe = result.probes.last().unwrap();
        let balance = result.output.energy() + probe.excited + probe.spin;
        assert_relative_eq!(balance, input.energy(), max_relative = 0.02);
        assert!(probe.excited > 0.0);
        assert_eq!(probe.spin, 0.0);
    }

    #[test]
    fn tiny_raman_drive_matches_the_raman_free_path() {
        // exercises the specialized no-Raman update against the general one
        let grid = TimeGrid::new(0.0, 20.0, 0.015).unwrap();
        let input = gaussian_pulse(3.0, 8.0, 1e-3, &grid).unwrap();
        let eps = ComplexEnvelope::from_fn(grid.clone(), |_| Complex64::new(1e-9, 0.0)).unwrap();
        let profile = test_profile(4.0);
        let grids = test_grids(30, 300);
        let opts = PropagateOptions::default();
        let without = propagate(
            &input,
            &quiet_raman(&grid),
            &profile,
            &grids,
            EvolutionMode::Perturbative,
            &opts,
        )
        .unwrap();
        let with = propagate(
            &input,
            &eps,
            &profile,
            &grids,
            EvolutionMode::Perturbative,
            &opts,
        )
        .unwrap();
        let scale = without.output.max_abs();
        for (a, b) in without.output.samples().iter().zip(with.output.samples()) {
            assert!((a - b).norm() <= 1e-6 * scale);
        }
    }

    #[test]
    fn snapshots_cover_the_crystal() {
        let grid = TimeGrid::new(0.0, 10.0, 0.015).unwrap();
        let input = gaussian_pulse(2.0, 5.0, 1e-3, &grid).unwrap();
        let opts = PropagateOptions {
            snapshots: true,
            snapshot_stride: 50,
            probe_times: vec![],
        };
        let result = propagate(
            &input,
            &quiet_raman(&grid),
            &test_profile(2.0),
            &test_grids(20, 200),
            EvolutionMode::Perturbative,
            &opts,
        )
        .unwrap();
        let snap = result.snapshots.unwrap();
        assert_eq!(snap.z_nodes.len(), 21);
        assert_eq!(snap.fields.len(), snap.times.len() * snap.z_nodes.len());
        assert!(snap.times.len() >= 10);
    }

    #[test]
    fn rejects_mismatched_grids_and_coarse_steps() {
        let grid = TimeGrid::new(0.0, 10.0, 0.015).unwrap();
        let other = TimeGrid::new(0.0, 10.0, 0.01).unwrap();
        let input = gaussian_pulse(2.0, 5.0, 1e-3, &grid).unwrap();
        let raman_wrong = ComplexEnvelope::zeros(other);
        let err = propagate(
            &input,
            &raman_wrong,
            &test_profile(2.0),
            &test_grids(20, 200),
            EvolutionMode::Perturbative,
            &PropagateOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));

        let coarse = TimeGrid::new(0.0, 10.0, 0.02).unwrap();
        let input = gaussian_pulse(2.0, 5.0, 1e-3, &coarse).unwrap();
        let err = propagate(
            &input,
            &quiet_raman(&coarse),
            &test_profile(2.0),
            &test_grids(20, 200),
            EvolutionMode::Perturbative,
            &PropagateOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidGrid(_)));
    }

    #[test]
    fn runaway_fields_abort_with_divergence() {
        // the resolution rule watches detunings and the Raman drive; a
        // violently strong signal in full mode is the caller's problem and
        // must surface as a divergence, not as garbage output
        let grid = TimeGrid::new(0.0, 10.0, 0.015).unwrap();
        let input = ComplexEnvelope::from_fn(grid.clone(), |t| {
            Complex64::new(1e7 * (t / 10.0), 0.0)
        })
        .unwrap();
        let err = propagate(
            &input,
            &quiet_raman(&grid),
            &test_profile(8.7),
            &test_grids(10, 200),
            EvolutionMode::Full,
            &PropagateOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::Divergence { last_stable_index } => {
                assert!(last_stable_index < grid.count())
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
