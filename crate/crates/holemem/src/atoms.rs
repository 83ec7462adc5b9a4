//! Three-level atom in the rotating frame.
//!
//! Each atom carries amplitudes on the ground state `g`, the optically
//! excited state `e`, and the storage spin state `s`. The signal field
//! couples `g <-> e`, the Raman control couples `e <-> s`, and the
//! inhomogeneous detuning `D` (rad/us) advances the excited amplitude as
//! `e^{+i D t}`:
//!
//! ```text
//! dcg/dt = -i (E*/2) ce
//! dce/dt = -i (E/2) cg + i D ce - i (O/2) cs
//! dcs/dt = -i (O*/2) ce
//! ```
//!
//! All couplings are Rabi frequencies in rad/us. Integration is classic
//! fourth-order Runge-Kutta with drives supplied at the step start,
//! midpoint and end.

use num_complex::Complex64;

use crate::grid::TimeGrid;

/// How the ground amplitude is treated during integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolutionMode {
    /// Integrate all three amplitudes; conserves the norm.
    Full,
    /// Pin `cg = 1`, linearizing the response in the signal field. Valid
    /// while the signal stays far below saturation.
    Perturbative,
}

/// Drive values at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSample {
    /// Signal Rabi frequency, rad/us.
    pub signal: Complex64,
    /// Raman control Rabi frequency, rad/us.
    pub raman: Complex64,
    /// Detuning of this atom from the signal carrier, rad/us.
    pub detuning: f64,
}

impl DriveSample {
    pub const FREE: Self = Self {
        signal: Complex64::ZERO,
        raman: Complex64::ZERO,
        detuning: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicState {
    pub cg: Complex64,
    pub ce: Complex64,
    pub cs: Complex64,
}

impl AtomicState {
    /// All population in the ground state.
    pub fn ground() -> Self {
        Self {
            cg: Complex64::ONE,
            ce: Complex64::ZERO,
            cs: Complex64::ZERO,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.cg.norm_sqr() + self.ce.norm_sqr() + self.cs.norm_sqr()
    }

    pub fn excited_population(&self) -> f64 {
        self.ce.norm_sqr()
    }

    pub fn spin_population(&self) -> f64 {
        self.cs.norm_sqr()
    }

    fn with_step(&self, k: &Self, f: f64) -> Self {
        Self {
            cg: self.cg + f * k.cg,
            ce: self.ce + f * k.ce,
            cs: self.cs + f * k.cs,
        }
    }
}

fn deriv(s: &AtomicState, d: &DriveSample, mode: EvolutionMode) -> AtomicState {
    let half_signal = 0.5 * d.signal;
    let half_raman = 0.5 * d.raman;
    let i = Complex64::I;
    AtomicState {
        cg: match mode {
            EvolutionMode::Full => -i * half_signal.conj() * s.ce,
            EvolutionMode::Perturbative => Complex64::ZERO,
        },
        ce: -i * half_signal * s.cg + i * d.detuning * s.ce - i * half_raman * s.cs,
        cs: -i * half_raman.conj() * s.ce,
    }
}

/// One Runge-Kutta step of length `dt` with the drive sampled at the
/// step start, midpoint and end. Fourth-order accurate when those
/// samples come from a smooth drive.
pub fn rk4_step(
    state: &AtomicState,
    begin: &DriveSample,
    mid: &DriveSample,
    end: &DriveSample,
    dt: f64,
    mode: EvolutionMode,
) -> AtomicState {
    let k1 = deriv(state, begin, mode);
    let k2 = deriv(&state.with_step(&k1, 0.5 * dt), mid, mode);
    let k3 = deriv(&state.with_step(&k2, 0.5 * dt), mid, mode);
    let k4 = deriv(&state.with_step(&k3, dt), end, mode);
    AtomicState {
        cg: state.cg + dt / 6.0 * (k1.cg + 2.0 * k2.cg + 2.0 * k3.cg + k4.cg),
        ce: state.ce + dt / 6.0 * (k1.ce + 2.0 * k2.ce + 2.0 * k3.ce + k4.ce),
        cs: state.cs + dt / 6.0 * (k1.cs + 2.0 * k2.cs + 2.0 * k3.cs + k4.cs),
    }
}

/// Integrates over the whole grid, sampling the drive at the exact times
/// RK4 needs. Returns the state at every grid point, starting with
/// `initial`.
pub fn evolve(
    initial: AtomicState,
    grid: &TimeGrid,
    mut drive: impl FnMut(f64) -> DriveSample,
    mode: EvolutionMode,
) -> Vec<AtomicState> {
    let mut states = Vec::with_capacity(grid.count());
    let mut s = initial;
    states.push(s);
    let dt = grid.dt();
    for k in 0..grid.count() - 1 {
        let t = grid.time(k);
        let begin = drive(t);
        let mid = drive(t + 0.5 * dt);
        let end = drive(t + dt);
        s = rk4_step(&s, &begin, &mid, &end, dt, mode);
        states.push(s);
    }
    states
}

/// Like [`evolve`] but keeps only the final state.
pub fn evolve_final(
    initial: AtomicState,
    grid: &TimeGrid,
    mut drive: impl FnMut(f64) -> DriveSample,
    mode: EvolutionMode,
) -> AtomicState {
    let mut s = initial;
    let dt = grid.dt();
    for k in 0..grid.count() - 1 {
        let t = grid.time(k);
        let begin = drive(t);
        let mid = drive(t + 0.5 * dt);
        let end = drive(t + dt);
        s = rk4_step(&s, &begin, &mid, &end, dt, mode);
    }
    s
}
