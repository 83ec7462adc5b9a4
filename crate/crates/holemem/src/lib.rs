//! Simulator and analysis toolkit for stopped-light optical memories
//! based on spectral holes.
//!
//! A weak signal pulse tuned to a narrow transmission hole inside an
//! absorbing feature of a rare-earth-doped crystal propagates as slow
//! light. A short control pulse on the excited-to-spin transition maps
//! the optical coherence onto a spin wave; a second control pulse later
//! restores it and the pulse resumes propagating. This crate integrates
//! the coupled atom/field equations behind that protocol and provides
//! the surrounding analysis: hole-shape fitting, storage-efficiency
//! scaling, spin dephasing, and photon-counting statistics at the
//! single-photon level.
//!
//! Internal conventions: time in microseconds, angular frequencies in
//! rad/us, propagation depth normalized to the crystal length. Public
//! interfaces take ordinary frequencies in kHz or MHz and convert at the
//! boundary (see [`units`]).

pub mod analysis;
pub mod atoms;
pub mod cli;
pub mod config;
pub mod envelope;
pub mod error;
pub mod fitting;
pub mod grid;
pub mod hole;
pub mod oracle;
pub mod propagation;
pub mod protocol;
pub mod units;

pub use atoms::{AtomicState, DriveSample, EvolutionMode};
pub use envelope::{gaussian_pulse, pulse_energy, square_pulse, ComplexEnvelope};
pub use error::{Error, Result};
pub use grid::{DetuningGrid, TimeGrid};
pub use hole::{fit_hole, AbsorptionTrace, HoleProfile};
pub use propagation::{propagate, PropagationResult, SimGrids};
pub use protocol::{run_sequence, SequenceSpec, StorageResult};
