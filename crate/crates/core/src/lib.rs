//! Phase-stable optical lattice for a single trapped ion.
//!
//! Standing-wave Stark shifts, spin-echo phase readout, closed-loop phase
//! stabilisation, state-dependent motional kicks and the voltage-to-position
//! map of a segmented trap.

pub mod config;
pub mod echo;
pub mod error;
pub mod fock;
pub mod harness;
pub mod kicks;
pub mod lattice;
pub mod lock;
pub mod motion;
pub mod numeric;
pub mod position;
pub mod rng;

pub use error::{Error, Result};
pub use lattice::{lattice_period, stark_shift, PhysicalParams, Spin, StandingWaveField};
pub use motion::{IonState, MotionKind, MotionalState};
