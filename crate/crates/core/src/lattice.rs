//! Lattice geometry and the position-dependent ac-Stark shift.
//!
//! All quantities are SI: lengths in metres, angular frequencies in rad/s,
//! times in seconds. Phases are radians and are never wrapped.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Electron mass (kg).
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
/// Mass of a singly ionised calcium-40 atom (kg).
pub const CA40_ION_MASS: f64 = 39.962_590_863 * ATOMIC_MASS_UNIT - ELECTRON_MASS;

/// Smallest beam angle accepted by [`lattice_period`].
pub const MIN_BEAM_ANGLE: f64 = 1e-6;

/// Beam angle giving a 260 nm lattice period at 397 nm.
pub fn default_beam_angle() -> f64 {
    2.0 * (397e-9_f64 / (2.0 * 260e-9)).asin()
}

/// Spin projection `m_J` of the ground-state qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spin {
    #[serde(rename = "up")]
    Up,
    #[serde(rename = "down")]
    Down,
}

impl Spin {
    /// `m_J` as a number: +1/2 for up, -1/2 for down.
    pub fn mj(self) -> f64 {
        match self {
            Spin::Up => 0.5,
            Spin::Down => -0.5,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Spin::Up => "up",
            Spin::Down => "down",
        }
    }
}

/// Physical constants of the ion, trap and lattice beams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    /// Laser wavelength (m).
    pub lambda_laser: f64,
    /// Full angle between the two lattice beams (rad).
    pub beam_angle: f64,
    /// Detuning from the S-P transition (rad/s).
    pub detuning: f64,
    /// Axial trap frequency (rad/s).
    pub trap_freq: f64,
    pub lamb_dicke: f64,
    /// Ion mass (kg).
    pub ion_mass: f64,
    /// Probability that a projective readout reports the true state.
    pub readout_fidelity: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            lambda_laser: 397e-9,
            beam_angle: default_beam_angle(),
            detuning: 2.0 * PI * 30e9,
            trap_freq: 2.0 * PI * 1.41e6,
            lamb_dicke: 0.21,
            ion_mass: CA40_ION_MASS,
            readout_fidelity: 0.99,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_laser", self.lambda_laser),
            ("detuning", self.detuning),
            ("trap_freq", self.trap_freq),
            ("ion_mass", self.ion_mass),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.beam_angle > 0.0 && self.beam_angle < PI) {
            return Err(invalid("beam_angle", "must lie in (0, pi)"));
        }
        if !(self.readout_fidelity > 0.0 && self.readout_fidelity <= 1.0) {
            return Err(invalid("readout_fidelity", "must lie in (0, 1]"));
        }
        if !(self.lamb_dicke > 0.0 && self.lamb_dicke < 1.0) {
            return Err(invalid("lamb_dicke", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Lattice wavevector `2π/λ_sw` (1/m).
    pub fn wavevector(&self) -> Result<f64> {
        Ok(2.0 * PI / lattice_period(self)?)
    }

    /// Ground-state wavepacket extent `sqrt(ħ/(2mω))` (m).
    pub fn ground_state_extent(&self) -> f64 {
        (HBAR / (2.0 * self.ion_mass * self.trap_freq)).sqrt()
    }
}

/// Standing-wave period `λ/(2 sin(α/2))`.
pub fn lattice_period(params: &PhysicalParams) -> Result<f64> {
    let alpha = params.beam_angle;
    if !(MIN_BEAM_ANGLE..=PI).contains(&alpha) {
        return Err(Error::Domain(format!(
            "beam angle {alpha} rad outside [{MIN_BEAM_ANGLE}, pi]"
        )));
    }
    Ok(params.lambda_laser / (2.0 * (alpha / 2.0).sin()))
}

/// The ac-Stark shift profile of the standing wave.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandingWaveField {
    /// Differential Stark shift amplitude `Δ_S⁽⁰⁾` (rad/s).
    pub stark_amplitude: f64,
    /// Lattice wavevector `k` (1/m).
    pub wavevector: f64,
    /// Interferometer phase `φ` (rad), unwrapped.
    pub phase: f64,
}

impl StandingWaveField {
    pub fn new(stark_amplitude: f64, wavevector: f64, phase: f64) -> Result<Self> {
        if !(stark_amplitude.is_finite() && stark_amplitude >= 0.0) {
            return Err(invalid("stark_amplitude", "must be finite and non-negative"));
        }
        if !(wavevector.is_finite() && wavevector > 0.0) {
            return Err(invalid("wavevector", "must be finite and positive"));
        }
        if !phase.is_finite() {
            return Err(invalid("phase", "must be finite"));
        }
        Ok(Self {
            stark_amplitude,
            wavevector,
            phase,
        })
    }

    /// Field for the given beam geometry.
    pub fn from_params(params: &PhysicalParams, stark_amplitude: f64, phase: f64) -> Result<Self> {
        Self::new(stark_amplitude, params.wavevector()?, phase)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.wavevector
    }

    /// Local lattice phase `kz + φ`.
    pub fn lattice_phase(&self, z: f64) -> f64 {
        self.wavevector * z + self.phase
    }

    pub fn with_phase(self, phase: f64) -> Self {
        Self { phase, ..self }
    }

    pub fn with_stark_amplitude(self, stark_amplitude: f64) -> Self {
        Self {
            stark_amplitude,
            ..self
        }
    }
}

/// `Δ_S⁽⁰⁾ cos(kz + φ)`.
pub fn stark_shift(field: &StandingWaveField, z: f64) -> f64 {
    field.stark_amplitude * field.lattice_phase(z).cos()
}
