//! Closed-loop lattice-phase stabilisation.
//!
//! The ion sits half way between a node and an antinode, where a spin echo
//! of suitable length returns the setpoint probability. Interferometer
//! drift moves the local lattice phase; the spin-echo estimate is turned
//! into a phase error, and the loop moves the ion through the shift-voltage
//! feedthrough to compensate. The applied phase correction is `−k·(dx/dV)·V`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::echo::{readout_probability, sample_measurement_with, MeasurementOutcome};
use crate::error::{invalid, Result};
use crate::lattice::StandingWaveField;
use crate::rng;

/// Phase-error magnitude treated as loss of lock.
pub const LOCK_LOST_THRESHOLD: f64 = FRAC_PI_2;

/// `|p − setpoint|` above which the linearised error signal is flagged.
pub const SATURATION_THRESHOLD: f64 = 0.45;

/// Readout-limited phase resolution `2 sqrt(S(1−S)/N)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShotNoiseLimit {
    pub radians: f64,
    /// Setpoint at 0 or 1: the estimate has no spread but also no sensitivity.
    pub degenerate: bool,
}

pub fn shot_noise_limit(setpoint: f64, repetitions: u64) -> Result<ShotNoiseLimit> {
    if !(0.0..=1.0).contains(&setpoint) {
        return Err(invalid("setpoint", "must lie in [0, 1]"));
    }
    if repetitions == 0 {
        return Err(invalid("repetitions", "must be at least 1"));
    }
    Ok(ShotNoiseLimit {
        radians: 2.0 * (setpoint * (1.0 - setpoint) / repetitions as f64).sqrt(),
        degenerate: setpoint == 0.0 || setpoint == 1.0,
    })
}

/// One component of the interferometer phase drift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftKind {
    /// Brownian phase with the given rms rate (rad/√s).
    RandomWalk { rate_rms: f64 },
    /// Constant drift rate (rad/s).
    LinearRamp { rate: f64 },
    /// Sudden jump of `size` rad at time `at` s.
    Step { size: f64, at: f64 },
    Composite(Vec<DriftKind>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftProcess {
    pub kind: DriftKind,
    #[serde(default)]
    pub seed: u64,
}

impl DriftProcess {
    pub fn new(kind: DriftKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn none() -> Self {
        Self::new(DriftKind::Composite(vec![DriftKind::LinearRamp { rate: 0.0 }]), 0)
    }

    pub fn validate(&self) -> Result<()> {
        fn check(kind: &DriftKind) -> Result<()> {
            match kind {
                DriftKind::RandomWalk { rate_rms } if !(rate_rms.is_finite() && *rate_rms >= 0.0) => {
                    Err(invalid("rate_rms", "must be finite and non-negative"))
                }
                DriftKind::LinearRamp { rate } if !rate.is_finite() => Err(invalid("rate", "must be finite")),
                DriftKind::Step { size, at } if !(size.is_finite() && at.is_finite()) => {
                    Err(invalid("step", "size and time must be finite"))
                }
                DriftKind::Composite(parts) if parts.is_empty() => {
                    Err(invalid("composite", "must contain at least one component"))
                }
                DriftKind::Composite(parts) => parts.iter().try_for_each(check),
                _ => Ok(()),
            }
        }
        check(&self.kind)
    }

    /// Drift phase at each of the (increasing) `times`, starting from zero.
    pub fn path(&self, times: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let mut out = vec![0.0; times.len()];
        let mut counter = 0u64;
        accumulate(&self.kind, times, self.seed, &mut counter, &mut out)?;
        Ok(out)
    }
}

fn accumulate(kind: &DriftKind, times: &[f64], seed: u64, counter: &mut u64, out: &mut [f64]) -> Result<()> {
    match kind {
        DriftKind::LinearRamp { rate } => {
            for (o, t) in out.iter_mut().zip(times) {
                *o += rate * t;
            }
        }
        DriftKind::Step { size, at } => {
            for (o, t) in out.iter_mut().zip(times) {
                if *t >= *at {
                    *o += size;
                }
            }
        }
        DriftKind::RandomWalk { rate_rms } => {
            let mut rng = rng::stream(seed, "drift-random-walk", *counter);
            *counter += 1;
            let unit = Normal::new(0.0, 1.0).map_err(|e| invalid("rate_rms", e.to_string()))?;
            let mut phase = 0.0;
            let mut last = times.first().copied().unwrap_or(0.0).min(0.0);
            for (o, t) in out.iter_mut().zip(times) {
                let dt = (t - last).max(0.0);
                phase += rate_rms * dt.sqrt() * unit.sample(&mut rng);
                last = *t;
                *o += phase;
            }
        }
        DriftKind::Composite(parts) => {
            for p in parts {
                accumulate(p, times, seed, counter, out)?;
            }
        }
    }
    Ok(())
}

/// How a measured probability is converted into a phase error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorEstimator {
    /// `(p − setpoint)/slope` at the operating point.
    #[default]
    Linearized,
    /// Exact inversion of the echo signal on its monotonic branch.
    Inverted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LockConfig {
    pub setpoint: f64,
    /// Time between lock slots (s).
    pub update_period: f64,
    pub repetitions_per_update: u64,
    pub gain: f64,
    /// Ion displacement per shift volt (m/V).
    pub feedthrough: f64,
    /// Voltage resolution (V).
    pub dac_step: f64,
    /// Echo exposure (s). `None` chooses `π/2` accumulated phase at `kz+φ = π/4`.
    pub exposure_time: Option<f64>,
    /// Fraction of slots that run the stabilisation sequence.
    pub duty_cycle: f64,
    pub estimator: ErrorEstimator,
    /// Replace binomial sampling by the exact readout probability.
    pub noiseless: bool,
}

impl Default for LockConfig {
    fn default() -> Self {
        Self {
            setpoint: 0.5,
            update_period: 0.5,
            repetitions_per_update: 200,
            gain: 1.0,
            feedthrough: 8e-6,
            dac_step: 0.3e-3,
            exposure_time: None,
            duty_cycle: 0.5,
            estimator: ErrorEstimator::Linearized,
            noiseless: false,
        }
    }
}

impl LockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.setpoint > 0.0 && self.setpoint < 1.0) {
            return Err(invalid("setpoint", "must lie in (0, 1)"));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(invalid("gain", "must be positive"));
        }
        if !(self.dac_step > 0.0 && self.dac_step.is_finite()) {
            return Err(invalid("dac_step", "must be positive"));
        }
        if !(self.update_period > 0.0 && self.update_period.is_finite()) {
            return Err(invalid("update_period", "must be positive"));
        }
        if !(self.feedthrough.is_finite() && self.feedthrough != 0.0) {
            return Err(invalid("feedthrough", "must be finite and non-zero"));
        }
        if self.repetitions_per_update == 0 {
            return Err(invalid("repetitions_per_update", "must be at least 1"));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(invalid("duty_cycle", "must lie in (0, 1]"));
        }
        if let Some(t) = self.exposure_time {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("exposure_time", "must be positive"));
            }
        }
        Ok(())
    }

    /// Exposure used by the lock sequence.
    pub fn exposure(&self, field: &StandingWaveField) -> f64 {
        self.exposure_time
            .unwrap_or_else(|| FRAC_PI_2 / (field.stark_amplitude * FRAC_PI_4.cos()))
    }

    /// Lattice-phase change produced by one DAC step.
    pub fn phase_per_step(&self, field: &StandingWaveField) -> f64 {
        field.wavevector * self.feedthrough * self.dac_step
    }

    fn is_stabilization_slot(&self, k: usize) -> bool {
        ((k + 1) as f64 * self.duty_cycle).floor() > (k as f64 * self.duty_cycle).floor()
    }
}

/// Operating point of the lock for a given exposure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoint {
    /// Local lattice phase `kz + φ` where the signal equals the setpoint.
    pub lattice_phase: f64,
    /// Pulse area `Δ_S⁽⁰⁾ t`.
    pub area: f64,
    /// `dS/dθ` at the operating point.
    pub slope: f64,
}

impl OperatingPoint {
    pub fn new(cfg: &LockConfig, field: &StandingWaveField) -> Result<Self> {
        cfg.validate()?;
        let area = field.stark_amplitude * cfg.exposure(field);
        let spin_phase = (2.0 * cfg.setpoint - 1.0).acos();
        let c = spin_phase / area;
        if !(area > 0.0 && c <= 1.0) {
            return Err(invalid("exposure_time", "setpoint unreachable with this exposure"));
        }
        let theta = c.acos();
        let slope = 0.5 * spin_phase.sin() * area * theta.sin();
        Ok(Self {
            lattice_phase: theta,
            area,
            slope,
        })
    }

    /// Noise-free echo signal for a phase error `r`.
    pub fn signal(&self, residual: f64) -> f64 {
        0.5 * (1.0 + (self.area * (self.lattice_phase + residual).cos()).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorSignal {
    /// Estimated lattice-phase error (rad); positive when the local phase is
    /// past the operating point.
    pub phase_error: f64,
    pub saturated: bool,
}

/// Convert a measurement into a phase-error estimate, undoing the symmetric
/// readout error of the given fidelity.
pub fn error_signal(
    outcome: &MeasurementOutcome,
    cfg: &LockConfig,
    field: &StandingWaveField,
    fidelity: f64,
) -> Result<ErrorSignal> {
    let op = OperatingPoint::new(cfg, field)?;
    Ok(error_from_probability(outcome.p_up_estimate, cfg, &op, fidelity))
}

fn error_from_probability(p: f64, cfg: &LockConfig, op: &OperatingPoint, fidelity: f64) -> ErrorSignal {
    let contrast = 2.0 * fidelity - 1.0;
    let p_true = if contrast > 0.0 {
        (p - (1.0 - fidelity)) / contrast
    } else {
        p
    };
    let saturated = (p_true - cfg.setpoint).abs() > SATURATION_THRESHOLD;
    let phase_error = match cfg.estimator {
        ErrorEstimator::Linearized => (p_true - cfg.setpoint) / op.slope,
        ErrorEstimator::Inverted => {
            let spin_phase = (2.0 * p_true - 1.0).clamp(-1.0, 1.0).acos();
            let c = (spin_phase / op.area).clamp(-1.0, 1.0);
            c.acos() - op.lattice_phase
        }
    };
    ErrorSignal {
        phase_error,
        saturated,
    }
}

/// Time series produced by [`run_lock`]. Entry `i` describes lock slot `i`:
/// the drift phase, the signal measured in that slot (`NaN` for science
/// slots), the voltage applied during it and the resulting phase error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LockTrace {
    pub times: Vec<f64>,
    pub true_phase: Vec<f64>,
    pub measured_signal: Vec<f64>,
    pub applied_voltage: Vec<f64>,
    pub residual_phase: Vec<f64>,
    /// Times at which `|residual| > π/2`.
    pub lock_lost_events: Vec<f64>,
    /// Phase change per volt, `k·dx/dV`.
    pub phase_per_volt: f64,
}

impl LockTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Phase correction applied in slot `i`, `true_phase − residual`.
    pub fn correction(&self, i: usize) -> f64 {
        -self.phase_per_volt * self.applied_voltage[i]
    }
}

/// Simulate the interleaved lock for `duration` seconds.
pub fn run_lock(
    drift: &DriftProcess,
    cfg: &LockConfig,
    field: &StandingWaveField,
    fidelity: f64,
    duration: f64,
    seed: u64,
) -> Result<LockTrace> {
    cfg.validate()?;
    if !(duration > cfg.update_period) {
        return Err(invalid("duration", "must exceed the update period"));
    }
    if !(fidelity > 0.0 && fidelity <= 1.0) {
        return Err(invalid("readout_fidelity", "must lie in (0, 1]"));
    }
    let op = OperatingPoint::new(cfg, field)?;
    let slots = (duration / cfg.update_period).floor() as usize;
    let times: Vec<f64> = (0..slots).map(|k| k as f64 * cfg.update_period).collect();
    let drift_phase = drift.path(&times)?;
    let phase_per_volt = field.wavevector * cfg.feedthrough;
    let mut rng = rng::stream(seed, "lock-readout", 0);

    let mut trace = LockTrace {
        times: times.clone(),
        true_phase: drift_phase.clone(),
        measured_signal: Vec::with_capacity(slots),
        applied_voltage: Vec::with_capacity(slots),
        residual_phase: Vec::with_capacity(slots),
        lock_lost_events: Vec::new(),
        phase_per_volt,
    };
    let mut steps: i64 = 0;
    for k in 0..slots {
        let voltage = steps as f64 * cfg.dac_step;
        let residual = drift_phase[k] + phase_per_volt * voltage;
        if residual.abs() > LOCK_LOST_THRESHOLD {
            trace.lock_lost_events.push(times[k]);
        }
        let mut signal = f64::NAN;
        if cfg.is_stabilization_slot(k) {
            let p_true = op.signal(residual).clamp(0.0, 1.0);
            let p_meas = if cfg.noiseless {
                readout_probability(p_true, fidelity)
            } else {
                sample_measurement_with(&mut rng, p_true, cfg.repetitions_per_update, fidelity)?.p_up_estimate
            };
            let err = error_from_probability(p_meas, cfg, &op, fidelity);
            let target = voltage - cfg.gain * err.phase_error / phase_per_volt;
            steps = (target / cfg.dac_step).round() as i64;
            signal = p_meas;
        }
        trace.measured_signal.push(signal);
        trace.applied_voltage.push(voltage);
        trace.residual_phase.push(residual);
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualStats {
    /// Rms of the residual phase (rad).
    pub rms: f64,
    /// Largest correction excursion from the initial one (rad).
    pub max_drift_corrected: f64,
    /// Correction in the last slot relative to the first (rad).
    pub net_correction: f64,
    pub lock_lost_count: usize,
}

pub fn residual_stats(trace: &LockTrace) -> Result<ResidualStats> {
    if trace.is_empty() {
        return Err(invalid("trace", "must not be empty"));
    }
    let n = trace.len() as f64;
    let rms = (trace.residual_phase.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let c0 = trace.correction(0);
    let max_drift_corrected = (0..trace.len())
        .map(|i| (trace.correction(i) - c0).abs())
        .fold(0.0, f64::max);
    Ok(ResidualStats {
        rms,
        max_drift_corrected,
        net_correction: trace.correction(trace.len() - 1) - c0,
        lock_lost_count: trace.lock_lost_events.len(),
    })
}

/// Wrap a phase into (−π, π] for display.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn field() -> StandingWaveField {
        StandingWaveField::new(2.0 * PI * 185e3, 2.0 * PI / 260e-9, 0.0).unwrap()
    }

    #[test]
    fn shot_noise_reference_values() {
        let l = shot_noise_limit(0.5, 200).unwrap();
        assert_relative_eq!(l.radians, 0.070_710_678, epsilon = 1e-8);
        assert_relative_eq!(l.radians / PI, 0.0225, epsilon = 1e-4);
        assert_relative_eq!(shot_noise_limit(0.5, 800).unwrap().radians, l.radians / 2.0, max_relative = 1e-14);
        let edge = shot_noise_limit(0.0, 200).unwrap();
        assert_eq!(edge.radians, 0.0);
        assert!(edge.degenerate);
        assert!(shot_noise_limit(0.5, 0).is_err());
    }

    #[test]
    fn operating_point_is_halfway() {
        let cfg = LockConfig::default();
        let op = OperatingPoint::new(&cfg, &field()).unwrap();
        assert_relative_eq!(op.lattice_phase, FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(op.area, PI / 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(op.signal(0.0), 0.5, epsilon = 1e-12);
        assert_relative_eq!(op.slope, PI / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn error_signal_linearisation() {
        let f = field();
        let cfg = LockConfig::default();
        let op = OperatingPoint::new(&cfg, &f).unwrap();
        let at = |p: f64| MeasurementOutcome {
            p_up_estimate: p,
            successes: 0,
            repetitions: 200,
        };
        assert_eq!(error_signal(&at(0.5), &cfg, &f, 1.0).unwrap().phase_error, 0.0);
        let e = error_signal(&at(0.5 + op.slope * 0.01), &cfg, &f, 1.0).unwrap();
        assert_relative_eq!(e.phase_error, 0.01, max_relative = 1e-12);
        assert!(!e.saturated);
        assert!(error_signal(&at(0.98), &cfg, &f, 1.0).unwrap().saturated);
    }

    #[test]
    fn inverted_estimator_is_exact() {
        let f = field();
        let cfg = LockConfig {
            estimator: ErrorEstimator::Inverted,
            ..Default::default()
        };
        let op = OperatingPoint::new(&cfg, &f).unwrap();
        for &r in &[-0.7, -0.2, 0.0, 0.3, 0.75] {
            let p = readout_probability(op.signal(r), 0.99);
            let e = error_from_probability(p, &cfg, &op, 0.99);
            assert_relative_eq!(e.phase_error, r, epsilon = 1e-9);
        }
    }

    #[test]
    fn drift_components() {
        let times: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let ramp = DriftProcess::new(DriftKind::LinearRamp { rate: 0.5 }, 0).path(&times).unwrap();
        assert_eq!(ramp, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let step = DriftProcess::new(DriftKind::Step { size: 1.0, at: 2.0 }, 0).path(&times).unwrap();
        assert_eq!(step, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        let walk = DriftProcess::new(DriftKind::RandomWalk { rate_rms: 0.3 }, 4);
        assert_eq!(walk.path(&times).unwrap(), walk.path(&times).unwrap());
        assert!(DriftProcess::new(DriftKind::Composite(vec![]), 0).validate().is_err());
    }

    #[test]
    fn quiet_loop_stays_at_zero() {
        let cfg = LockConfig {
            noiseless: true,
            duty_cycle: 1.0,
            ..Default::default()
        };
        let trace = run_lock(&DriftProcess::none(), &cfg, &field(), 0.99, 60.0, 1).unwrap();
        assert!(trace.residual_phase.iter().all(|r| *r == 0.0));
        let stats = residual_stats(&trace).unwrap();
        assert_eq!(stats.rms, 0.0);
        assert_eq!(stats.lock_lost_count, 0);
    }

    #[test]
    fn half_duty_measures_every_other_slot() {
        let trace = run_lock(&DriftProcess::none(), &LockConfig::default(), &field(), 0.99, 5.0, 1).unwrap();
        let measured: Vec<bool> = trace.measured_signal.iter().map(|s| !s.is_nan()).collect();
        assert_eq!(measured, vec![false, true, false, true, false, true, false, true, false, true]);
    }

    #[test]
    fn residual_stats_constant_offset() {
        let trace = LockTrace {
            times: vec![0.0, 1.0, 2.0],
            true_phase: vec![0.3; 3],
            measured_signal: vec![f64::NAN; 3],
            applied_voltage: vec![0.0; 3],
            residual_phase: vec![-0.3; 3],
            lock_lost_events: vec![],
            phase_per_volt: 1.0,
        };
        assert_relative_eq!(residual_stats(&trace).unwrap().rms, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn wrap_phase_range() {
        assert_relative_eq!(wrap_phase(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_phase(-0.5), -0.5);
    }
}
