//! Spin-echo signal models.
//!
//! An ion exposed to the standing wave for a time `t` accumulates the spin
//! phase `Δ_S(z) t`. The readout probability of `|↑⟩` is modelled
//!
//! * without motion or jitter: `½[1 + cos(Δ_S(z) t)]`;
//! * for Fock state `n` with Gaussian lattice-phase jitter of rms `Δφ`:
//!   `½[1 + e^(−γₙ) cos(Mₙ(η) Δ_S(z) t)]`, with the contrast loss `γₙ`
//!   of [`contrast_loss`];
//! * for a thermal state: the Fock signals averaged with thermal weights.
//!
//! The jitter is quasi-static: one phase draw per shot, constant during the
//! exposure. [`monte_carlo_echo`] samples exactly that process and is the
//! reference the analytic forms are checked against.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{stark_shift, StandingWaveField};
use crate::motion::{lamb_dicke_element, lamb_dicke_table, IonState, MotionKind, MotionalState};
use crate::rng;

/// Jitter above which the small-`Δφ` contrast-loss expansion is flagged.
pub const JITTER_VALIDITY_LIMIT: f64 = 0.3;

/// Default Monte Carlo sample count.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

const MC_BATCH: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoConfig {
    /// Exposure time `t` (s).
    pub exposure_time: f64,
    /// Repetitions `N` per probability estimate.
    pub repetitions: u64,
    /// Rms lattice-phase jitter `Δφ` (rad).
    pub phase_jitter_rms: f64,
}

impl Default for EchoConfig {
    fn default() -> Self {
        Self {
            exposure_time: 0.0,
            repetitions: 200,
            phase_jitter_rms: 0.0,
        }
    }
}

impl EchoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.exposure_time.is_finite() && self.exposure_time >= 0.0) {
            return Err(invalid("exposure_time", "must be finite and non-negative"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be at least 1"));
        }
        if !(self.phase_jitter_rms.is_finite() && self.phase_jitter_rms >= 0.0) {
            return Err(invalid("phase_jitter_rms", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Binomially sampled estimate of the spin-up probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOutcome {
    pub p_up_estimate: f64,
    pub successes: u64,
    pub repetitions: u64,
}

impl MeasurementOutcome {
    pub fn new(successes: u64, repetitions: u64) -> Self {
        debug_assert!(successes <= repetitions && repetitions > 0);
        Self {
            p_up_estimate: successes as f64 / repetitions as f64,
            successes,
            repetitions,
        }
    }
}

/// `½[1 + cos(Δ_S(z) t)]`.
pub fn echo_signal_pure(field: &StandingWaveField, z: f64, t: f64) -> f64 {
    0.5 * (1.0 + (stark_shift(field, z) * t).cos())
}

/// Jitter-induced contrast loss and whether `Δφ` is beyond the expansion's range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContrastLoss {
    pub gamma: f64,
    pub outside_validity: bool,
}

fn jitter_spatial_factor(theta: f64, dphi: f64) -> f64 {
    let s2 = dphi * dphi;
    let c = theta.cos();
    0.5 * s2 * (-s2).exp() * (1.0 - (2.0 * theta).cos() + 1.5 * s2 * c * c)
}

fn jitter_spatial_factor_derivative(theta: f64, dphi: f64) -> f64 {
    let s2 = dphi * dphi;
    0.5 * s2 * (-s2).exp() * (2.0 * theta).sin() * (2.0 - 1.5 * s2)
}

/// `γₙ = (Mₙ(η) Δ_S⁽⁰⁾ t)² (Δφ²/2) e^(−Δφ²) (1 − cos 2θ + (3Δφ²/2) cos²θ)`
/// with `θ = kz + φ` the local lattice phase.
pub fn contrast_loss(
    n: usize,
    field: &StandingWaveField,
    z: f64,
    t: f64,
    eta: f64,
    dphi: f64,
) -> ContrastLoss {
    let area = lamb_dicke_element(n, eta) * field.stark_amplitude * t;
    ContrastLoss {
        gamma: area * area * jitter_spatial_factor(field.lattice_phase(z), dphi),
        outside_validity: dphi > JITTER_VALIDITY_LIMIT,
    }
}

/// Signal for Fock state `n`: `½[1 + e^(−γₙ) cos(Mₙ(η) Δ_S(z) t)]`.
pub fn echo_signal_fock(
    n: usize,
    field: &StandingWaveField,
    z: f64,
    t: f64,
    eta: f64,
    dphi: f64,
) -> f64 {
    let m = lamb_dicke_element(n, eta);
    fock_term(m, field.lattice_phase(z), field.stark_amplitude * t, dphi).0
}

/// Returns `(S, ∂S/∂θ, ∂S/∂A)` for one Fock level with Stark scale `m`.
fn fock_term(m: f64, theta: f64, area: f64, dphi: f64) -> (f64, f64, f64) {
    let c = m * area;
    let g = jitter_spatial_factor(theta, dphi);
    let gamma = c * c * g;
    let decay = (-gamma).exp();
    let (sin_t, cos_t) = theta.sin_cos();
    let phase = c * cos_t;
    let (sin_p, cos_p) = phase.sin_cos();
    let s = 0.5 * (1.0 + decay * cos_p);

    let gamma_theta = c * c * jitter_spatial_factor_derivative(theta, dphi);
    let phase_theta = -c * sin_t;
    let ds_theta = -0.5 * decay * (gamma_theta * cos_p + sin_p * phase_theta);

    let gamma_area = 2.0 * m * m * area * g;
    let phase_area = m * cos_t;
    let ds_area = -0.5 * decay * (gamma_area * cos_p + sin_p * phase_area);
    (s, ds_theta, ds_area)
}

/// Thermally averaged signal `Σₙ n̄ⁿ/(n̄+1)ⁿ⁺¹ Sₙ(z,t)` over the truncated range.
pub fn echo_signal_thermal(
    motion: &MotionalState,
    field: &StandingWaveField,
    z: f64,
    t: f64,
    eta: f64,
    dphi: f64,
) -> Result<f64> {
    let model = ThermalEchoModel::new(motion, eta, dphi)?;
    Ok(model.signal(field.lattice_phase(z), field.stark_amplitude * t))
}

/// Precomputed weights and Lamb-Dicke factors for repeated evaluation of the
/// motion- and jitter-averaged signal as a function of the local lattice
/// phase `θ` and the pulse area `A = Δ_S⁽⁰⁾ t`.
#[derive(Clone, Debug)]
pub struct ThermalEchoModel {
    weights: Vec<f64>,
    scale: Vec<f64>,
    dphi: f64,
}

impl ThermalEchoModel {
    pub fn new(motion: &MotionalState, eta: f64, dphi: f64) -> Result<Self> {
        motion.check_truncation()?;
        if !(dphi.is_finite() && dphi >= 0.0) {
            return Err(invalid("phase_jitter_rms", "must be finite and non-negative"));
        }
        let all = motion.populations();
        let table = lamb_dicke_table(eta, motion.truncation());
        // levels below 1e-18 cannot move a double-precision sum
        let (weights, scale) = all
            .iter()
            .zip(table.iter())
            .filter(|(w, _)| **w > 1e-18)
            .map(|(w, m)| (*w, *m))
            .unzip();
        Ok(Self {
            weights,
            scale,
            dphi,
        })
    }

    pub fn phase_jitter(&self) -> f64 {
        self.dphi
    }

    pub fn signal(&self, theta: f64, area: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.scale)
            .map(|(w, m)| w * fock_term(*m, theta, area, self.dphi).0)
            .sum()
    }

    /// Signal with its partial derivatives in `θ` and `A`.
    pub fn signal_with_gradient(&self, theta: f64, area: f64) -> (f64, f64, f64) {
        let mut acc = (0.0, 0.0, 0.0);
        for (w, m) in self.weights.iter().zip(&self.scale) {
            let (s, dt, da) = fock_term(*m, theta, area, self.dphi);
            acc.0 += w * s;
            acc.1 += w * dt;
            acc.2 += w * da;
        }
        acc
    }
}

/// Thermal signal with the Gaussian phase average done by quadrature instead
/// of the contrast-loss expansion. Exact up to quadrature error for any `Δφ`.
pub fn echo_signal_jitter_quadrature(
    motion: &MotionalState,
    field: &StandingWaveField,
    z: f64,
    t: f64,
    eta: f64,
    dphi: f64,
) -> Result<f64> {
    motion.check_truncation()?;
    let theta = field.lattice_phase(z);
    let area = field.stark_amplitude * t;
    let weights = motion.populations();
    let table = lamb_dicke_table(eta, motion.truncation());
    let nodes = gaussian_nodes(dphi);
    let mut total = 0.0;
    for (w, m) in weights.iter().zip(&table) {
        if *w == 0.0 {
            continue;
        }
        let avg: f64 = nodes
            .iter()
            .map(|(eps, q)| q * (m * area * (theta + eps).cos()).cos())
            .sum();
        total += w * 0.5 * (1.0 + avg);
    }
    Ok(total)
}

/// Simpson nodes and weights for expectation over `Normal(0, σ²)` on ±10σ.
fn gaussian_nodes(sigma: f64) -> Vec<(f64, f64)> {
    if sigma == 0.0 {
        return vec![(0.0, 1.0)];
    }
    const INTERVALS: usize = 2000;
    let half = 10.0 * sigma;
    let h = 2.0 * half / INTERVALS as f64;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    (0..=INTERVALS)
        .map(|i| {
            let x = -half + i as f64 * h;
            let simpson = if i == 0 || i == INTERVALS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let pdf = norm * (-0.5 * (x / sigma).powi(2)).exp();
            (x, simpson * h / 3.0 * pdf)
        })
        .collect()
}

/// Monte Carlo reference for the jitter- and motion-averaged signal.
///
/// Each sample draws `φ' ~ Normal(φ, Δφ)` and a phonon number from the ion's
/// motional state, then evaluates `½[1 + cos(Mₙ Δ_S⁽⁰⁾ cos(kz + φ') t)]`.
/// Batches run in parallel on independent sub-streams and are summed in a
/// fixed order, so the result depends only on the seed.
pub fn monte_carlo_echo(
    ion: &IonState,
    field: &StandingWaveField,
    cfg: &EchoConfig,
    eta: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    if samples == 0 {
        return Err(invalid("samples", "must be at least 1"));
    }
    let area = field.stark_amplitude * cfg.exposure_time;
    let theta = field.lattice_phase(ion.position);
    let jitter = Normal::new(0.0, cfg.phase_jitter_rms).map_err(|e| invalid("phase_jitter_rms", e.to_string()))?;
    let kind = ion.motion.kind();
    let geometric = match kind {
        MotionKind::Thermal(nbar) if nbar > 0.0 => Some(
            Geometric::new(1.0 / (nbar + 1.0)).map_err(|e| invalid("nbar", e.to_string()))?,
        ),
        _ => None,
    };
    let table = lamb_dicke_table(eta, ion.motion.truncation().max(64));

    let batches = samples.div_ceil(MC_BATCH);
    let partial: Vec<f64> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, "echo-monte-carlo", b as u64);
            let count = MC_BATCH.min(samples - b * MC_BATCH);
            let mut acc = 0.0;
            for _ in 0..count {
                let eps: f64 = jitter.sample(&mut rng);
                let n = match (kind, &geometric) {
                    (MotionKind::Fock(n), _) => n,
                    (_, Some(g)) => g.sample(&mut rng) as usize,
                    _ => 0,
                };
                let m = table
                    .get(n)
                    .copied()
                    .unwrap_or_else(|| lamb_dicke_element(n, eta));
                acc += 0.5 * (1.0 + (m * area * (theta + eps).cos()).cos());
            }
            acc
        })
        .collect();
    Ok(partial.iter().sum::<f64>() / samples as f64)
}

/// Probability of reading `|↑⟩` after a symmetric readout error channel.
pub fn readout_probability(p_true: f64, fidelity: f64) -> f64 {
    fidelity * p_true + (1.0 - fidelity) * (1.0 - p_true)
}

/// Draw `successes ~ Binomial(N, p_eff)`, `p_eff = F p + (1−F)(1−p)`.
pub fn sample_measurement(
    p_true: f64,
    repetitions: u64,
    fidelity: f64,
    seed: u64,
) -> Result<MeasurementOutcome> {
    let mut rng = rng::stream(seed, "measurement", 0);
    sample_measurement_with(&mut rng, p_true, repetitions, fidelity)
}

/// [`sample_measurement`] drawing from a caller-owned generator.
pub fn sample_measurement_with<R: Rng + ?Sized>(
    rng: &mut R,
    p_true: f64,
    repetitions: u64,
    fidelity: f64,
) -> Result<MeasurementOutcome> {
    if !(0.0..=1.0).contains(&p_true) {
        return Err(invalid("p_true", format!("must lie in [0, 1], got {p_true}")));
    }
    if !(fidelity > 0.0 && fidelity <= 1.0) {
        return Err(invalid("fidelity", "must lie in (0, 1]"));
    }
    if repetitions == 0 {
        return Err(invalid("repetitions", "must be at least 1"));
    }
    let p_eff = readout_probability(p_true, fidelity).clamp(0.0, 1.0);
    let successes = Binomial::new(repetitions, p_eff)
        .map_err(|e| invalid("p_eff", e.to_string()))?
        .sample(rng);
    Ok(MeasurementOutcome::new(successes, repetitions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Spin;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn field(amplitude: f64) -> StandingWaveField {
        StandingWaveField::new(amplitude, 1.0, 0.0).unwrap()
    }

    #[test]
    fn pure_signal_reference_points() {
        let f = field(1.0);
        assert_eq!(echo_signal_pure(&f, 0.0, 0.0), 1.0);
        assert!(echo_signal_pure(&f, 0.0, PI) < 1e-15);
        assert_relative_eq!(echo_signal_pure(&f, 0.0, PI / 2.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn contrast_loss_spatial_structure() {
        let f = field(1.0);
        assert_eq!(contrast_loss(0, &f, 0.3, 2.0, 0.21, 0.0).gamma, 0.0);
        let dphi: f64 = 0.1;
        let s2 = dphi * dphi;
        // with η = 0 and A = 1 the bracket is exposed directly
        let base = 0.5 * s2 * (-s2).exp();
        let anti = contrast_loss(0, &f, 0.0, 1.0, 0.0, dphi).gamma / base;
        let node = contrast_loss(0, &f, PI / 2.0, 1.0, 0.0, dphi).gamma / base;
        assert_relative_eq!(anti, 1.5 * s2, max_relative = 1e-12);
        assert_relative_eq!(node, 2.0, max_relative = 1e-12);
        assert_relative_eq!(node / anti, 4.0 / (3.0 * s2), max_relative = 1e-12);
        assert!(contrast_loss(0, &f, 0.0, 1.0, 0.21, 0.31).outside_validity);
        assert!(!contrast_loss(0, &f, 0.0, 1.0, 0.21, 0.29).outside_validity);
    }

    #[test]
    fn contrast_loss_node_value() {
        // (M₀ π/2)² (Δφ²/2) e^(−Δφ²) · 2, with M₀ = e^(−η²/2), Δφ = 0.048π
        let dphi = 0.048 * PI;
        let m0 = (-0.5f64 * 0.21 * 0.21).exp();
        let expected = (m0 * PI / 2.0).powi(2) * dphi * dphi * (-dphi * dphi).exp();
        let f = field(PI / 2.0);
        let got = contrast_loss(0, &f, PI / 2.0, 1.0, 0.21, dphi).gamma;
        assert_relative_eq!(got, expected, max_relative = 1e-12);
        assert_relative_eq!(got, 0.052480, epsilon = 1e-6);
    }

    #[test]
    fn fock_signal_reduces_to_pure() {
        let f = StandingWaveField::new(3.0, 2.0, 0.4).unwrap();
        for &z in &[0.0, 0.1, 0.7, 1.3] {
            for &t in &[0.0, 0.5, 1.7] {
                assert_relative_eq!(
                    echo_signal_fock(0, &f, z, t, 0.0, 0.0),
                    echo_signal_pure(&f, z, t),
                    epsilon = 1e-15
                );
            }
        }
        assert_eq!(echo_signal_fock(4, &f, 0.3, 0.0, 0.21, 0.1), 1.0);
    }

    #[test]
    fn thermal_ground_state_equals_fock_zero() {
        let f = field(1.0);
        let motion = MotionalState::thermal(0.0).unwrap();
        let a = echo_signal_thermal(&motion, &f, 0.2, 2.5, 0.21, 0.1).unwrap();
        let b = echo_signal_fock(0, &f, 0.2, 2.5, 0.21, 0.1);
        assert_relative_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn thermal_rejects_short_truncation() {
        let f = field(1.0);
        let motion = MotionalState::thermal_fixed_truncation(28.0, 40).unwrap();
        assert!(echo_signal_thermal(&motion, &f, 0.0, 1.0, 0.21, 0.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let motion = MotionalState::thermal(0.4).unwrap();
        let model = ThermalEchoModel::new(&motion, 0.21, 0.15).unwrap();
        let h = 1e-6;
        for &(theta, area) in &[(0.3, 2.0), (1.1, 4.5), (2.5, 0.7)] {
            let (_, dt, da) = model.signal_with_gradient(theta, area);
            let fd_t = (model.signal(theta + h, area) - model.signal(theta - h, area)) / (2.0 * h);
            let fd_a = (model.signal(theta, area + h) - model.signal(theta, area - h)) / (2.0 * h);
            assert_relative_eq!(dt, fd_t, epsilon = 1e-8);
            assert_relative_eq!(da, fd_a, epsilon = 1e-8);
        }
    }

    #[test]
    fn monte_carlo_without_noise_matches_pure() {
        let f = field(1.0);
        let ion = IonState {
            spin: Spin::Up,
            position: 0.4,
            motion: MotionalState::thermal(0.0).unwrap(),
        };
        let cfg = EchoConfig {
            exposure_time: 2.0,
            repetitions: 200,
            phase_jitter_rms: 0.0,
        };
        let mc = monte_carlo_echo(&ion, &f, &cfg, 0.0, 1000, 3).unwrap();
        assert_relative_eq!(mc, echo_signal_pure(&f, 0.4, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let f = field(1.0);
        let ion = IonState {
            spin: Spin::Up,
            position: 0.0,
            motion: MotionalState::thermal(0.4).unwrap(),
        };
        let cfg = EchoConfig {
            exposure_time: 3.0,
            repetitions: 200,
            phase_jitter_rms: 0.15,
        };
        let a = monte_carlo_echo(&ion, &f, &cfg, 0.21, 20_000, 11).unwrap();
        let b = monte_carlo_echo(&ion, &f, &cfg, 0.21, 20_000, 11).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn quadrature_matches_monte_carlo_beyond_validity() {
        let f = field(1.0);
        let ion = IonState {
            spin: Spin::Up,
            position: 0.9,
            motion: MotionalState::thermal(0.4).unwrap(),
        };
        let cfg = EchoConfig {
            exposure_time: 4.0,
            repetitions: 200,
            phase_jitter_rms: 0.5,
        };
        let mc = monte_carlo_echo(&ion, &f, &cfg, 0.21, 200_000, 5).unwrap();
        let quad =
            echo_signal_jitter_quadrature(&ion.motion, &f, 0.9, 4.0, 0.21, 0.5).unwrap();
        assert!((mc - quad).abs() < 4e-3, "mc {mc} quad {quad}");
    }

    #[test]
    fn readout_channel() {
        let o = sample_measurement(1.0, 200, 1.0, 9).unwrap();
        assert_eq!(o.successes, 200);
        assert_relative_eq!(readout_probability(1.0, 0.99), 0.99);
        assert_relative_eq!(readout_probability(0.5, 0.7), 0.5);
        assert!(sample_measurement(1.1, 200, 1.0, 9).is_err());
    }

    #[test]
    fn binomial_spread_at_half() {
        let n = 4000;
        let est: Vec<f64> = (0..n)
            .map(|i| sample_measurement(0.5, 200, 1.0, i).unwrap().p_up_estimate)
            .collect();
        let mean = est.iter().sum::<f64>() / n as f64;
        let sd = (est.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((sd - 0.0354).abs() < 0.002, "sd = {sd}");
    }
}
