//! Spin-dependent optical kicks, delayed electrical kicks and sideband readout.
//!
//! Displacements are expressed in the oscillator interaction picture. An
//! electrical kick applied after a delay `Δt` is rotated by `θ = ωΔt`
//! relative to the optical kick.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::echo::{readout_probability, sample_measurement_with, MeasurementOutcome};
use crate::error::{invalid, Result};
use crate::fock::QuadratureSpectrum;
use crate::lattice::{PhysicalParams, Spin, StandingWaveField, HBAR};
use crate::motion::{displacement_element, thermal_tail_mass, thermal_weights};
use crate::rng;

/// Reference phase of the electrical kick. With it, a kick at zero delay
/// points opposite to the `m_J = +½` optical kick at `kz + φ = 0`.
pub const ELECTRICAL_REFERENCE_PHASE: f64 = PI / 2.0;

/// Complex oscillator displacement `α`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CoherentDisplacement(pub Complex64);

impl CoherentDisplacement {
    pub fn new(re: f64, im: f64) -> Self {
        Self(Complex64::new(re, im))
    }

    pub fn from_polar(magnitude: f64, phase: f64) -> Self {
        Self(Complex64::from_polar(magnitude, phase))
    }

    pub fn magnitude(&self) -> f64 {
        self.0.norm()
    }

    pub fn phase(&self) -> f64 {
        self.0.arg()
    }

    pub fn is_finite(&self) -> bool {
        self.0.re.is_finite() && self.0.im.is_finite()
    }
}

impl std::ops::Add for CoherentDisplacement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

/// Optical kick of duration `t` from the running wave:
/// `α = −i m_J η Δ_S⁽⁰⁾ t e^(i(kz+φ))`.
pub fn optical_kick(
    field: &StandingWaveField,
    spin: Spin,
    z: f64,
    duration: f64,
    eta: f64,
) -> CoherentDisplacement {
    let magnitude = spin.mj() * eta * field.stark_amplitude * duration;
    CoherentDisplacement(Complex64::new(0.0, -magnitude) * Complex64::from_polar(1.0, field.lattice_phase(z)))
}

/// Optical exposure giving `|α| = target` for `|m_J| = ½`.
pub fn optical_duration_for(target: f64, field: &StandingWaveField, eta: f64) -> f64 {
    target / (0.5 * eta * field.stark_amplitude)
}

/// Electrical kick `|α| e^(iθ₀ + iωΔt)` applied after `delay`.
pub fn electrical_kick(magnitude: f64, delay: f64, trap_freq: f64) -> CoherentDisplacement {
    CoherentDisplacement::from_polar(magnitude, ELECTRICAL_REFERENCE_PHASE + trap_freq * delay)
}

/// Phasor sum of two displacements.
pub fn combine_kicks(a: CoherentDisplacement, b: CoherentDisplacement) -> CoherentDisplacement {
    a + b
}

/// Static displacement at a node: `α = 2 m_J k Δ_S⁽⁰⁾ sqrt(ħ/(2mω³))`.
pub fn static_sw_displacement(
    field: &StandingWaveField,
    params: &PhysicalParams,
    spin: Spin,
) -> CoherentDisplacement {
    let scale = (HBAR / (2.0 * params.ion_mass * params.trap_freq.powi(3))).sqrt();
    CoherentDisplacement::new(2.0 * spin.mj() * field.wavevector * field.stark_amplitude * scale, 0.0)
}

/// Spin coherence left by a spin-dependent displacement: `e^(−2|α|²)`.
pub fn displacement_coherence(alpha: CoherentDisplacement) -> f64 {
    (-2.0 * alpha.magnitude().powi(2)).exp()
}

/// Optical kick followed by a delayed electrical kick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KickSchedule {
    /// Running-wave exposure (s).
    pub optical_duration: f64,
    /// Wait `Δt` before the electrical kick (s).
    pub delay: f64,
    /// Electrical kick magnitude, matched to the optical one.
    pub electrical_amplitude: f64,
    pub spin: Spin,
}

impl KickSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.optical_duration >= 0.0 && self.delay >= 0.0 && self.electrical_amplitude >= 0.0) {
            return Err(invalid("kick_schedule", "durations and amplitude must be non-negative"));
        }
        Ok(())
    }

    /// Net displacement for an ion at `z`.
    pub fn net_displacement(
        &self,
        field: &StandingWaveField,
        z: f64,
        eta: f64,
        trap_freq: f64,
    ) -> CoherentDisplacement {
        combine_kicks(
            optical_kick(field, self.spin, z, self.optical_duration, eta),
            electrical_kick(self.electrical_amplitude, self.delay, trap_freq),
        )
    }
}

/// Cutoff that holds a thermal state of mean `nbar` displaced by up to `alpha_max`.
pub fn displaced_truncation(nbar: f64, alpha_max: f64) -> usize {
    let mean = nbar + alpha_max * alpha_max;
    let spread = (mean * (1.0 + 2.0 * nbar) + nbar * nbar + 1.0).sqrt();
    (mean + 12.0 * spread + 20.0).ceil() as usize
}

fn working_dimension(truncation: usize, alpha: f64) -> usize {
    truncation + 1 + 40 + (6.0 * alpha * alpha + 12.0 * alpha).ceil() as usize
}

/// Fock populations `0..=truncation` of a thermal state displaced by `alpha`.
/// The thermal input is cut at the same level, so the populations fall short
/// of one by at most the thermal tail mass.
///
/// The displacement operator is built from the spectrum of the truncated
/// generator on an enlarged basis, so cutoff artefacts stay outside the
/// returned levels. Thermal states are phase invariant, so only `|α|` enters.
pub fn displaced_thermal_populations(
    alpha: CoherentDisplacement,
    nbar: f64,
    truncation: usize,
) -> Result<Vec<f64>> {
    let spectrum = QuadratureSpectrum::new(working_dimension(truncation, alpha.magnitude()));
    displaced_populations_with(&spectrum, alpha.magnitude(), nbar, truncation)
}

fn displaced_populations_with(
    spectrum: &QuadratureSpectrum,
    alpha: f64,
    nbar: f64,
    truncation: usize,
) -> Result<Vec<f64>> {
    if !(nbar.is_finite() && nbar >= 0.0) {
        return Err(invalid("nbar", "must be finite and non-negative"));
    }
    let tail = thermal_tail_mass(nbar, truncation);
    if tail > crate::motion::TAIL_MASS_LIMIT {
        return Err(crate::error::Error::TruncationInsufficient {
            truncation,
            tail,
            limit: crate::motion::TAIL_MASS_LIMIT,
        });
    }
    let weights = thermal_weights(nbar, truncation);
    let used = weights.iter().rposition(|w| *w > 1e-18).unwrap_or(0) + 1;
    let probs = spectrum.transition_probabilities(alpha, truncation + 1, used);
    Ok((0..=truncation)
        .map(|m| (0..used).map(|n| weights[n] * probs[(m, n)]).sum())
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sideband {
    Red,
    Blue,
}

/// Excitation probability after a sideband pulse of the given area,
/// `Σₙ P(n) sin²(area/2 · rₙ)`, with Rabi ratios referenced to `n = 1`
/// (red) or `n = 0` (blue).
pub fn sideband_probe(populations: &[f64], eta: f64, pulse_area: f64, sideband: Sideband) -> f64 {
    let reference = displacement_element(0, 1, eta);
    populations
        .iter()
        .enumerate()
        .map(|(n, p)| {
            let ratio = match sideband {
                Sideband::Red if n == 0 => 0.0,
                Sideband::Red => displacement_element(n - 1, 1, eta) / reference,
                Sideband::Blue => displacement_element(n, 1, eta) / reference,
            };
            p * (0.5 * pulse_area * ratio).sin().powi(2)
        })
        .sum()
}

/// Tabulated sideband response versus displacement magnitude, used both to
/// predict probes and to invert measured (red, blue) pairs.
#[derive(Clone, Debug)]
pub struct SidebandModel {
    step: f64,
    red: Vec<f64>,
    blue: Vec<f64>,
    fidelity: f64,
}

impl SidebandModel {
    pub const DEFAULT_STEP: f64 = 0.005;

    pub fn new(nbar: f64, eta: f64, pulse_area: f64, alpha_max: f64, fidelity: f64) -> Result<Self> {
        if !(alpha_max > 0.0 && alpha_max.is_finite()) {
            return Err(invalid("alpha_max", "must be positive"));
        }
        let step = Self::DEFAULT_STEP;
        let points = (alpha_max / step).ceil() as usize + 1;
        let truncation = displaced_truncation(nbar, step * (points - 1) as f64);
        let spectrum = QuadratureSpectrum::new(working_dimension(truncation, alpha_max));
        let mut red = Vec::with_capacity(points);
        let mut blue = Vec::with_capacity(points);
        for i in 0..points {
            let pops = displaced_populations_with(&spectrum, step * i as f64, nbar, truncation)?;
            red.push(sideband_probe(&pops, eta, pulse_area, Sideband::Red));
            blue.push(sideband_probe(&pops, eta, pulse_area, Sideband::Blue));
        }
        Ok(Self {
            step,
            red,
            blue,
            fidelity,
        })
    }

    pub fn alpha_max(&self) -> f64 {
        self.step * (self.red.len() - 1) as f64
    }

    fn interpolate(table: &[f64], step: f64, alpha: f64) -> f64 {
        let x = (alpha / step).clamp(0.0, (table.len() - 1) as f64);
        let i = (x.floor() as usize).min(table.len() - 2);
        let f = x - i as f64;
        table[i] * (1.0 - f) + table[i + 1] * f
    }

    /// Excitation probabilities `(red, blue)` for `|α|`, before readout error.
    pub fn probe(&self, alpha: f64) -> (f64, f64) {
        (
            Self::interpolate(&self.red, self.step, alpha),
            Self::interpolate(&self.blue, self.step, alpha),
        )
    }

    fn chi2(&self, alpha: f64, red: &MeasurementOutcome, blue: &MeasurementOutcome) -> f64 {
        let (pr, pb) = self.probe(alpha);
        let term = |p: f64, o: &MeasurementOutcome| {
            let n = o.repetitions as f64;
            let q = readout_probability(p, self.fidelity).clamp(0.5 / n, 1.0 - 0.5 / n);
            (o.p_up_estimate - q).powi(2) * n / (q * (1.0 - q))
        };
        term(pr, red) + term(pb, blue)
    }

    /// Least-squares `|α|` from a measured (red, blue) pair.
    pub fn infer(&self, red: &MeasurementOutcome, blue: &MeasurementOutcome) -> f64 {
        let n = self.red.len();
        let (best, _) = (0..n)
            .map(|i| (i, self.chi2(self.step * i as f64, red, blue)))
            .fold((0, f64::INFINITY), |acc, (i, c)| if c < acc.1 { (i, c) } else { acc });
        let lo = self.step * best.saturating_sub(1) as f64;
        let hi = self.step * (best + 1).min(n - 1) as f64;
        golden_section(|a| self.chi2(a, red, blue), lo, hi, 1e-7)
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Delay scan of an optical kick followed by a matched electrical kick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KickScanConfig {
    /// Target kick magnitude `|α₀|`.
    pub alpha0: f64,
    /// Initial mean phonon number.
    pub nbar: f64,
    /// Rms lattice-phase jitter during the kicks (rad).
    pub phase_jitter_rms: f64,
    /// Sideband pulse area (rad).
    pub pulse_area: f64,
    pub repetitions: u64,
    /// Number of delay points.
    pub points: usize,
    /// Delay range in trap periods.
    pub periods: f64,
    /// Ion position along the lattice (m).
    pub position: f64,
}

impl Default for KickScanConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            nbar: 0.4,
            phase_jitter_rms: 0.048 * PI,
            pulse_area: PI,
            repetitions: 200,
            points: 64,
            periods: 1.25,
            position: 0.0,
        }
    }
}

impl KickScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(invalid("alpha0", "must be positive"));
        }
        if !(self.nbar >= 0.0 && self.nbar.is_finite()) {
            return Err(invalid("nbar", "must be non-negative"));
        }
        if !(self.phase_jitter_rms >= 0.0 && self.phase_jitter_rms.is_finite()) {
            return Err(invalid("phase_jitter_rms", "must be non-negative"));
        }
        if self.repetitions == 0 || self.points < 4 {
            return Err(invalid("points", "need at least 4 points and 1 repetition"));
        }
        if !(self.periods > 0.0) {
            return Err(invalid("periods", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KickScanRow {
    pub delay_ns: f64,
    pub spin: Spin,
    /// Rms net displacement over the phase jitter.
    pub alpha_true: f64,
    pub p_red: f64,
    pub p_blue: f64,
    pub alpha_inferred: f64,
}

/// Scan the electrical-kick delay for both spin preparations.
///
/// Each shot sees an independent quasi-static lattice-phase offset, so the
/// per-shot success probability is averaged over the Gaussian jitter before
/// binomial sampling.
pub fn run_kick_scan(
    cfg: &KickScanConfig,
    params: &PhysicalParams,
    field: &StandingWaveField,
    seed: u64,
) -> Result<Vec<KickScanRow>> {
    cfg.validate()?;
    params.validate()?;
    let eta = params.lamb_dicke;
    let omega = params.trap_freq;
    let duration = optical_duration_for(cfg.alpha0, field, eta);
    let model = SidebandModel::new(
        cfg.nbar,
        eta,
        cfg.pulse_area,
        2.0 * cfg.alpha0 + 1.0,
        params.readout_fidelity,
    )?;
    let nodes = jitter_nodes(cfg.phase_jitter_rms);
    let period = 2.0 * PI / omega;
    let mut rows = Vec::with_capacity(2 * cfg.points);
    for (s, spin) in [Spin::Up, Spin::Down].into_iter().enumerate() {
        let mut rng = rng::stream(seed, "kick-scan", s as u64);
        for i in 0..cfg.points {
            let delay = cfg.periods * period * i as f64 / (cfg.points - 1) as f64;
            let schedule = KickSchedule {
                optical_duration: duration,
                delay,
                electrical_amplitude: cfg.alpha0,
                spin,
            };
            let (mut p_red, mut p_blue, mut mean_sq) = (0.0, 0.0, 0.0);
            for (eps, w) in &nodes {
                let jittered = field.with_phase(field.phase + eps);
                let a = schedule.net_displacement(&jittered, cfg.position, eta, omega).magnitude();
                let (r, b) = model.probe(a);
                p_red += w * r;
                p_blue += w * b;
                mean_sq += w * a * a;
            }
            let alpha_true = mean_sq.sqrt();
            let red = sample_measurement_with(&mut rng, p_red.clamp(0.0, 1.0), cfg.repetitions, params.readout_fidelity)?;
            let blue = sample_measurement_with(&mut rng, p_blue.clamp(0.0, 1.0), cfg.repetitions, params.readout_fidelity)?;
            rows.push(KickScanRow {
                delay_ns: delay * 1e9,
                spin,
                alpha_true,
                p_red: red.p_up_estimate,
                p_blue: blue.p_up_estimate,
                alpha_inferred: model.infer(&red, &blue),
            });
        }
    }
    Ok(rows)
}

/// Gauss-Hermite-like Simpson nodes over ±6σ, weights summing to one.
fn jitter_nodes(sigma: f64) -> Vec<(f64, f64)> {
    if sigma == 0.0 {
        return vec![(0.0, 1.0)];
    }
    const INTERVALS: usize = 96;
    let half = 6.0 * sigma;
    let h = 2.0 * half / INTERVALS as f64;
    let mut nodes: Vec<(f64, f64)> = (0..=INTERVALS)
        .map(|i| {
            let x = -half + h * i as f64;
            let simpson = if i == 0 || i == INTERVALS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (x, simpson * (-0.5 * (x / sigma).powi(2)).exp())
        })
        .collect();
    let total: f64 = nodes.iter().map(|(_, w)| w).sum();
    for n in &mut nodes {
        n.1 /= total;
    }
    nodes
}

/// Fit of `|α|²(θ) = a + b cos(θ − θ_s)` to one spin's delay scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InterferenceFit {
    pub offset: f64,
    pub amplitude: f64,
    /// Kick phase `θ = ωΔt` of minimum displacement (rad, in [0, 2π)).
    pub min_phase: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl InterferenceFit {
    pub fn ratio(&self) -> f64 {
        self.alpha_min / self.alpha_max
    }
}

/// Linear least squares of `|α|²` against `(1, cos θ, sin θ)`.
pub fn fit_interference(thetas: &[f64], alpha: &[f64]) -> Result<InterferenceFit> {
    if thetas.len() != alpha.len() || thetas.len() < 3 {
        return Err(invalid("scan", "need at least 3 matching points"));
    }
    let rows = thetas.len();
    let design = nalgebra::DMatrix::from_fn(rows, 3, |i, j| match j {
        0 => 1.0,
        1 => thetas[i].cos(),
        _ => thetas[i].sin(),
    });
    let y = nalgebra::DVector::from_iterator(rows, alpha.iter().map(|a| a * a));
    let coef = design
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| invalid("scan", e.to_string()))?;
    let (a, c, s) = (coef[0], coef[1], coef[2]);
    let b = c.hypot(s);
    // minimum where cos(θ − θ_max) = −1
    let min_phase = (s.atan2(c) + PI).rem_euclid(2.0 * PI);
    Ok(InterferenceFit {
        offset: a,
        amplitude: b,
        min_phase,
        alpha_min: (a - b).max(0.0).sqrt(),
        alpha_max: (a + b).max(0.0).sqrt(),
    })
}

/// Interference summary for both spins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KickScanSummary {
    pub up: InterferenceFit,
    pub down: InterferenceFit,
    /// Phase separation of the two minima, folded into [0, 2π).
    pub phase_difference: f64,
}

pub fn summarize_kick_scan(rows: &[KickScanRow], trap_freq: f64, inferred: bool) -> Result<KickScanSummary> {
    let fit = |spin: Spin| {
        let (t, a): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.spin == spin)
            .map(|r| {
                (
                    trap_freq * r.delay_ns * 1e-9,
                    if inferred { r.alpha_inferred } else { r.alpha_true },
                )
            })
            .unzip();
        fit_interference(&t, &a)
    };
    let up = fit(Spin::Up)?;
    let down = fit(Spin::Down)?;
    Ok(KickScanSummary {
        up,
        down,
        phase_difference: (down.min_phase - up.min_phase).rem_euclid(2.0 * PI),
    })
}

/// Draw one jittered net displacement, for direct Monte Carlo checks.
pub fn sample_jittered_displacement<R: rand::Rng + ?Sized>(
    rng: &mut R,
    schedule: &KickSchedule,
    field: &StandingWaveField,
    z: f64,
    params: &PhysicalParams,
    dphi: f64,
) -> Result<CoherentDisplacement> {
    let eps = if dphi > 0.0 {
        Normal::new(0.0, dphi)
            .map_err(|e| invalid("phase_jitter_rms", e.to_string()))?
            .sample(rng)
    } else {
        0.0
    };
    Ok(schedule.net_displacement(&field.with_phase(field.phase + eps), z, params.lamb_dicke, params.trap_freq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn field() -> StandingWaveField {
        StandingWaveField::new(2.0 * PI * 185e3, 2.0 * PI / 260e-9, 0.0).unwrap()
    }

    #[test]
    fn zero_duration_gives_no_kick() {
        let k = optical_kick(&field(), Spin::Up, 0.0, 0.0, 0.21);
        assert_eq!(k.magnitude(), 0.0);
    }

    #[test]
    fn spin_flip_negates_kick() {
        let f = field().with_phase(0.7);
        let up = optical_kick(&f, Spin::Up, 13e-9, 5e-6, 0.21);
        let down = optical_kick(&f, Spin::Down, 13e-9, 5e-6, 0.21);
        assert_relative_eq!(up.0.re, -down.0.re, epsilon = 1e-15);
        assert_relative_eq!(up.0.im, -down.0.im, epsilon = 1e-15);
    }

    #[test]
    fn duration_inversion_gives_unit_kick() {
        let f = field();
        let t = optical_duration_for(1.0, &f, 0.21);
        assert_relative_eq!(t, 1.0 / (0.5 * 0.21 * f.stark_amplitude), max_relative = 1e-15);
        assert_relative_eq!(optical_kick(&f, Spin::Up, 0.0, t, 0.21).magnitude(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn electrical_delay_rotates() {
        let w = 2.0 * PI * 1.41e6;
        let a = electrical_kick(1.0, 0.0, w);
        let half = electrical_kick(1.0, PI / w, w);
        let full = electrical_kick(1.0, 2.0 * PI / w, w);
        assert_relative_eq!(half.0.re, -a.0.re, epsilon = 1e-12);
        assert_relative_eq!(half.0.im, -a.0.im, epsilon = 1e-12);
        assert_relative_eq!(full.0.re, a.0.re, epsilon = 1e-12);
        assert_relative_eq!(full.0.im, a.0.im, epsilon = 1e-12);
        // 177 ns at 1.41 MHz is a quarter period
        assert_relative_eq!(w * 177e-9, PI / 2.0, epsilon = 0.005);
    }

    #[test]
    fn zero_delay_cancels_up_kick_at_origin() {
        let f = field();
        let t = optical_duration_for(1.0, &f, 0.21);
        let sum = combine_kicks(optical_kick(&f, Spin::Up, 0.0, t, 0.21), electrical_kick(1.0, 0.0, 1.0));
        assert!(sum.magnitude() < 1e-14);
    }

    #[test]
    fn equal_phasors_follow_law_of_cosines() {
        for &d in &[0.0, 0.4, 1.3, 2.9, PI] {
            let a = CoherentDisplacement::from_polar(0.8, 0.2);
            let b = CoherentDisplacement::from_polar(0.8, 0.2 + d);
            let s = combine_kicks(a, b).magnitude().powi(2);
            assert_relative_eq!(s, 2.0 * 0.64 * (1.0 + d.cos()), epsilon = 1e-14);
        }
    }

    #[test]
    fn static_displacement_operating_point() {
        let p = PhysicalParams::default();
        let f = StandingWaveField::from_params(&p, 2.0 * PI * 185e3, 0.0).unwrap();
        let a = static_sw_displacement(&f, &p, Spin::Up);
        assert!((a.magnitude() - 0.03).abs() < 1e-3, "|α| = {}", a.magnitude());
        let loss = 1.0 - displacement_coherence(a);
        assert!((loss - 0.0018).abs() < 1e-4, "loss = {loss}");
        let strong = static_sw_displacement(&f.with_stark_amplitude(30.0 * f.stark_amplitude), &p, Spin::Up);
        assert!((strong.magnitude() - 0.9).abs() < 0.03);
        assert!(1.0 - displacement_coherence(strong) > 0.75);
        assert_eq!(static_sw_displacement(&f.with_stark_amplitude(0.0), &p, Spin::Up).magnitude(), 0.0);
        assert_relative_eq!(
            static_sw_displacement(&f, &p, Spin::Down).0.re,
            -a.0.re,
            epsilon = 1e-18
        );
    }

    #[test]
    fn undisplaced_populations_are_thermal() {
        let p = displaced_thermal_populations(CoherentDisplacement::default(), 0.4, 30).unwrap();
        let w = thermal_weights(0.4, 30);
        for (a, b) in p.iter().zip(&w) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn displaced_vacuum_is_poissonian() {
        let p = displaced_thermal_populations(CoherentDisplacement::new(0.0, 1.0), 0.0, 30).unwrap();
        assert_relative_eq!(p[0], (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(p[2], (-1.0f64).exp() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sideband_probe_calibration() {
        let mut ground = vec![0.0; 10];
        ground[0] = 1.0;
        assert_eq!(sideband_probe(&ground, 0.21, PI, Sideband::Red), 0.0);
        assert_relative_eq!(sideband_probe(&ground, 0.21, PI, Sideband::Blue), 1.0, epsilon = 1e-15);
        let mut first = vec![0.0; 10];
        first[1] = 1.0;
        assert_relative_eq!(sideband_probe(&first, 0.21, PI, Sideband::Red), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn interference_fit_recovers_phase() {
        let thetas: Vec<f64> = (0..40).map(|i| i as f64 * 0.2).collect();
        let alpha: Vec<f64> = thetas
            .iter()
            .map(|t| (2.0 * (1.0 - (t - 0.9f64).cos())).sqrt())
            .collect();
        let fit = fit_interference(&thetas, &alpha).unwrap();
        assert_relative_eq!(fit.min_phase, 0.9, epsilon = 1e-10);
        assert!(fit.alpha_min < 1e-6);
        assert_relative_eq!(fit.alpha_max, 2.0, epsilon = 1e-10);
    }
}
