//! Spin-echo voltage scans over the shift-voltage range.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PositionCurve;
use crate::echo::{readout_probability, sample_measurement_with, ThermalEchoModel};
use crate::error::{invalid, Result};
use crate::lattice::StandingWaveField;
use crate::motion::MotionalState;
use crate::rng;

const PROFILE_SAMPLES: usize = 4096;

/// Echo signal seen by the readout, as a function of the local lattice phase.
#[derive(Clone, Debug)]
pub struct ScanReadout {
    echo: ThermalEchoModel,
    /// Pulse area `Δ_S⁽⁰⁾ t_π`.
    pub area: f64,
    pub fidelity: f64,
}

impl ScanReadout {
    pub fn new(motion: &MotionalState, eta: f64, dphi: f64, area: f64, fidelity: f64) -> Result<Self> {
        if !(area > 0.0 && area.is_finite()) {
            return Err(invalid("exposure_time", "pulse area must be positive"));
        }
        if !(fidelity > 0.0 && fidelity <= 1.0) {
            return Err(invalid("readout_fidelity", "must lie in (0, 1]"));
        }
        Ok(Self {
            echo: ThermalEchoModel::new(motion, eta, dphi)?,
            area,
            fidelity,
        })
    }

    /// Observed up-state probability at lattice phase `θ`.
    pub fn probability(&self, theta: f64) -> f64 {
        readout_probability(self.echo.signal(theta, self.area), self.fidelity)
    }

    /// Probability and its derivatives in `θ` and in the pulse area.
    pub fn probability_with_gradient(&self, theta: f64, area: f64) -> (f64, f64, f64) {
        let (s, ds_t, ds_a) = self.echo.signal_with_gradient(theta, area);
        let contrast = 2.0 * self.fidelity - 1.0;
        (readout_probability(s, self.fidelity), contrast * ds_t, contrast * ds_a)
    }

    /// Tabulated probability over one `π` period, for coarse searches.
    pub(crate) fn profile(&self) -> PhaseProfile {
        let step = std::f64::consts::PI / PROFILE_SAMPLES as f64;
        PhaseProfile {
            values: (0..=PROFILE_SAMPLES).map(|i| self.probability(i as f64 * step)).collect(),
            step,
        }
    }
}

pub(crate) struct PhaseProfile {
    values: Vec<f64>,
    step: f64,
}

impl PhaseProfile {
    pub(crate) fn at(&self, theta: f64) -> f64 {
        let x = theta.rem_euclid(std::f64::consts::PI) / self.step;
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScanKind {
    /// Fine steps resolving every lattice period.
    Resolved { step: f64 },
    /// Coarse steps over the whole range.
    Aliased { step: f64 },
}

impl ScanKind {
    pub fn step(&self) -> f64 {
        match *self {
            ScanKind::Resolved { step } | ScanKind::Aliased { step } => step,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ScanKind::Resolved { .. } => "resolved",
            ScanKind::Aliased { .. } => "aliased",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub voltages: Vec<f64>,
    /// Fraction of up outcomes at each voltage.
    pub signals: Vec<f64>,
    pub repetitions: u64,
    pub kind: ScanKind,
}

impl ScanRecord {
    pub fn validate(&self) -> Result<()> {
        if self.voltages.len() != self.signals.len() {
            return Err(invalid("scan", "voltages and signals differ in length"));
        }
        if self.voltages.is_empty() {
            return Err(invalid("scan", "must contain at least one point"));
        }
        if !(self.kind.step() > 0.0) {
            return Err(invalid("step", "must be positive"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be at least 1"));
        }
        if self.signals.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(invalid("signal", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.voltages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltages.is_empty()
    }
}

/// Voltages and repetitions of one scan, before measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanSpec {
    pub voltages: Vec<f64>,
    pub repetitions: u64,
    pub kind: ScanKind,
}

/// Resolved windows plus one aliased sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanPlan {
    pub windows: usize,
    /// Explicit window centres (V); evenly spread over ±80 % of the range when absent.
    pub window_centers: Option<Vec<f64>>,
    pub window_width: f64,
    pub resolved_step: f64,
    pub aliased_step: f64,
    /// Half range of the shift voltage (V); derived from the span when absent.
    pub voltage_range: Option<f64>,
    /// Position span the range should cover when it is derived (m).
    pub span: f64,
    pub repetitions: u64,
}

impl Default for ScanPlan {
    fn default() -> Self {
        Self {
            windows: 5,
            window_centers: None,
            window_width: 0.1,
            resolved_step: 1.2e-3,
            aliased_step: 18e-3,
            voltage_range: None,
            span: 157e-6,
            repetitions: 200,
        }
    }
}

impl ScanPlan {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("window_width", self.window_width),
            ("resolved_step", self.resolved_step),
            ("aliased_step", self.aliased_step),
            ("span", self.span),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be at least 1"));
        }
        if let Some(r) = self.voltage_range {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("voltage_range", "must be positive"));
            }
        }
        if self.windows == 0 && self.window_centers.as_ref().is_none_or(|c| c.is_empty()) {
            return Err(invalid("windows", "at least one resolved window is required"));
        }
        Ok(())
    }

    pub fn centers(&self, range: f64) -> Vec<f64> {
        if let Some(c) = &self.window_centers {
            return c.clone();
        }
        match self.windows {
            0 => vec![],
            1 => vec![0.0],
            n => (0..n)
                .map(|j| -0.8 * range + 1.6 * range * j as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    /// Resolved windows followed by the aliased sweep over `[−range, range]`.
    pub fn specs(&self, range: f64) -> Result<Vec<ScanSpec>> {
        self.validate()?;
        let mut out = Vec::new();
        let per_window = (self.window_width / self.resolved_step + 1e-9).floor() as usize + 1;
        for c in self.centers(range) {
            let start = c - 0.5 * (per_window - 1) as f64 * self.resolved_step;
            out.push(ScanSpec {
                voltages: (0..per_window).map(|i| start + i as f64 * self.resolved_step).collect(),
                repetitions: self.repetitions,
                kind: ScanKind::Resolved {
                    step: self.resolved_step,
                },
            });
        }
        let n = (2.0 * range / self.aliased_step + 1e-9).floor() as usize + 1;
        out.push(ScanSpec {
            voltages: (0..n).map(|i| -range + i as f64 * self.aliased_step).collect(),
            repetitions: self.repetitions,
            kind: ScanKind::Aliased {
                step: self.aliased_step,
            },
        });
        Ok(out)
    }
}

/// Measure the echo signal at each voltage of `spec`. Each point draws from
/// its own sub-stream, keyed by `scan_index` and point index.
pub fn scan_signal(
    curve: &(dyn PositionCurve + Sync),
    field: &StandingWaveField,
    readout: &ScanReadout,
    spec: &ScanSpec,
    seed: u64,
    scan_index: u64,
) -> Result<ScanRecord> {
    if spec.repetitions == 0 {
        return Err(invalid("repetitions", "must be at least 1"));
    }
    let signals = spec
        .voltages
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let z = curve.position(v)?;
            let theta = field.lattice_phase(z);
            let s = readout.echo.signal(theta, readout.area);
            let mut r = rng::stream(seed, "position-scan", (scan_index << 32) | i as u64);
            Ok(sample_measurement_with(&mut r, s, spec.repetitions, readout.fidelity)?.p_up_estimate)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScanRecord {
        voltages: spec.voltages.clone(),
        signals,
        repetitions: spec.repetitions,
        kind: spec.kind,
    })
}

/// Generate every scan of `plan` over `[−range, range]`.
pub fn run_scan_plan(
    curve: &(dyn PositionCurve + Sync),
    field: &StandingWaveField,
    readout: &ScanReadout,
    plan: &ScanPlan,
    range: f64,
    seed: u64,
) -> Result<Vec<ScanRecord>> {
    plan.specs(range)?
        .iter()
        .enumerate()
        .map(|(k, s)| scan_signal(curve, field, readout, s, seed, k as u64))
        .collect()
}
