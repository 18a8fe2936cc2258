//! Experiment configuration files.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kicks::KickScanConfig;
use crate::lattice::{PhysicalParams, StandingWaveField};
use crate::lock::{DriftKind, LockConfig};
use crate::position::{FitOptions, ScanPlan, SegmentPotentialModel};

pub const SCHEMA_VERSION: u32 = 1;

/// Default Stark-shift amplitude `Δ_S⁽⁰⁾` (rad/s).
pub const DEFAULT_STARK_AMPLITUDE: f64 = 2.0 * PI * 185e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default)]
    pub physical: PhysicalParams,
    #[serde(default)]
    pub field: FieldSpec,
    #[serde(default)]
    pub lock: LockConfig,
    #[serde(default = "default_drift")]
    pub drift: DriftKind,
    #[serde(default)]
    pub lock_run: LockRunConfig,
    #[serde(default)]
    pub time_scan: TimeScanConfig,
    #[serde(default)]
    pub kick: KickScanConfig,
    #[serde(default)]
    pub position: PositionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_drift() -> DriftKind {
    DriftKind::LinearRamp { rate: 0.03 * PI }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSpec {
    /// `Δ_S⁽⁰⁾` (rad/s).
    pub stark_amplitude: f64,
    /// Interferometer phase `φ` (rad).
    pub phase: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            stark_amplitude: DEFAULT_STARK_AMPLITUDE,
            phase: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LockRunConfig {
    pub duration_s: f64,
}

impl Default for LockRunConfig {
    fn default() -> Self {
        Self { duration_s: 600.0 }
    }
}

/// Signal against exposure time at a few lattice positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeScanConfig {
    pub nbar: f64,
    pub phase_jitter_rms: f64,
    /// Positions along the lattice (m); node, midpoint and antinode of the
    /// Stark shift when absent.
    pub positions: Option<Vec<f64>>,
    /// Largest pulse area `Δ_S⁽⁰⁾ t` scanned (rad).
    pub max_area: f64,
    pub points: usize,
    pub repetitions: u64,
}

impl Default for TimeScanConfig {
    fn default() -> Self {
        Self {
            nbar: 0.4,
            phase_jitter_rms: 0.048 * PI,
            positions: None,
            max_area: 6.0 * PI,
            points: 61,
            repetitions: 200,
        }
    }
}

/// Geometry of the synthetic segmented trap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapGeometry {
    pub pitch: f64,
    pub width: f64,
    pub decay: f64,
    /// `dz/dV_s` at zero shift voltage (m/V).
    pub feedthrough: f64,
}

impl Default for TrapGeometry {
    fn default() -> Self {
        Self {
            pitch: 250e-6,
            width: 250e-6,
            decay: 300e-6,
            feedthrough: 8e-6,
        }
    }
}

impl TrapGeometry {
    pub fn model(&self) -> Result<SegmentPotentialModel> {
        SegmentPotentialModel::calibrated(self.pitch, self.width, self.decay, self.feedthrough)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositionConfig {
    pub plan: ScanPlan,
    pub trap: TrapGeometry,
    pub nbar: f64,
    pub phase_jitter_rms: f64,
    pub fit: FitOptions,
    /// Scan CSV read by `fit-map`; `<out>/position_scan.csv` when absent.
    pub input: Option<PathBuf>,
    /// Generating map JSON; looked up next to the input when absent.
    pub truth: Option<PathBuf>,
}

impl Default for PositionConfig {
    fn default() -> Self {
        Self {
            plan: ScanPlan::default(),
            trap: TrapGeometry::default(),
            nbar: 0.4,
            phase_jitter_rms: 0.048 * PI,
            fit: FitOptions::default(),
            input: None,
            truth: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            physical: PhysicalParams::default(),
            field: FieldSpec::default(),
            lock: LockConfig::default(),
            drift: default_drift(),
            lock_run: LockRunConfig::default(),
            time_scan: TimeScanConfig::default(),
            kick: KickScanConfig::default(),
            position: PositionConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn field(&self) -> Result<StandingWaveField> {
        StandingWaveField::from_params(&self.physical, self.field.stark_amplitude, self.field.phase)
    }

    /// Checks every section; failures are reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let as_config = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.physical.validate().map_err(as_config)?;
        let field = self.field().map_err(as_config)?;
        if field.stark_amplitude <= 0.0 {
            return Err(Error::Config("field.stark_amplitude must be positive".into()));
        }
        self.lock.validate().map_err(as_config)?;
        crate::lock::DriftProcess::new(self.drift.clone(), 0)
            .validate()
            .map_err(as_config)?;
        if !(self.lock_run.duration_s > self.lock.update_period && self.lock_run.duration_s.is_finite()) {
            return Err(Error::Config("lock_run.duration_s must exceed lock.update_period".into()));
        }
        self.time_scan.validate().map_err(as_config)?;
        self.kick.validate().map_err(as_config)?;
        self.position.plan.validate().map_err(as_config)?;
        self.position.trap.model().map_err(as_config)?;
        if !(self.position.nbar >= 0.0 && self.position.phase_jitter_rms >= 0.0) {
            return Err(Error::Config("position.nbar and phase_jitter_rms must be non-negative".into()));
        }
        Ok(())
    }
}

impl TimeScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nbar >= 0.0 && self.nbar.is_finite()) {
            return Err(invalid("nbar", "must be non-negative"));
        }
        if !(self.phase_jitter_rms >= 0.0 && self.phase_jitter_rms.is_finite()) {
            return Err(invalid("phase_jitter_rms", "must be non-negative"));
        }
        if !(self.max_area > 0.0 && self.max_area.is_finite()) {
            return Err(invalid("max_area", "must be positive"));
        }
        if self.points < 2 || self.repetitions == 0 {
            return Err(invalid("points", "need at least 2 points and 1 repetition"));
        }
        if let Some(p) = &self.positions {
            if p.is_empty() || p.iter().any(|z| !z.is_finite()) {
                return Err(invalid("positions", "must be a non-empty list of finite values"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"schema_version": 1, "seed": 7}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::with_seed(7));
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"schema_version": 1}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"schema_version": 1, "seed": 1, "lock": {"gian": 1.0}}"#;
        assert!(matches!(ExperimentConfig::from_json(bad), Err(Error::Config(_))));
        let bad_top = r#"{"schema_version": 1, "seed": 1, "extra": 0}"#;
        assert!(ExperimentConfig::from_json(bad_top).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad = r#"{"schema_version": 1, "seed": 1, "lock": {"setpoint": 1.5}}"#;
        assert!(matches!(ExperimentConfig::from_json(bad), Err(Error::Config(_))));
        let wrong_version = r#"{"schema_version": 9, "seed": 1}"#;
        assert!(matches!(ExperimentConfig::from_json(wrong_version), Err(Error::Config(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ExperimentConfig::with_seed(3);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}
