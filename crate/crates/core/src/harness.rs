//! Scenario runners behind the `ionlattice` command line.
//!
//! Each runner computes all of its artifacts in memory; nothing touches the
//! output directory until the run has succeeded. Files are then written
//! through a temporary file in the same directory and renamed into place.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::echo::{readout_probability, sample_measurement_with, ThermalEchoModel};
use crate::error::{invalid, Error, Result};
use crate::kicks::{run_kick_scan, summarize_kick_scan};
use crate::lock::{residual_stats, run_lock, shot_noise_limit, DriftProcess, LockTrace};
use crate::motion::MotionalState;
use crate::position::{
    compare_to_electrostatics, fit_polynomial_map, max_position_error, run_scan_plan, PolynomialMap, ScanKind,
    ScanReadout, ScanRecord,
};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Lock { duration_s: Option<f64> },
    TimeScan,
    KickScan,
    PositionScan,
    FitMap,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Lock { .. } => "lock",
            Command::TimeScan => "time_scan",
            Command::KickScan => "kick_scan",
            Command::PositionScan => "position_scan",
            Command::FitMap => "fit_map",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    /// One-line human summary.
    pub line: String,
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::NonConvergence { .. } => 4,
        _ => 3,
    }
}

/// Run one subcommand. `out_dir` is only used to locate default inputs.
pub fn run_scenario(cfg: &ExperimentConfig, command: &Command, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    match command {
        Command::Lock { duration_s } => run_lock_scenario(cfg, *duration_s),
        Command::TimeScan => run_time_scan(cfg),
        Command::KickScan => run_kick_scenario(cfg),
        Command::PositionScan => run_position_scan(cfg),
        Command::FitMap => run_fit_map(cfg, out_dir),
    }
}

/// Write artifacts atomically into `dir`.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&a.bytes)?;
        tmp.as_file().sync_all()?;
        let target = dir.join(&a.name);
        tmp.persist(&target).map_err(|e| Error::Io(e.error))?;
        written.push(target);
    }
    Ok(written)
}

fn csv_bytes<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn summary_artifact<T: Serialize>(command: &str, summary: &T) -> Result<Artifact> {
    Ok(Artifact {
        name: format!("{command}_summary.json"),
        bytes: json_bytes(summary)?,
    })
}

#[derive(Serialize)]
struct LockSummary {
    seed: u64,
    duration_s: f64,
    slots: usize,
    residual_rms_rad: f64,
    residual_rms_over_pi: f64,
    max_drift_corrected_rad: f64,
    net_correction_rad: f64,
    lock_lost_count: usize,
    shot_noise_limit_rad: f64,
}

/// Lock trace for the configured drift, seeded from the config seed.
pub fn lock_trace(cfg: &ExperimentConfig, duration_s: Option<f64>) -> Result<LockTrace> {
    let field = cfg.field()?;
    let duration = duration_s.unwrap_or(cfg.lock_run.duration_s);
    if !(duration > cfg.lock.update_period && duration.is_finite()) {
        return Err(Error::Config("duration must exceed the update period".into()));
    }
    let drift = DriftProcess::new(cfg.drift.clone(), rng::derive_seed(cfg.seed, "drift", 0));
    run_lock(
        &drift,
        &cfg.lock,
        &field,
        cfg.physical.readout_fidelity,
        duration,
        rng::derive_seed(cfg.seed, "lock", 0),
    )
}

fn run_lock_scenario(cfg: &ExperimentConfig, duration_s: Option<f64>) -> Result<RunOutput> {
    let trace = lock_trace(cfg, duration_s)?;
    let stats = residual_stats(&trace)?;
    let limit = shot_noise_limit(cfg.lock.setpoint, cfg.lock.repetitions_per_update)?;
    let rows = (0..trace.len()).map(|i| {
        (
            trace.times[i],
            trace.true_phase[i],
            trace.measured_signal[i],
            trace.applied_voltage[i],
            trace.residual_phase[i],
        )
    });
    let csv = csv_bytes(
        &["time_s", "true_phase_rad", "measured_signal", "applied_voltage_V", "residual_phase_rad"],
        rows,
    )?;
    let summary = LockSummary {
        seed: cfg.seed,
        duration_s: duration_s.unwrap_or(cfg.lock_run.duration_s),
        slots: trace.len(),
        residual_rms_rad: stats.rms,
        residual_rms_over_pi: stats.rms / PI,
        max_drift_corrected_rad: stats.max_drift_corrected,
        net_correction_rad: stats.net_correction,
        lock_lost_count: stats.lock_lost_count,
        shot_noise_limit_rad: limit.radians,
    };
    let line = format!(
        "lock: {} slots, residual rms {:.4} rad ({:.4} pi), max correction {:.3} rad, lock lost {} times",
        summary.slots, stats.rms, summary.residual_rms_over_pi, stats.max_drift_corrected, stats.lock_lost_count
    );
    Ok(RunOutput {
        artifacts: vec![
            Artifact {
                name: "lock_trace.csv".into(),
                bytes: csv,
            },
            summary_artifact("lock", &summary)?,
        ],
        line,
    })
}

#[derive(Serialize)]
struct TimeScanSummary {
    seed: u64,
    nbar: f64,
    nbar_fit: f64,
    phase_jitter_rms_over_pi: f64,
    positions_m: Vec<f64>,
    lattice_phases_rad: Vec<f64>,
    files: Vec<String>,
}

fn run_time_scan(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let field = cfg.field()?;
    let ts = &cfg.time_scan;
    let eta = cfg.physical.lamb_dicke;
    let fidelity = cfg.physical.readout_fidelity;
    let period = field.period();
    let positions = ts
        .positions
        .clone()
        .unwrap_or_else(|| vec![0.0, period / 8.0, period / 4.0]);
    let motion = MotionalState::thermal(ts.nbar)?;
    let model = ThermalEchoModel::new(&motion, eta, ts.phase_jitter_rms)?;
    let t_max = ts.max_area / field.stark_amplitude;
    let times: Vec<f64> = (0..ts.points)
        .map(|i| t_max * i as f64 / (ts.points - 1) as f64)
        .collect();

    let mut artifacts = Vec::new();
    let mut files = Vec::new();
    let mut observed: Vec<(f64, f64, f64)> = Vec::new();
    for (j, &z) in positions.iter().enumerate() {
        let theta = field.lattice_phase(z);
        let mut r = rng::stream(cfg.seed, "time-scan", j as u64);
        let mut rows = Vec::with_capacity(times.len());
        for &t in &times {
            let s = model.signal(theta, field.stark_amplitude * t);
            let m = sample_measurement_with(&mut r, s, ts.repetitions, fidelity)?;
            observed.push((theta, field.stark_amplitude * t, m.p_up_estimate));
            rows.push((t * 1e6, readout_probability(s, fidelity), m.p_up_estimate));
        }
        let name = format!("time_scan_{j}.csv");
        artifacts.push(Artifact {
            name: name.clone(),
            bytes: csv_bytes(&["time_us", "signal_model", "signal"], rows)?,
        });
        files.push(name);
    }
    let nbar_fit = infer_nbar(&observed, eta, ts.phase_jitter_rms, fidelity, ts.repetitions)?;
    let summary = TimeScanSummary {
        seed: cfg.seed,
        nbar: ts.nbar,
        nbar_fit,
        phase_jitter_rms_over_pi: ts.phase_jitter_rms / PI,
        lattice_phases_rad: positions.iter().map(|z| field.lattice_phase(*z)).collect(),
        positions_m: positions,
        files,
    };
    artifacts.push(summary_artifact("time_scan", &summary)?);
    Ok(RunOutput {
        line: format!(
            "time-scan: {} positions x {} times, nbar {} -> fitted {:.3}",
            summary.positions_m.len(),
            ts.points,
            ts.nbar,
            nbar_fit
        ),
        artifacts,
    })
}

/// Weighted least-squares mean phonon number for `(θ, area, p)` samples.
fn infer_nbar(observed: &[(f64, f64, f64)], eta: f64, dphi: f64, fidelity: f64, reps: u64) -> Result<f64> {
    let n = reps as f64;
    let chi2 = |nbar: f64| -> f64 {
        let Ok(motion) = MotionalState::thermal(nbar) else {
            return f64::INFINITY;
        };
        let Ok(model) = ThermalEchoModel::new(&motion, eta, dphi) else {
            return f64::INFINITY;
        };
        observed
            .iter()
            .map(|&(theta, area, y)| {
                let p = readout_probability(model.signal(theta, area), fidelity);
                let var = (p * (1.0 - p)).max(0.25 / n) / n;
                (p - y).powi(2) / var
            })
            .sum()
    };
    // log grid, then golden-section refinement around the best node
    let grid: Vec<f64> = (0..=48).map(|i| 0.01 * 10f64.powf(i as f64 / 12.0) - 0.01).collect();
    let values: Vec<f64> = grid.iter().map(|&x| chi2(x)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| invalid("time_scan", "no samples"))?;
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (mut a, mut b) = (lo, hi);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (chi2(c), chi2(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = chi2(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = chi2(d);
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Serialize)]
struct KickSummary {
    seed: u64,
    alpha0: f64,
    phase_difference_over_pi: f64,
    phase_difference_inferred_over_pi: f64,
    ratio_up: f64,
    ratio_down: f64,
    ratio_up_inferred: f64,
    ratio_down_inferred: f64,
}

fn run_kick_scenario(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let field = cfg.field()?;
    let rows = run_kick_scan(&cfg.kick, &cfg.physical, &field, rng::derive_seed(cfg.seed, "kick", 0))?;
    let rms = summarize_kick_scan(&rows, cfg.physical.trap_freq, false)?;
    let inferred = summarize_kick_scan(&rows, cfg.physical.trap_freq, true)?;
    let csv = csv_bytes(
        &["delay_ns", "spin", "alpha_true", "p_red", "p_blue", "alpha_inferred"],
        rows.iter()
            .map(|r| (r.delay_ns, r.spin.label(), r.alpha_true, r.p_red, r.p_blue, r.alpha_inferred)),
    )?;
    let summary = KickSummary {
        seed: cfg.seed,
        alpha0: cfg.kick.alpha0,
        phase_difference_over_pi: rms.phase_difference / PI,
        phase_difference_inferred_over_pi: inferred.phase_difference / PI,
        ratio_up: rms.up.ratio(),
        ratio_down: rms.down.ratio(),
        ratio_up_inferred: inferred.up.ratio(),
        ratio_down_inferred: inferred.down.ratio(),
    };
    Ok(RunOutput {
        line: format!(
            "kick-scan: spins out of phase by {:.3} pi, alpha_min/alpha_max up {:.3} down {:.3}",
            summary.phase_difference_over_pi, summary.ratio_up, summary.ratio_down
        ),
        artifacts: vec![
            Artifact {
                name: "kick_scan.csv".into(),
                bytes: csv,
            },
            summary_artifact("kick_scan", &summary)?,
        ],
    })
}

/// Generating map written next to a synthetic scan.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct PositionTruth {
    pub map: PolynomialMap,
    pub voltage_range: f64,
    pub lattice_phase: f64,
    pub trap_voltage: f64,
}

fn position_readout(cfg: &ExperimentConfig) -> Result<ScanReadout> {
    ScanReadout::new(
        &MotionalState::thermal(cfg.position.nbar)?,
        cfg.physical.lamb_dicke,
        cfg.position.phase_jitter_rms,
        PI,
        cfg.physical.readout_fidelity,
    )
}

fn voltage_range(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.position.plan.voltage_range {
        Some(r) => Ok(r),
        None => cfg.position.trap.model()?.voltage_for_span(cfg.position.plan.span),
    }
}

#[derive(Serialize)]
struct PositionScanSummary {
    seed: u64,
    voltage_range_v: f64,
    scans: usize,
    points: usize,
    span_m: f64,
    truth_coefficients: Vec<f64>,
}

fn run_position_scan(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let field = cfg.field()?;
    let model = cfg.position.trap.model()?;
    let range = voltage_range(cfg)?;
    let truth = PolynomialMap::from_curve(&model, range, 401)?;
    let readout = position_readout(cfg)?;
    let scans = run_scan_plan(
        &truth,
        &field,
        &readout,
        &cfg.position.plan,
        range,
        rng::derive_seed(cfg.seed, "position", 0),
    )?;
    let rows: Vec<(f64, f64, u64, &str)> = scans
        .iter()
        .flat_map(|s| {
            s.voltages
                .iter()
                .zip(&s.signals)
                .map(move |(v, y)| (*v, *y, s.repetitions, s.kind.label()))
        })
        .collect();
    let points = rows.len();
    let csv = csv_bytes(&["voltage_V", "signal", "n_reps", "kind"], rows)?;
    let truth_file = PositionTruth {
        map: truth.clone(),
        voltage_range: range,
        lattice_phase: field.phase,
        trap_voltage: model.trap_voltage,
    };
    let summary = PositionScanSummary {
        seed: cfg.seed,
        voltage_range_v: range,
        scans: scans.len(),
        points,
        span_m: truth.evaluate(range) - truth.evaluate(-range),
        truth_coefficients: truth.coefficients.to_vec(),
    };
    Ok(RunOutput {
        line: format!(
            "position-scan: {} scans, {} points over +/-{:.3} V ({:.1} um span)",
            summary.scans,
            points,
            range,
            summary.span_m * 1e6
        ),
        artifacts: vec![
            Artifact {
                name: "position_scan.csv".into(),
                bytes: csv,
            },
            Artifact {
                name: "position_truth.json".into(),
                bytes: json_bytes(&truth_file)?,
            },
            summary_artifact("position_scan", &summary)?,
        ],
    })
}

#[derive(serde::Deserialize)]
struct ScanRow {
    #[serde(rename = "voltage_V")]
    voltage: f64,
    signal: f64,
    n_reps: u64,
    kind: String,
}

/// Rebuild scan records from the flat CSV layout. A new record starts when
/// the kind or repetition count changes or the voltage jumps by more than
/// one and a half nominal steps.
pub fn read_scan_csv(path: &Path) -> Result<Vec<ScanRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows: Vec<ScanRow> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() {
        return Err(invalid("input", "scan file has no rows"));
    }
    for r in &rows {
        if r.kind != "resolved" && r.kind != "aliased" {
            return Err(invalid("kind", format!("unknown scan kind `{}`", r.kind)));
        }
    }
    let nominal = |kind: &str| -> f64 {
        rows.windows(2)
            .filter(|w| w[0].kind == kind && w[1].kind == kind)
            .map(|w| w[1].voltage - w[0].voltage)
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min)
    };
    let steps = [("resolved", nominal("resolved")), ("aliased", nominal("aliased"))];
    let step_of = |kind: &str| steps.iter().find(|s| s.0 == kind).map(|s| s.1).unwrap_or(f64::INFINITY);
    let mut out: Vec<ScanRecord> = Vec::new();
    let mut current: Option<(String, ScanRecord)> = None;
    for r in rows {
        let step = step_of(&r.kind);
        let starts_new = match &current {
            None => true,
            Some((kind, rec)) => {
                let last = *rec.voltages.last().expect("records are never empty");
                *kind != r.kind || rec.repetitions != r.n_reps || r.voltage <= last || r.voltage - last > 1.5 * step
            }
        };
        if starts_new {
            if let Some((_, rec)) = current.take() {
                out.push(rec);
            }
            let kind = if r.kind == "resolved" {
                ScanKind::Resolved {
                    step: if step.is_finite() { step } else { 1.0 },
                }
            } else {
                ScanKind::Aliased {
                    step: if step.is_finite() { step } else { 1.0 },
                }
            };
            current = Some((
                r.kind.clone(),
                ScanRecord {
                    voltages: vec![r.voltage],
                    signals: vec![r.signal],
                    repetitions: r.n_reps,
                    kind,
                },
            ));
        } else if let Some((_, rec)) = current.as_mut() {
            rec.voltages.push(r.voltage);
            rec.signals.push(r.signal);
        }
    }
    if let Some((_, rec)) = current {
        out.push(rec);
    }
    for rec in &out {
        rec.validate()?;
    }
    Ok(out)
}

#[derive(Serialize)]
struct FitMapSummary {
    seed: u64,
    input: String,
    coefficients: Vec<f64>,
    relative_uncertainty: Vec<f64>,
    reduced_chi2: f64,
    ambiguous_branch: bool,
    max_position_error_m: Option<f64>,
    coefficient_relative_error: Option<Vec<f64>>,
    max_slope_deviation: f64,
}

#[derive(Serialize)]
struct FitMapReportFile<'a> {
    fit: &'a crate::position::MapFitReport,
    truth: Option<&'a PositionTruth>,
    max_position_error_m: Option<f64>,
    coefficient_relative_error: Option<Vec<f64>>,
    max_slope_deviation: f64,
    rms_slope_deviation: f64,
}

fn run_fit_map(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    let field = cfg.field()?;
    let input = cfg
        .position
        .input
        .clone()
        .unwrap_or_else(|| out_dir.join("position_scan.csv"));
    let scans = read_scan_csv(&input)?;
    let truth_path = cfg.position.truth.clone().or_else(|| {
        let p = input.parent().unwrap_or(Path::new(".")).join("position_truth.json");
        p.exists().then_some(p)
    });
    let truth: Option<PositionTruth> = match truth_path {
        Some(p) => Some(serde_json::from_slice(&std::fs::read(&p)?)?),
        None => None,
    };
    let readout = position_readout(cfg)?;
    let report = fit_polynomial_map(&scans, &field, &readout, &cfg.position.fit)?;
    let range = scans
        .iter()
        .flat_map(|s| s.voltages.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let (max_err, coeff_err) = match &truth {
        Some(t) => {
            let err = max_position_error(&report.map, &t.map, t.voltage_range.min(range), 4001)?;
            let rel = (1..=5)
                .map(|i| {
                    let c = t.map.coefficients[i];
                    if c == 0.0 {
                        f64::NAN
                    } else {
                        (report.map.coefficients[i] - c).abs() / c.abs()
                    }
                })
                .collect();
            (Some(err), Some(rel))
        }
        None => (None, None),
    };
    let model = cfg.position.trap.model()?;
    let voltages: Vec<f64> = (0..=200).map(|i| -range + 2.0 * range * i as f64 / 200.0).collect();
    let curve = compare_to_electrostatics(&report.map, &model, &voltages, field.period())?;
    let csv = csv_bytes(
        &["voltage_V", "map_slope_per_lambda", "model_slope_per_lambda", "relative_deviation"],
        (0..voltages.len()).map(|i| {
            (
                curve.voltages[i],
                curve.measured[i],
                curve.simulated[i],
                curve.relative_deviation[i],
            )
        }),
    )?;
    let file = FitMapReportFile {
        fit: &report,
        truth: truth.as_ref(),
        max_position_error_m: max_err,
        coefficient_relative_error: coeff_err.clone(),
        max_slope_deviation: curve.max_abs_deviation(),
        rms_slope_deviation: curve.rms_deviation(),
    };
    let summary = FitMapSummary {
        seed: cfg.seed,
        input: input.display().to_string(),
        coefficients: report.map.coefficients.to_vec(),
        relative_uncertainty: report.relative_uncertainty.clone(),
        reduced_chi2: report.reduced_chi2,
        ambiguous_branch: report.ambiguous_branch,
        max_position_error_m: max_err,
        coefficient_relative_error: coeff_err,
        max_slope_deviation: curve.max_abs_deviation(),
    };
    let err_text = max_err.map_or_else(|| "n/a".to_string(), |e| format!("{:.2} nm", e * 1e9));
    Ok(RunOutput {
        line: format!(
            "fit-map: c1 = {:.6e} m/V, reduced chi2 {:.3}, max position error {}, branch ambiguous: {}",
            report.map.coefficients[1], report.reduced_chi2, err_text, report.ambiguous_branch
        ),
        artifacts: vec![
            Artifact {
                name: "fit_map_report.json".into(),
                bytes: json_bytes(&file)?,
            },
            Artifact {
                name: "discrepancy.csv".into(),
                bytes: csv,
            },
            summary_artifact("fit_map", &summary)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(
            exit_code(&Error::NonConvergence {
                iterations: 1,
                reason: String::new()
            }),
            4
        );
        assert_eq!(exit_code(&Error::Domain("x".into())), 3);
    }

    #[test]
    fn csv_round_trip_splits_windows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::with_seed(5);
        cfg.position.plan.windows = 2;
        cfg.position.plan.voltage_range = Some(1.0);
        let out = run_position_scan(&cfg).unwrap();
        write_artifacts(dir.path(), &out.artifacts).unwrap();
        let scans = read_scan_csv(&dir.path().join("position_scan.csv")).unwrap();
        assert_eq!(scans.len(), 3);
        assert_eq!(scans[0].len(), 84);
        assert!(matches!(scans[2].kind, ScanKind::Aliased { .. }));
        assert!((scans[2].kind.step() - 0.018).abs() < 1e-9);
    }
}
