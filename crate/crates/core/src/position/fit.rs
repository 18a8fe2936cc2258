//! Nonlinear fit of a fifth-order position map to resolved and aliased scans.
//!
//! The lattice phase at voltage `V` is `θ(V) = ψ + k·z(V)`, parametrised
//! internally as `ψ + Σ aⱼ uʲ` with `u = V/V_ref` and `aⱼ = k cⱼ V_refʲ`.
//! The signal is even and `π`-periodic in `θ`, so the sign of the map is
//! fixed by taking `c₁ > 0` and `ψ` is reported modulo `π`.
//!
//! Stages:
//! 1. each resolved window is fitted with a local linear phase, giving the
//!    phase and its voltage derivative at the window centre;
//! 2. a start polynomial is solved from those derivatives and phases, adding
//!    windows from the centre outwards and unwrapping each phase against the
//!    prediction of the previous ones;
//! 3. all points are fitted by damped least squares, admitting aliased points
//!    progressively further from the windows, then reweighted with binomial
//!    variances from the model;
//! 4. the fit is restarted on neighbouring alias branches, where every
//!    aliased point moves by one signal period, and the branch `χ²` compared.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::map::{PolynomialMap, MAP_DEGREE};
use super::scan::{ScanKind, ScanReadout, ScanRecord};
use crate::error::{invalid, Error, Result};
use crate::lattice::StandingWaveField;
use crate::numeric::{levenberg_marquardt, spd_inverse, LeastSquares, LmOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Expected `dz/dV` near the window centres (m/V), used to bound the
    /// local frequency search.
    pub slope_guess: f64,
    /// Search range as factors of `slope_guess`.
    pub slope_range: (f64, f64),
    /// Fit the pulse area as a nuisance parameter.
    pub fit_area: bool,
    pub reweight_passes: usize,
    pub max_iterations: usize,
    /// Alias branches tried besides the best one.
    pub branch_offsets: Vec<i32>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            slope_guess: 8e-6,
            slope_range: (0.25, 4.0),
            fit_area: false,
            reweight_passes: 2,
            max_iterations: 300,
            branch_offsets: vec![-1, 1],
        }
    }
}

/// Local phase and frequency of one resolved window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowFit {
    pub center: f64,
    /// Lattice phase at the centre, modulo `π`.
    pub phase: f64,
    /// `dθ/dV` (rad/V).
    pub frequency: f64,
    pub frequency_sigma: f64,
    pub phase_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchFit {
    pub offset: i32,
    pub chi2: f64,
    pub slope_at_zero: f64,
    /// Whether the restart stayed on a different branch.
    pub distinct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapFitReport {
    pub map: PolynomialMap,
    /// `ψ = θ(0)` modulo `π`.
    pub lattice_phase: f64,
    pub area: f64,
    /// Covariance of `c₁..c₅` (m²/V^(i+j)).
    pub covariance: Vec<Vec<f64>>,
    /// `σ(cᵢ)/|cᵢ|` for `i = 1..=5`.
    pub relative_uncertainty: Vec<f64>,
    pub phase_sigma: f64,
    pub chi2: f64,
    pub dof: usize,
    pub reduced_chi2: f64,
    pub iterations: usize,
    pub windows: Vec<WindowFit>,
    pub branches: Vec<BranchFit>,
    pub ambiguous_branch: bool,
    /// Fits restarted with a shifted window unwrapping after an implausible χ².
    pub unwrap_restarts: usize,
    pub weighting: String,
}

impl MapFitReport {
    /// `|cᵢ|/σ(cᵢ)` for `i = 1..=5`.
    pub fn significance(&self) -> Vec<f64> {
        self.relative_uncertainty.iter().map(|r| 1.0 / r).collect()
    }
}

#[derive(Clone, Copy)]
struct Point {
    u: f64,
    y: f64,
    reps: f64,
    aliased: bool,
    voltage: f64,
}

struct PhaseModel<'a> {
    points: Vec<Point>,
    sqrt_w: Vec<f64>,
    readout: &'a ScanReadout,
    fit_area: bool,
    area: f64,
}

impl PhaseModel<'_> {
    fn theta(p: &[f64], u: f64) -> f64 {
        let mut acc = 0.0;
        for j in (1..=MAP_DEGREE).rev() {
            acc = (acc + p[j]) * u;
        }
        p[0] + acc
    }

    fn area_of(&self, p: &[f64]) -> f64 {
        if self.fit_area {
            p[MAP_DEGREE + 1]
        } else {
            self.area
        }
    }

    fn reweight(&mut self, p: &[f64]) {
        let area = self.area_of(p);
        self.sqrt_w = self
            .points
            .iter()
            .map(|pt| {
                let prob = self.readout.probability_with_gradient(Self::theta(p, pt.u), area).0;
                binomial_weight(prob, pt.reps).sqrt()
            })
            .collect();
    }

    fn chi2(&self, p: &[f64]) -> f64 {
        let mut r = DVector::zeros(self.points.len());
        self.evaluate(p, &mut r, None);
        r.norm_squared()
    }
}

fn binomial_weight(p: f64, reps: f64) -> f64 {
    reps / (p * (1.0 - p)).max(0.25 / reps)
}

impl LeastSquares for PhaseModel<'_> {
    fn n_params(&self) -> usize {
        MAP_DEGREE + 1 + usize::from(self.fit_area)
    }

    fn n_residuals(&self) -> usize {
        self.points.len()
    }

    fn evaluate(&self, p: &[f64], r: &mut DVector<f64>, mut jac: Option<&mut DMatrix<f64>>) {
        let area = self.area_of(p);
        for (i, pt) in self.points.iter().enumerate() {
            let (prob, d_theta, d_area) = self.readout.probability_with_gradient(Self::theta(p, pt.u), area);
            let sw = self.sqrt_w[i];
            r[i] = sw * (prob - pt.y);
            if let Some(j) = jac.as_deref_mut() {
                let mut upow = 1.0;
                for k in 0..=MAP_DEGREE {
                    j[(i, k)] = sw * d_theta * upow;
                    upow *= pt.u;
                }
                if self.fit_area {
                    j[(i, MAP_DEGREE + 1)] = sw * d_area;
                }
            }
        }
    }
}

struct LocalModel<'a> {
    x: Vec<f64>,
    y: Vec<f64>,
    sqrt_w: Vec<f64>,
    readout: &'a ScanReadout,
}

impl LeastSquares for LocalModel<'_> {
    fn n_params(&self) -> usize {
        2
    }

    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn evaluate(&self, p: &[f64], r: &mut DVector<f64>, mut jac: Option<&mut DMatrix<f64>>) {
        for i in 0..self.x.len() {
            let (prob, d_theta, _) = self
                .readout
                .probability_with_gradient(p[0] + p[1] * self.x[i], self.readout.area);
            r[i] = self.sqrt_w[i] * (prob - self.y[i]);
            if let Some(j) = jac.as_deref_mut() {
                j[(i, 0)] = self.sqrt_w[i] * d_theta;
                j[(i, 1)] = self.sqrt_w[i] * d_theta * self.x[i];
            }
        }
    }
}

fn fit_window(rec: &ScanRecord, readout: &ScanReadout, omega_lo: f64, omega_hi: f64, max_iter: usize) -> Result<WindowFit> {
    let n = rec.len();
    if n < 4 {
        return Err(invalid("scan", "resolved windows need at least four points"));
    }
    let center = rec.voltages.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = rec.voltages.iter().map(|v| v - center).collect();
    let half = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if half <= 0.0 {
        return Err(invalid("scan", "resolved window has zero width"));
    }
    let profile = readout.profile();
    let d_omega = 0.15 / half;
    let steps = (((omega_hi - omega_lo) / d_omega).ceil() as usize).clamp(1, 100_000);
    let beta_steps = 64;
    let mut best = (f64::INFINITY, 0.0, omega_lo);
    for k in 0..=steps {
        let omega = omega_lo + (omega_hi - omega_lo) * k as f64 / steps as f64;
        for b in 0..beta_steps {
            let beta = PI * b as f64 / beta_steps as f64;
            let sse: f64 = x
                .iter()
                .zip(&rec.signals)
                .map(|(xi, yi)| {
                    let d = profile.at(beta + omega * xi) - yi;
                    d * d
                })
                .sum();
            if sse < best.0 {
                best = (sse, beta, omega);
            }
        }
    }
    let reps = rec.repetitions as f64;
    let mut local = LocalModel {
        x,
        y: rec.signals.clone(),
        sqrt_w: vec![(reps / 0.25).sqrt(); n],
        readout,
    };
    let mut out = levenberg_marquardt(&local, &[best.1, best.2], max_iter, 1e-12);
    local.sqrt_w = local
        .x
        .iter()
        .map(|xi| {
            let p = readout.probability_with_gradient(out.params[0] + out.params[1] * xi, readout.area).0;
            binomial_weight(p, reps).sqrt()
        })
        .collect();
    out = levenberg_marquardt(&local, &out.params, max_iter, 1e-12);
    let cov = spd_inverse(&out.normal_matrix).ok_or_else(|| Error::NonConvergence {
        iterations: out.iterations,
        reason: format!("singular local fit in window at {center} V"),
    })?;
    let (mut phase, mut frequency) = (out.params[0], out.params[1]);
    if frequency < 0.0 {
        phase = -phase;
        frequency = -frequency;
    }
    Ok(WindowFit {
        center,
        phase: phase.rem_euclid(PI),
        frequency,
        frequency_sigma: cov[(1, 1)].sqrt(),
        phase_sigma: cov[(0, 0)].sqrt(),
    })
}

/// Windows ordered from the centre outwards.
fn unwrap_order(windows: &[WindowFit]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by(|&a, &b| windows[a].center.abs().total_cmp(&windows[b].center.abs()));
    order
}

/// Weighted least-squares start polynomial from window phases and slopes.
/// Phases are unwrapped from the centre outwards; `shifts[w]` adds whole
/// periods to the turn count chosen for window `w`.
fn seed_polynomial(windows: &[WindowFit], v_ref: f64, shifts: &[i32]) -> Result<Vec<f64>> {
    let order = unwrap_order(windows);
    let first = &windows[order[0]];
    let mut unwrapped = vec![f64::NAN; windows.len()];
    unwrapped[order[0]] = first.phase;
    // derivative-only start: slopes from every window fix the shape
    let mut params = solve_seed(windows, &unwrapped, v_ref)?;
    for &w in &order[1..] {
        let win = &windows[w];
        let predicted = PhaseModel::theta(&params, win.center / v_ref);
        let turns = ((predicted - win.phase) / PI).round() + shifts[w] as f64;
        unwrapped[w] = win.phase + turns * PI;
        params = solve_seed(windows, &unwrapped, v_ref)?;
    }
    Ok(params)
}

fn solve_seed(windows: &[WindowFit], phases: &[f64], v_ref: f64) -> Result<Vec<f64>> {
    let n_phase = phases.iter().filter(|p| p.is_finite()).count();
    let rows = windows.len() + n_phase;
    let degree = MAP_DEGREE.min(rows - 1).min(windows.len() + n_phase.saturating_sub(1));
    let mut a = DMatrix::zeros(rows, degree + 1);
    let mut b = DVector::zeros(rows);
    let mut row = 0;
    for w in windows {
        let u = w.center / v_ref;
        let s = 1.0 / w.frequency_sigma.max(1e-12);
        for j in 1..=degree {
            a[(row, j)] = s * j as f64 * u.powi(j as i32 - 1) / v_ref;
        }
        b[row] = s * w.frequency;
        row += 1;
    }
    for (w, ph) in windows.iter().zip(phases) {
        if !ph.is_finite() {
            continue;
        }
        let u = w.center / v_ref;
        let s = 1.0 / w.phase_sigma.max(1e-12);
        a[(row, 0)] = s;
        for j in 1..=degree {
            a[(row, j)] = s * u.powi(j as i32);
        }
        b[row] = s * ph;
        row += 1;
    }
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| invalid("scan", e.to_string()))?;
    let mut params = vec![0.0; MAP_DEGREE + 1];
    params[..=degree].copy_from_slice(sol.as_slice());
    Ok(params)
}

/// Fit a fifth-order map to resolved windows plus aliased sweeps.
pub fn fit_polynomial_map(
    scans: &[ScanRecord],
    field: &StandingWaveField,
    readout: &ScanReadout,
    options: &FitOptions,
) -> Result<MapFitReport> {
    if scans.is_empty() {
        return Err(invalid("scans", "no scans given"));
    }
    for s in scans {
        s.validate()?;
    }
    if !(options.slope_guess > 0.0 && options.slope_range.0 > 0.0 && options.slope_range.1 > options.slope_range.0) {
        return Err(invalid("slope_guess", "must be positive with an increasing range"));
    }
    let k = field.wavevector;
    let resolved: Vec<&ScanRecord> = scans
        .iter()
        .filter(|s| matches!(s.kind, ScanKind::Resolved { .. }))
        .collect();
    if resolved.is_empty() {
        return Err(invalid("scans", "at least one resolved scan is required"));
    }
    let v_ref = scans
        .iter()
        .flat_map(|s| s.voltages.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if v_ref <= 0.0 {
        return Err(invalid("scans", "all voltages are zero"));
    }
    let omega0 = k * options.slope_guess;
    let windows = resolved
        .iter()
        .map(|r| {
            fit_window(
                r,
                readout,
                omega0 * options.slope_range.0,
                omega0 * options.slope_range.1,
                options.max_iterations,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<Point> = scans
        .iter()
        .flat_map(|s| {
            let aliased = matches!(s.kind, ScanKind::Aliased { .. });
            s.voltages.iter().zip(&s.signals).map(move |(v, y)| Point {
                u: v / v_ref,
                y: *y,
                reps: s.repetitions as f64,
                aliased,
                voltage: *v,
            })
        })
        .collect();
    let centers: Vec<f64> = windows.iter().map(|w| w.center).collect();
    let distance = |v: f64| centers.iter().fold(f64::INFINITY, |m, c| m.min((v - c).abs()));

    let mut model = PhaseModel {
        points: Vec::new(),
        sqrt_w: Vec::new(),
        readout,
        fit_area: options.fit_area,
        area: readout.area,
    };
    let mut iterations = 0;
    let mut attempt = |shifts: &[i32], model: &mut PhaseModel<'_>| -> Result<(Vec<f64>, LmOutcome)> {
        let mut params = seed_polynomial(&windows, v_ref, shifts)?;
        if options.fit_area {
            params.push(readout.area);
        }
        for reach in [0.03, 0.06, 0.12, 0.25, 0.5, f64::INFINITY] {
            model.points = all
                .iter()
                .copied()
                .filter(|p| !p.aliased || distance(p.voltage) <= reach * v_ref)
                .collect();
            model.reweight(&params);
            let out = levenberg_marquardt(&*model, &params, options.max_iterations, 1e-10);
            iterations += out.iterations;
            params = out.params;
        }
        let mut last = None;
        for _ in 0..options.reweight_passes.max(1) {
            model.reweight(&params);
            let out = levenberg_marquardt(&*model, &params, options.max_iterations, 1e-12);
            iterations += out.iterations;
            params = out.params.clone();
            last = Some(out);
        }
        Ok((params, last.expect("at least one pass")))
    };

    let mut shifts = vec![0; windows.len()];
    let (mut params, mut out) = attempt(&shifts, &mut model)?;
    let dof_of = |m: &PhaseModel<'_>| m.points.len().saturating_sub(m.n_params()) as f64;
    // a π slip in one window leaves the aliased points far from any fit
    let implausible = |chi2: f64, dof: f64| chi2 > dof + 5.0 * (2.0 * dof).sqrt();
    let mut unwrap_restarts = 0;
    if implausible(out.chi2, dof_of(&model)) {
        let base = shifts.clone();
        for &w in unwrap_order(&windows).iter().skip(1) {
            for d in [-1, 1] {
                shifts.clone_from(&base);
                shifts[w] = d;
                unwrap_restarts += 1;
                if let Ok((p, o)) = attempt(&shifts, &mut model) {
                    if o.converged && o.chi2 < out.chi2 {
                        params = p;
                        out = o;
                    }
                }
            }
        }
        model.reweight(&params);
    }
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.iterations,
            reason: "map fit did not settle".into(),
        });
    }
    let chi2 = out.chi2;
    let cov_full = spd_inverse(&out.normal_matrix).ok_or_else(|| Error::NonConvergence {
        iterations: out.iterations,
        reason: "singular normal matrix".into(),
    })?;

    let branches = sweep_branches(&mut model, &params, scans, v_ref, options);
    let ambiguous_branch = branches.iter().any(|b| b.distinct && b.chi2 - chi2 < 1.0);

    // canonical sign: c₁ > 0
    let sign = if params[1] < 0.0 { -1.0 } else { 1.0 };
    let mut c = [0.0; MAP_DEGREE];
    for j in 1..=MAP_DEGREE {
        c[j - 1] = sign * params[j] / (k * v_ref.powi(j as i32));
    }
    let mut covariance = vec![vec![0.0; MAP_DEGREE]; MAP_DEGREE];
    for i in 1..=MAP_DEGREE {
        for j in 1..=MAP_DEGREE {
            covariance[i - 1][j - 1] =
                cov_full[(i, j)] / (k * k * v_ref.powi(i as i32) * v_ref.powi(j as i32));
        }
    }
    let relative_uncertainty = (0..MAP_DEGREE)
        .map(|i| covariance[i][i].sqrt() / c[i].abs())
        .collect();
    let n_params = model.n_params();
    let dof = model.points.len().saturating_sub(n_params);
    Ok(MapFitReport {
        map: PolynomialMap::new(c),
        lattice_phase: (sign * params[0]).rem_euclid(PI),
        area: model.area_of(&params),
        covariance,
        relative_uncertainty,
        phase_sigma: cov_full[(0, 0)].sqrt(),
        chi2,
        dof,
        reduced_chi2: chi2 / dof.max(1) as f64,
        iterations,
        windows,
        branches,
        ambiguous_branch,
        unwrap_restarts,
        weighting: format!(
            "binomial weights N/(p(1-p)) from the model, {} reweighting passes; resolved and aliased points weighted alike",
            options.reweight_passes.max(1)
        ),
    })
}

fn sweep_branches(
    model: &mut PhaseModel<'_>,
    best: &[f64],
    scans: &[ScanRecord],
    v_ref: f64,
    options: &FitOptions,
) -> Vec<BranchFit> {
    let Some(aliased) = scans.iter().find(|s| matches!(s.kind, ScanKind::Aliased { .. })) else {
        return Vec::new();
    };
    let h = aliased.kind.step();
    let v0 = aliased.voltages[0];
    let spacing = PI * v_ref / h;
    options
        .branch_offsets
        .iter()
        .filter(|&&m| m != 0)
        .map(|&m| {
            let mut start = best.to_vec();
            start[1] += m as f64 * spacing;
            start[0] -= m as f64 * PI * v0 / h;
            model.reweight(&start);
            let out = levenberg_marquardt(model, &start, options.max_iterations, 1e-10);
            model.reweight(best);
            BranchFit {
                offset: m,
                chi2: model.chi2(&out.params),
                slope_at_zero: out.params[1].abs() / v_ref,
                distinct: (out.params[1] - best[1]).abs() > 0.25 * spacing,
            }
        })
        .collect()
}
