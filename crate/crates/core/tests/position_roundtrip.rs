use std::f64::consts::PI;

use rayon::prelude::*;

use ionlattice::position::{
    fit_polynomial_map, run_scan_plan, FitOptions, PolynomialMap, ScanPlan, ScanReadout, SegmentPotentialModel,
};
use ionlattice::{MotionalState, StandingWaveField};

/// Generate with a known map, fit, and check that every coefficient lands
/// within three reported standard deviations.
#[test]
fn reported_covariance_is_calibrated() {
    let model = SegmentPotentialModel::default();
    let range = model.voltage_for_span(157e-6).unwrap();
    let truth = PolynomialMap::from_curve(&model, range, 401).unwrap();
    let field = StandingWaveField::new(2.0 * PI * 185e3, 2.0 * PI / 260e-9, 0.0).unwrap();
    let readout = ScanReadout::new(&MotionalState::thermal(0.4).unwrap(), 0.21, 0.048 * PI, PI, 0.99).unwrap();
    let results: Vec<(bool, f64, usize)> = (0..100u64)
        .into_par_iter()
        .map(|k| {
            let scans = run_scan_plan(&truth, &field, &readout, &ScanPlan::default(), range, 50_000 + k).unwrap();
            let rep = fit_polynomial_map(&scans, &field, &readout, &FitOptions::default()).unwrap();
            let pulls: Vec<f64> = (1..=5)
                .map(|i| (rep.map.coefficients[i] - truth.coefficients[i]) / rep.covariance[i - 1][i - 1].sqrt())
                .collect();
            let worst = pulls.iter().fold(0.0f64, |m, p| m.max(p.abs()));
            (worst <= 3.0, rep.reduced_chi2, rep.unwrap_restarts)
        })
        .collect();
    let within = results.iter().filter(|r| r.0).count();
    let chi2: Vec<f64> = results.iter().map(|r| r.1).collect();
    let restarted = results.iter().filter(|r| r.2 > 0).count();
    println!(
        "{within}/100 trials with every coefficient inside 3 sigma; reduced chi2 {:.3}..{:.3}; {restarted} restarted",
        chi2.iter().copied().fold(f64::INFINITY, f64::min),
        chi2.iter().copied().fold(0.0, f64::max)
    );
    assert!(within >= 90, "{within}/100");
}

#[test]
fn linear_model_of_a_curved_map_leaves_significant_higher_orders() {
    let model = SegmentPotentialModel::default();
    let range = model.voltage_for_span(157e-6).unwrap();
    let truth = PolynomialMap::from_curve(&model, range, 401).unwrap();
    let field = StandingWaveField::new(2.0 * PI * 185e3, 2.0 * PI / 260e-9, 0.0).unwrap();
    let readout = ScanReadout::new(&MotionalState::thermal(0.4).unwrap(), 0.21, 0.048 * PI, PI, 0.99).unwrap();
    let scans = run_scan_plan(&truth, &field, &readout, &ScanPlan::default(), range, 7).unwrap();
    let rep = fit_polynomial_map(&scans, &field, &readout, &FitOptions::default()).unwrap();
    let significance = rep.significance();
    // odd terms carry the curvature of a symmetric trap; even ones are null
    assert!(significance[2] > 5.0 && significance[4] > 5.0, "{significance:?}");
    let linear = PolynomialMap::linear(rep.map.coefficients[1]);
    let dev = (linear.evaluate(range) - truth.evaluate(range)).abs();
    assert!(dev > 1e-6, "linear map misses the edge by only {dev}");
}
