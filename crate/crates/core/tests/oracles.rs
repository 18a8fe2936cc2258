//! Independent reference computations for the closed forms used in the library.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use ionlattice::kicks::{displaced_thermal_populations, CoherentDisplacement};
use ionlattice::motion::{lamb_dicke_element, thermal_weights};
use ionlattice::{lattice_period, stark_shift, PhysicalParams, StandingWaveField};

const ORACLE_DIM: usize = 160;

/// `exp(M)` by scaling and squaring of a Taylor series.
fn expm(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let norm = m.iter().map(|z| z.norm()).fold(0.0, f64::max) * m.nrows() as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = m.map(|z| z / 2f64.powi(squarings));
    let n = m.nrows();
    let mut sum = DMatrix::<Complex64>::identity(n, n);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    for k in 1..40 {
        term = &term * &a / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn creation(dim: usize) -> DMatrix<Complex64> {
    let mut a = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n, n - 1)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// `⟨n|cos(η(a+a†))|n⟩` from the truncated matrix exponential.
fn brute_force_lamb_dicke(eta: f64, nmax: usize) -> Vec<f64> {
    let ad = creation(ORACLE_DIM);
    let x = &ad + ad.adjoint();
    let u = expm(&x.map(|z| z * Complex64::new(0.0, eta)));
    (0..=nmax).map(|n| u[(n, n)].re).collect()
}

#[test]
fn lamb_dicke_closed_form_matches_truncated_fock() {
    let mut worst: f64 = 0.0;
    for step in 0..=50 {
        let eta = 0.01 * step as f64;
        let oracle = brute_force_lamb_dicke(eta, 50);
        for (n, m_ref) in oracle.iter().enumerate() {
            let m = lamb_dicke_element(n, eta);
            let rel = (m - m_ref).abs() / m_ref.abs().max(1e-300);
            worst = worst.max(rel);
            assert!(rel < 1e-8, "n={n} eta={eta}: {m} vs {m_ref} (rel {rel:e})");
        }
    }
    println!("worst relative deviation {worst:e}");
}

#[test]
fn displaced_thermal_populations_match_matrix_exponential() {
    let dim = 120;
    let ad = creation(dim);
    for &(alpha, nbar) in &[(0.0, 0.4), (0.5, 0.4), (1.3, 0.4), (2.0, 0.0), (1.0, 3.0)] {
        let gen = ad.map(|z| z * alpha) - ad.adjoint().map(|z| z * alpha);
        let d = expm(&gen);
        let truncation = 40;
        // input thermal state cut at the same level as the output
        let thermal = thermal_weights(nbar, truncation);
        let oracle: Vec<f64> = (0..=truncation)
            .map(|n| (0..=truncation).map(|m| thermal[m] * d[(n, m)].norm_sqr()).sum())
            .collect();
        let pops =
            displaced_thermal_populations(CoherentDisplacement::new(alpha, 0.0), nbar, truncation).unwrap();
        for (n, (p, q)) in pops.iter().zip(&oracle).enumerate() {
            assert!((p - q).abs() < 1e-10, "alpha={alpha} nbar={nbar} n={n}: {p} vs {q}");
        }
    }
}

#[test]
fn displacement_direction_does_not_change_populations() {
    let a = displaced_thermal_populations(CoherentDisplacement::from_polar(0.8, 0.0), 0.4, 30).unwrap();
    let b = displaced_thermal_populations(CoherentDisplacement::from_polar(0.8, 1.1), 0.4, 30).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-14);
    }
}

/// Differential light shift from two plane waves crossing at `angle`, both
/// along the trap axis `ŷ` at ±angle/2 from `x̂`, normalised so the peak of
/// the cross term equals `amplitude`.
fn two_beam_shift(amplitude: f64, lambda: f64, angle: f64, phase: f64, z: f64) -> f64 {
    let k0 = 2.0 * PI / lambda;
    let k1 = [k0 * (angle / 2.0).cos(), k0 * (angle / 2.0).sin()];
    let k2 = [k0 * (angle / 2.0).cos(), -k0 * (angle / 2.0).sin()];
    let r = [0.0, z];
    let e1 = Complex64::from_polar(1.0, k1[0] * r[0] + k1[1] * r[1] + phase);
    let e2 = Complex64::from_polar(1.0, k2[0] * r[0] + k2[1] * r[1]);
    // |E1 + E2|² = 2 + 2 Re(E1 E2*); only the interference term is position dependent
    amplitude * (e1 * e2.conj()).re
}

#[test]
fn stark_shift_matches_two_beam_superposition() {
    for &angle in &[0.6, 1.2, 2.0 * (397.0f64 / 520.0).asin(), 2.8] {
        let params = PhysicalParams {
            beam_angle: angle,
            ..PhysicalParams::default()
        };
        let period = lattice_period(&params).unwrap();
        let field = StandingWaveField::new(3.0, 2.0 * PI / period, 0.4).unwrap();
        for i in 0..200 {
            let z = -2e-6 + 4e-6 * i as f64 / 199.0;
            let oracle = two_beam_shift(3.0, params.lambda_laser, angle, 0.4, z);
            assert!((stark_shift(&field, z) - oracle).abs() < 1e-9, "angle={angle} z={z}");
        }
    }
}

#[test]
fn default_geometry_gives_260_nm_period() {
    let period = lattice_period(&PhysicalParams::default()).unwrap();
    assert!((period - 260e-9).abs() < 1e-15);
}
