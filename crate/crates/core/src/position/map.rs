//! Fifth-order voltage-to-position maps and curve comparison.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PositionCurve;
use crate::error::{invalid, Result};

pub const MAP_DEGREE: usize = 5;

/// `z(V) = Σ cᵢ Vⁱ` for `i = 0..=5`, in metres per voltⁱ, with `c₀ = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMap {
    pub coefficients: [f64; MAP_DEGREE + 1],
}

impl PolynomialMap {
    /// Map from `c₁..c₅`; the constant term is fixed at zero.
    pub fn new(c: [f64; MAP_DEGREE]) -> Self {
        let mut coefficients = [0.0; MAP_DEGREE + 1];
        coefficients[1..].copy_from_slice(&c);
        Self { coefficients }
    }

    pub fn linear(slope: f64) -> Self {
        Self::new([slope, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn evaluate(&self, v: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * v + c)
    }

    pub fn derivative(&self, v: f64) -> f64 {
        (1..=MAP_DEGREE)
            .rev()
            .fold(0.0, |acc, i| acc * v + i as f64 * self.coefficients[i])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.coefficients.iter_mut().for_each(|c| *c *= factor);
        out
    }

    /// Least-squares fit of `z(V) − z(0)` sampled on `samples` points in `[−range, range]`.
    pub fn from_curve(curve: &dyn PositionCurve, range: f64, samples: usize) -> Result<Self> {
        if !(range > 0.0 && range.is_finite()) {
            return Err(invalid("range", "must be positive"));
        }
        if samples < 2 * MAP_DEGREE {
            return Err(invalid("samples", "too few for a fifth-order fit"));
        }
        let z0 = curve.position(0.0)?;
        let mut a = DMatrix::zeros(samples, MAP_DEGREE);
        let mut b = DVector::zeros(samples);
        for k in 0..samples {
            let u = -1.0 + 2.0 * k as f64 / (samples - 1) as f64;
            b[k] = curve.position(u * range)? - z0;
            let mut p = 1.0;
            for i in 0..MAP_DEGREE {
                p *= u;
                a[(k, i)] = p;
            }
        }
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| invalid("samples", e.to_string()))?;
        let mut c = [0.0; MAP_DEGREE];
        for i in 0..MAP_DEGREE {
            c[i] = sol[i] / range.powi(i as i32 + 1);
        }
        Ok(Self::new(c))
    }

    /// Indices `i ≥ 1` whose term reaches `fraction · span` at `|V| = range`.
    pub fn dominant_coefficients(&self, range: f64, fraction: f64) -> Vec<usize> {
        let span = self.evaluate(range) - self.evaluate(-range);
        (1..=MAP_DEGREE)
            .filter(|&i| (self.coefficients[i] * range.powi(i as i32)).abs() >= fraction * span.abs())
            .collect()
    }
}

impl PositionCurve for PolynomialMap {
    fn position(&self, voltage: f64) -> Result<f64> {
        Ok(self.evaluate(voltage))
    }

    fn slope(&self, voltage: f64) -> Result<f64> {
        Ok(self.derivative(voltage))
    }
}

/// Largest `|z_a(V) − z_b(V)|` on `samples` points over `[−range, range]`.
pub fn max_position_error(a: &dyn PositionCurve, b: &dyn PositionCurve, range: f64, samples: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let v = -range + 2.0 * range * k as f64 / (samples.max(2) - 1) as f64;
        worst = worst.max((a.position(v)? - b.position(v)?).abs());
    }
    Ok(worst)
}

/// `z'(V)/λ_sw` of a measured map against a simulated model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscrepancyCurve {
    pub voltages: Vec<f64>,
    pub measured: Vec<f64>,
    pub simulated: Vec<f64>,
    /// `(measured − simulated)/simulated`.
    pub relative_deviation: Vec<f64>,
}

impl DiscrepancyCurve {
    pub fn max_abs_deviation(&self) -> f64 {
        self.relative_deviation.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn rms_deviation(&self) -> f64 {
        let n = self.relative_deviation.len().max(1) as f64;
        (self.relative_deviation.iter().map(|d| d * d).sum::<f64>() / n).sqrt()
    }
}

pub fn compare_curves(
    measured: &dyn PositionCurve,
    simulated: &dyn PositionCurve,
    voltages: &[f64],
    period: f64,
) -> Result<DiscrepancyCurve> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(invalid("period", "must be positive"));
    }
    let mut out = DiscrepancyCurve {
        voltages: voltages.to_vec(),
        measured: Vec::with_capacity(voltages.len()),
        simulated: Vec::with_capacity(voltages.len()),
        relative_deviation: Vec::with_capacity(voltages.len()),
    };
    for &v in voltages {
        let m = measured.slope(v)? / period;
        let s = simulated.slope(v)? / period;
        out.measured.push(m);
        out.simulated.push(s);
        out.relative_deviation.push((m - s) / s);
    }
    Ok(out)
}

pub fn compare_to_electrostatics(
    map: &PolynomialMap,
    model: &dyn PositionCurve,
    voltages: &[f64],
    period: f64,
) -> Result<DiscrepancyCurve> {
    compare_curves(map, model, voltages, period)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::position::SegmentPotentialModel;
    use approx::assert_relative_eq;

    #[test]
    fn horner_matches_powers() {
        let m = PolynomialMap::new([1.0, -2.0, 0.5, 0.25, -0.1]);
        let v: f64 = 1.7;
        let direct = v - 2.0 * v * v + 0.5 * v.powi(3) + 0.25 * v.powi(4) - 0.1 * v.powi(5);
        assert_relative_eq!(m.evaluate(v), direct, max_relative = 1e-14);
        let d = 1.0 - 4.0 * v + 1.5 * v * v + v.powi(3) - 0.5 * v.powi(4);
        assert_relative_eq!(m.derivative(v), d, max_relative = 1e-14);
    }

    #[test]
    fn fit_reproduces_polynomial_curve() {
        let truth = PolynomialMap::new([8e-6, 1e-9, 1e-8, -2e-12, 6e-11]);
        let fit = PolynomialMap::from_curve(&truth, 8.0, 101).unwrap();
        for i in 1..=5 {
            assert_relative_eq!(fit.coefficients[i], truth.coefficients[i], max_relative = 1e-8);
        }
    }

    #[test]
    fn scaled_map_reports_sixteen_percent() {
        let m = PolynomialMap::new([8e-6, 0.0, 1e-8, 0.0, 6e-11]);
        let v: Vec<f64> = (-8..=8).map(|k| k as f64).collect();
        let c = compare_curves(&m.scaled(1.16), &m, &v, 260e-9).unwrap();
        for d in &c.relative_deviation {
            assert_relative_eq!(*d, 0.16, epsilon = 1e-12);
        }
        let same = compare_to_electrostatics(&m, &m, &v, 260e-9).unwrap();
        assert_eq!(same.max_abs_deviation(), 0.0);
    }

    #[test]
    fn electrostatic_map_is_odd() {
        let model = SegmentPotentialModel::default();
        let map = PolynomialMap::from_curve(&model, 8.6, 201).unwrap();
        assert!(map.coefficients[2].abs() < 1e-12 * map.coefficients[1]);
        assert_eq!(map.dominant_coefficients(8.6, 0.01), vec![1, 3, 5]);
    }
}
