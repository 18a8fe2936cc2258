//! Small numerical kernels: bracketed root finding, damped least squares.

use nalgebra::{DMatrix, DVector};

/// Brent's method on a bracket with `f(a)·f(b) ≤ 0`.
pub fn brent_root(f: impl Fn(f64) -> f64, a: f64, b: f64, xtol: f64, max_iter: usize) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    let (mut c, mut fc) = (b, fb);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    None
}

/// Weighted residuals `r(p)` and their Jacobian `∂r/∂p`.
pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn evaluate(&self, p: &[f64], r: &mut DVector<f64>, jac: Option<&mut DMatrix<f64>>);
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `JᵀJ` at the solution.
    pub normal_matrix: DMatrix<f64>,
}

/// Levenberg-Marquardt with Marquardt diagonal scaling.
pub fn levenberg_marquardt(problem: &dyn LeastSquares, start: &[f64], max_iter: usize, rtol: f64) -> LmOutcome {
    let np = problem.n_params();
    let nr = problem.n_residuals();
    let mut p = start.to_vec();
    let mut r = DVector::zeros(nr);
    let mut jac = DMatrix::zeros(nr, np);
    problem.evaluate(&p, &mut r, Some(&mut jac));
    let mut chi2 = r.norm_squared();
    let mut lambda = 1e-3;
    let mut trial_r = DVector::zeros(nr);
    let mut converged = false;
    let mut iterations = 0;
    let mut jtj = jac.tr_mul(&jac);
    let mut grad = jac.tr_mul(&r);
    while iterations < max_iter {
        iterations += 1;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            problem.evaluate(&trial, &mut trial_r, None);
            let trial_chi2 = trial_r.norm_squared();
            if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                let decrease = chi2 - trial_chi2;
                p = trial;
                problem.evaluate(&p, &mut r, Some(&mut jac));
                chi2 = r.norm_squared();
                jtj = jac.tr_mul(&jac);
                grad = jac.tr_mul(&r);
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                let small_step = step
                    .iter()
                    .zip(&p)
                    .all(|(d, x)| d.abs() <= 1e-12 * (1.0 + x.abs()));
                if decrease <= rtol * chi2 + 1e-300 || small_step {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: a stationary point
            converged = true;
        }
        if converged {
            break;
        }
    }
    LmOutcome {
        params: p,
        chi2,
        iterations,
        converged,
        normal_matrix: jtj,
    }
}

/// Inverse of a symmetric positive-definite matrix, or `None` if singular.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent_root(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14, 100).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
        assert!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_none());
    }

    struct Exp {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares for Exp {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.x.len()
        }
        fn evaluate(&self, p: &[f64], r: &mut DVector<f64>, jac: Option<&mut DMatrix<f64>>) {
            for (i, (x, y)) in self.x.iter().zip(&self.y).enumerate() {
                r[i] = p[0] * (p[1] * x).exp() - y;
            }
            if let Some(j) = jac {
                for (i, x) in self.x.iter().enumerate() {
                    j[(i, 0)] = (p[1] * x).exp();
                    j[(i, 1)] = p[0] * x * (p[1] * x).exp();
                }
            }
        }
    }

    #[test]
    fn lm_recovers_exponential() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let out = levenberg_marquardt(&Exp { x, y }, &[1.0, 0.0], 200, 1e-14);
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-8);
        assert!((out.params[1] + 1.3).abs() < 1e-8);
    }
}
