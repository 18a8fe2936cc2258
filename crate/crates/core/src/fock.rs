//! Truncated Fock-space operators.

use nalgebra::{DMatrix, SymmetricEigen};

/// Spectral decomposition of the truncated quadrature `X = a + a†`.
///
/// For real `s`, `|⟨m|exp(s(a† − a))|n⟩| = |⟨m|exp(isX)|n⟩|` because the two
/// generators are related by the diagonal unitary `diag(iⁿ)`. Displacements
/// along any phase-space direction are obtained from one decomposition.
#[derive(Clone, Debug)]
pub struct QuadratureSpectrum {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
}

impl QuadratureSpectrum {
    pub fn new(dim: usize) -> Self {
        let x = quadrature(dim);
        let eig = SymmetricEigen::new(x);
        Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `|⟨m|exp(isX)|n⟩|²` for `m < rows`, `n < cols`.
    pub fn transition_probabilities(&self, s: f64, rows: usize, cols: usize) -> DMatrix<f64> {
        let dim = self.dim();
        let rows = rows.min(dim);
        let cols = cols.min(dim);
        let (sin, cos): (Vec<f64>, Vec<f64>) = self.values.iter().map(|l| (s * l).sin_cos()).unzip();
        DMatrix::from_fn(rows, cols, |m, n| {
            let mut re = 0.0;
            let mut im = 0.0;
            for k in 0..dim {
                let p = self.vectors[(m, k)] * self.vectors[(n, k)];
                re += p * cos[k];
                im += p * sin[k];
            }
            re * re + im * im
        })
    }
}

/// `a + a†` on the first `dim` Fock levels.
pub fn quadrature(dim: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        let s = (n as f64).sqrt();
        x[(n - 1, n)] = s;
        x[(n, n - 1)] = s;
    }
    x
}

/// Annihilation operator on the first `dim` Fock levels.
pub fn annihilation(dim: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = (n as f64).sqrt();
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_normalised_away_from_cutoff() {
        let spec = QuadratureSpectrum::new(80);
        let p = spec.transition_probabilities(0.7, 10, 80);
        for m in 0..10 {
            let s: f64 = p.row(m).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {m} sums to {s}");
        }
    }

    #[test]
    fn quadrature_is_sum_of_ladders() {
        let a = annihilation(6);
        let x = &a + a.transpose();
        assert_eq!(x, quadrature(6));
    }
}
