//! Motional-state primitives: thermal occupation, Lamb-Dicke matrix elements.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::Spin;

/// Fock cutoff used when none is requested.
pub const DEFAULT_TRUNCATION: usize = 200;

/// Largest thermal probability mass allowed beyond the cutoff.
pub const TAIL_MASS_LIMIT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Fock(usize),
    Thermal(f64),
}

/// Occupation model of the axial mode together with its numerical cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionalState {
    kind: MotionKind,
    truncation: usize,
}

impl MotionalState {
    pub fn fock(n: usize) -> Self {
        Self {
            kind: MotionKind::Fock(n),
            truncation: DEFAULT_TRUNCATION.max(n),
        }
    }

    /// Thermal state with the default cutoff, raised until the tail mass is
    /// below [`TAIL_MASS_LIMIT`].
    pub fn thermal(nbar: f64) -> Result<Self> {
        Self::thermal_with_truncation(nbar, DEFAULT_TRUNCATION)
    }

    /// Thermal state with at least `truncation` levels (raised if needed).
    pub fn thermal_with_truncation(nbar: f64, truncation: usize) -> Result<Self> {
        check_nbar(nbar)?;
        Ok(Self {
            kind: MotionKind::Thermal(nbar),
            truncation: truncation.max(min_thermal_truncation(nbar, TAIL_MASS_LIMIT)),
        })
    }

    /// Thermal state whose cutoff is taken as given, even when too small.
    pub fn thermal_fixed_truncation(nbar: f64, truncation: usize) -> Result<Self> {
        check_nbar(nbar)?;
        Ok(Self {
            kind: MotionKind::Thermal(nbar),
            truncation,
        })
    }

    pub fn kind(&self) -> MotionKind {
        self.kind
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Mean phonon number of the distribution.
    pub fn mean_occupation(&self) -> f64 {
        match self.kind {
            MotionKind::Fock(n) => n as f64,
            MotionKind::Thermal(nbar) => nbar,
        }
    }

    /// Fock populations over `0..=truncation` (thermal weights are not renormalised).
    pub fn populations(&self) -> Vec<f64> {
        match self.kind {
            MotionKind::Fock(n) => {
                let mut p = vec![0.0; self.truncation + 1];
                p[n] = 1.0;
                p
            }
            MotionKind::Thermal(nbar) => thermal_weights(nbar, self.truncation),
        }
    }

    /// Probability mass lying beyond the cutoff.
    pub fn tail_mass(&self) -> f64 {
        match self.kind {
            MotionKind::Fock(_) => 0.0,
            MotionKind::Thermal(nbar) => thermal_tail_mass(nbar, self.truncation),
        }
    }

    pub fn check_truncation(&self) -> Result<()> {
        let tail = self.tail_mass();
        if tail > TAIL_MASS_LIMIT {
            return Err(Error::TruncationInsufficient {
                truncation: self.truncation,
                tail,
                limit: TAIL_MASS_LIMIT,
            });
        }
        Ok(())
    }
}

fn check_nbar(nbar: f64) -> Result<()> {
    if !(nbar.is_finite() && nbar >= 0.0) {
        return Err(invalid("nbar", format!("must be finite and non-negative, got {nbar}")));
    }
    Ok(())
}

/// A single ion: spin, axial position (m) and motional state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IonState {
    pub spin: Spin,
    pub position: f64,
    pub motion: MotionalState,
}

/// Geometric thermal distribution `n̄ⁿ/(n̄+1)ⁿ⁺¹` for `n = 0..=truncation`.
pub fn thermal_weights(nbar: f64, truncation: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(truncation + 1);
    if nbar <= 0.0 {
        w.push(1.0);
        w.resize(truncation + 1, 0.0);
        return w;
    }
    let ratio = nbar / (nbar + 1.0);
    let mut p = 1.0 / (nbar + 1.0);
    for _ in 0..=truncation {
        w.push(p);
        p *= ratio;
    }
    w
}

/// Mass of the thermal distribution above `truncation`: `(n̄/(n̄+1))^(T+1)`.
pub fn thermal_tail_mass(nbar: f64, truncation: usize) -> f64 {
    if nbar <= 0.0 {
        return 0.0;
    }
    (nbar / (nbar + 1.0)).powf(truncation as f64 + 1.0)
}

/// Smallest cutoff `T` with tail mass not above `limit`.
pub fn min_thermal_truncation(nbar: f64, limit: f64) -> usize {
    if nbar <= 0.0 {
        return 0;
    }
    let ln_ratio = (nbar / (nbar + 1.0)).ln();
    let mut t = ((limit.ln() / ln_ratio).ceil() as usize).saturating_sub(1);
    while thermal_tail_mass(nbar, t) > limit {
        t += 1;
    }
    while t > 0 && thermal_tail_mass(nbar, t - 1) <= limit {
        t -= 1;
    }
    t
}

/// Generalised Laguerre polynomial `L_n^(a)(x)` by upward recurrence.
pub fn laguerre(n: usize, a: usize, x: f64) -> f64 {
    let a = a as f64;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Diagonal element `⟨n|cos(η(a+a†))|n⟩ = e^(−η²/2) L_n(η²)`.
pub fn lamb_dicke_element(n: usize, eta: f64) -> f64 {
    let x = eta * eta;
    (-0.5 * x).exp() * laguerre(n, 0, x)
}

/// Magnitude of `⟨n+s|e^(iη(a+a†))|n⟩`.
pub fn displacement_element(n: usize, s: usize, eta: f64) -> f64 {
    let x = eta * eta;
    // sqrt(n!/(n+s)!) accumulated as a product to avoid overflow
    let mut ratio = 1.0;
    for j in 1..=s {
        ratio /= (n + j) as f64;
    }
    ((-0.5 * x).exp() * eta.powi(s as i32) * ratio.sqrt() * laguerre(n, s, x)).abs()
}

/// Cached `M_n(η)` for `n = 0..=truncation`.
pub fn lamb_dicke_table(eta: f64, truncation: usize) -> Vec<f64> {
    let x = eta * eta;
    let pre = (-0.5 * x).exp();
    let mut out = Vec::with_capacity(truncation + 1);
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..=truncation {
        if k == 0 {
            out.push(pre);
            prev = 1.0;
            cur = 1.0 - x;
            continue;
        }
        out.push(pre * cur);
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    out
}
