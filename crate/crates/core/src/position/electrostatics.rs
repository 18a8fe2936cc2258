//! Axial electrostatics of a segmented linear trap.
//!
//! Each electrode contributes a smooth plateau potential per applied volt,
//! `Φᵢ(z) = ½[tanh((z − zᵢ + w/2)/d) − tanh((z − zᵢ − w/2)/d)]`.
//! The trap voltage `V_t < 0` sits on segment `n`; the shift voltage `±V_s` is
//! applied to segments `n ± 2`. Segment `n + j` is centred at `z = −j·pitch`,
//! so a positive shift voltage moves the ion towards positive `z`.

use serde::{Deserialize, Serialize};

use super::PositionCurve;
use crate::error::{invalid, Error, Result};
use crate::numeric::brent_root;

const ROOT_GRID: usize = 2000;
const ROOT_XTOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentPotentialModel {
    /// Segment centre spacing (m).
    pub pitch: f64,
    /// Plateau width of one segment (m).
    pub width: f64,
    /// Edge decay length (m).
    pub decay: f64,
    /// Voltage on the trap segment (V), negative for confinement.
    pub trap_voltage: f64,
    pub trap_segment: i64,
    /// Shift voltages go to segments `trap_segment ± shift_offset`.
    pub shift_offset: i64,
}

impl Default for SegmentPotentialModel {
    fn default() -> Self {
        Self::calibrated(250e-6, 250e-6, 300e-6, 8e-6).expect("default geometry is valid")
    }
}

impl SegmentPotentialModel {
    /// Geometry with the trap voltage chosen so that `dz/dV_s = slope` at `V_s = 0`.
    pub fn calibrated(pitch: f64, width: f64, decay: f64, slope: f64) -> Result<Self> {
        let mut m = Self {
            pitch,
            width,
            decay,
            trap_voltage: -1.0,
            trap_segment: 0,
            shift_offset: 2,
        };
        m.validate_geometry()?;
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(invalid("slope", "must be positive"));
        }
        let shift = m.shift_gradient(0.0);
        let curv = m.profile_d2(m.trap_segment, 0.0);
        m.trap_voltage = -shift / (slope * curv);
        m.validate()?;
        Ok(m)
    }

    fn validate_geometry(&self) -> Result<()> {
        for (name, v) in [("pitch", self.pitch), ("width", self.width), ("decay", self.decay)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if self.shift_offset == 0 {
            return Err(invalid("shift_offset", "must be non-zero"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        if !(self.trap_voltage < 0.0 && self.trap_voltage.is_finite()) {
            return Err(invalid("trap_voltage", "must be negative"));
        }
        Ok(())
    }

    pub fn segment_center(&self, segment: i64) -> f64 {
        -((segment - self.trap_segment) as f64) * self.pitch
    }

    /// `Φᵢ(z)` for one volt on `segment`.
    pub fn profile(&self, segment: i64, z: f64) -> f64 {
        let (a, b) = self.edges(segment, z);
        0.5 * (a.tanh() - b.tanh())
    }

    pub fn profile_d1(&self, segment: i64, z: f64) -> f64 {
        let (a, b) = self.edges(segment, z);
        0.5 * (sech2(a) - sech2(b)) / self.decay
    }

    pub fn profile_d2(&self, segment: i64, z: f64) -> f64 {
        let (a, b) = self.edges(segment, z);
        (b.tanh() * sech2(b) - a.tanh() * sech2(a)) / (self.decay * self.decay)
    }

    fn edges(&self, segment: i64, z: f64) -> (f64, f64) {
        let x = z - self.segment_center(segment);
        ((x + 0.5 * self.width) / self.decay, (x - 0.5 * self.width) / self.decay)
    }

    fn shift_gradient(&self, z: f64) -> f64 {
        self.profile_d1(self.trap_segment + self.shift_offset, z)
            - self.profile_d1(self.trap_segment - self.shift_offset, z)
    }

    fn shift_curvature(&self, z: f64) -> f64 {
        self.profile_d2(self.trap_segment + self.shift_offset, z)
            - self.profile_d2(self.trap_segment - self.shift_offset, z)
    }

    /// Potential energy per unit charge (V) at `z`.
    pub fn potential(&self, z: f64, vs: f64) -> f64 {
        self.trap_voltage * self.profile(self.trap_segment, z)
            + vs * (self.profile(self.trap_segment + self.shift_offset, z)
                - self.profile(self.trap_segment - self.shift_offset, z))
    }

    /// Axial field balance `V_s ΔΦ'(z) + V_t Φ'ₙ(z)`.
    pub fn force_balance(&self, z: f64, vs: f64) -> f64 {
        vs * self.shift_gradient(z) + self.trap_voltage * self.profile_d1(self.trap_segment, z)
    }

    pub fn curvature(&self, z: f64, vs: f64) -> f64 {
        vs * self.shift_curvature(z) + self.trap_voltage * self.profile_d2(self.trap_segment, z)
    }

    /// The unique stable root of [`force_balance`](Self::force_balance)
    /// within one pitch of the trap segment.
    pub fn equilibrium_position(&self, vs: f64) -> Result<f64> {
        self.validate()?;
        if !vs.is_finite() {
            return Err(invalid("shift_voltage", "must be finite"));
        }
        let lo = self.segment_center(self.trap_segment) - self.pitch;
        let h = 2.0 * self.pitch / ROOT_GRID as f64;
        let mut stable = Vec::new();
        let mut prev_z = lo;
        let mut prev_g = self.force_balance(lo, vs);
        for i in 1..=ROOT_GRID {
            let z = lo + i as f64 * h;
            let g = self.force_balance(z, vs);
            let root = if prev_g == 0.0 {
                Some(prev_z)
            } else if prev_g * g < 0.0 {
                brent_root(|x| self.force_balance(x, vs), prev_z, z, ROOT_XTOL, 200)
            } else {
                None
            };
            if let Some(r) = root {
                if self.curvature(r, vs) > 0.0 {
                    stable.push(r);
                }
            }
            prev_z = z;
            prev_g = g;
        }
        match stable.len() {
            0 => Err(Error::NoEquilibrium { voltage: vs }),
            1 => Ok(stable[0]),
            count => Err(Error::MultipleEquilibria { voltage: vs, count }),
        }
    }

    /// `dz_eq/dV_s` from the implicit-function theorem.
    pub fn equilibrium_slope(&self, vs: f64) -> Result<f64> {
        let z = self.equilibrium_position(vs)?;
        Ok(-self.shift_gradient(z) / self.curvature(z, vs))
    }

    /// Shift voltage `V` with `z(V) − z(−V) = span`.
    pub fn voltage_for_span(&self, span: f64) -> Result<f64> {
        if !(span > 0.0 && span.is_finite()) {
            return Err(invalid("span", "must be positive"));
        }
        let width = |v: f64| -> Result<f64> { Ok(self.equilibrium_position(v)? - self.equilibrium_position(-v)?) };
        let mut hi = span / self.equilibrium_slope(0.0)?.abs() * 0.5;
        let mut lo = 0.0;
        for _ in 0..60 {
            match width(hi) {
                Ok(w) if w >= span => break,
                Ok(_) => {
                    lo = hi;
                    hi *= 1.25;
                }
                Err(e) => return Err(e),
            }
        }
        let f = |v: f64| width(v).map(|w| w - span).unwrap_or(f64::NAN);
        brent_root(f, lo, hi, 1e-12, 200).ok_or(Error::NonConvergence {
            iterations: 200,
            reason: "span voltage not bracketed".into(),
        })
    }
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}

impl PositionCurve for SegmentPotentialModel {
    fn position(&self, voltage: f64) -> Result<f64> {
        self.equilibrium_position(voltage)
    }

    fn slope(&self, voltage: f64) -> Result<f64> {
        self.equilibrium_slope(voltage)
    }
}
