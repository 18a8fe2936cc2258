//! Wide-range position mapping with the lattice as a ruler.

mod electrostatics;
mod fit;
mod map;
mod scan;

pub use electrostatics::SegmentPotentialModel;
pub use fit::{fit_polynomial_map, BranchFit, FitOptions, MapFitReport, WindowFit};
pub use map::{
    compare_curves, compare_to_electrostatics, max_position_error, DiscrepancyCurve, PolynomialMap, MAP_DEGREE,
};
pub use scan::{run_scan_plan, scan_signal, ScanKind, ScanPlan, ScanReadout, ScanRecord, ScanSpec};

use crate::error::Result;

/// Ion equilibrium position as a function of shift voltage.
pub trait PositionCurve {
    /// Position (m) at shift voltage `voltage` (V).
    fn position(&self, voltage: f64) -> Result<f64>;
    /// `dz/dV` (m/V).
    fn slope(&self, voltage: f64) -> Result<f64>;
}
