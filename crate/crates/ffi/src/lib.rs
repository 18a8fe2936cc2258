//! C ABI for the ionlattice simulator.
//!
//! Every function returns an [`IlStatus`]; results are written through out
//! pointers. On failure the message is kept per thread and can be copied out
//! with [`il_last_error_message`]. Handles are opaque and must be released
//! with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::ptr;

use ionlattice::config::ExperimentConfig;
use ionlattice::echo::ThermalEchoModel;
use ionlattice::harness::lock_trace;
use ionlattice::lock::{residual_stats, LockTrace};
use ionlattice::position::{PolynomialMap, SegmentPotentialModel};
use ionlattice::{Error, MotionalState, PhysicalParams, StandingWaveField};

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Truncation = 4,
    NoEquilibrium = 5,
    NonConvergence = 6,
    Config = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Lock-loop trace produced by [`il_lock_run`].
pub struct IlLockTrace {
    inner: LockTrace,
}

/// Fifth-order voltage-to-position map.
pub struct IlPolynomialMap {
    inner: PolynomialMap,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IlStatus {
    match e {
        Error::Domain(_) => IlStatus::Domain,
        Error::InvalidParameter { .. } => IlStatus::InvalidArgument,
        Error::TruncationInsufficient { .. } => IlStatus::Truncation,
        Error::NoEquilibrium { .. } | Error::MultipleEquilibria { .. } => IlStatus::NoEquilibrium,
        Error::NonConvergence { .. } => IlStatus::NonConvergence,
        Error::Config(_) | Error::Json(_) => IlStatus::Config,
        Error::Io(_) | Error::Csv(_) => IlStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Status(IlStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard<F>(f: F) -> IlStatus
where
    F: FnOnce() -> Result<(), Failure> + UnwindSafe,
{
    match catch_unwind(f) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IlStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("null pointer passed as `{name}`"));
            IlStatus::NullPointer
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_last_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            IlStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or(Failure::Null(name))
}

unsafe fn in_ref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or(Failure::Null(name))
}

/// Length in bytes of the last error message on this thread, excluding the
/// terminator; zero when the last call succeeded.
#[no_mangle]
pub extern "C" fn il_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copy the last error message into `buf` as a NUL-terminated string.
/// Messages longer than `len - 1` bytes are truncated and
/// `IL_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn il_last_error_message(buf: *mut c_char, len: usize) -> IlStatus {
    if buf.is_null() || len == 0 {
        return IlStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        unsafe {
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        if n < bytes.len() {
            IlStatus::BufferTooSmall
        } else {
            IlStatus::Ok
        }
    })
}

/// Standing-wave period (m) for laser wavelength `lambda` (m) and full beam
/// angle `beam_angle` (rad).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn il_lattice_period(lambda: f64, beam_angle: f64, out: *mut f64) -> IlStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let params = PhysicalParams {
            lambda_laser: lambda,
            beam_angle,
            ..PhysicalParams::default()
        };
        params.validate()?;
        *out = ionlattice::lattice_period(&params)?;
        Ok(())
    })
}

/// Differential Stark shift (rad/s) at position `z` (m).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn il_stark_shift(
    stark_amplitude: f64,
    wavevector: f64,
    phase: f64,
    z: f64,
    out: *mut f64,
) -> IlStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let field = StandingWaveField::new(stark_amplitude, wavevector, phase)?;
        *out = ionlattice::stark_shift(&field, z);
        Ok(())
    })
}

/// Thermally and jitter-averaged echo signal at lattice phase `theta` and
/// pulse area `area` (rad).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn il_thermal_echo_signal(
    nbar: f64,
    eta: f64,
    phase_jitter_rms: f64,
    theta: f64,
    area: f64,
    out: *mut f64,
) -> IlStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        if !(theta.is_finite() && area.is_finite()) {
            return Err(Failure::Status(IlStatus::InvalidArgument, "theta and area must be finite".into()));
        }
        let motion = MotionalState::thermal(nbar)?;
        let model = ThermalEchoModel::new(&motion, eta, phase_jitter_rms)?;
        *out = model.signal(theta, area);
        Ok(())
    })
}

/// Run the lock loop described by a JSON experiment configuration.
/// `duration_s <= 0` uses the configured duration. On success `*out` owns a
/// new trace.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn il_lock_run(
    config_json: *const c_char,
    duration_s: f64,
    out: *mut *mut IlLockTrace,
) -> IlStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        if config_json.is_null() {
            return Err(Failure::Null("config_json"));
        }
        let text = unsafe { CStr::from_ptr(config_json) }
            .to_str()
            .map_err(|_| Failure::Status(IlStatus::Config, "configuration is not valid UTF-8".into()))?;
        let cfg = ExperimentConfig::from_json(text)?;
        let duration = (duration_s > 0.0).then_some(duration_s);
        let trace = lock_trace(&cfg, duration)?;
        *out = Box::into_raw(Box::new(IlLockTrace { inner: trace }));
        Ok(())
    })
}

/// Number of update slots in the trace; zero for a null handle.
///
/// # Safety
/// `trace` must be null or a handle from [`il_lock_run`].
#[no_mangle]
pub unsafe extern "C" fn il_lock_trace_len(trace: *const IlLockTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.inner.len())
}

/// Copy the residual phase (rad) of every slot into `buf`.
///
/// # Safety
/// `trace` must be a handle from [`il_lock_run`]; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn il_lock_trace_residuals(trace: *const IlLockTrace, buf: *mut f64, len: usize) -> IlStatus {
    guard(|| {
        let trace = unsafe { in_ref(trace, "trace") }?;
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        let src = &trace.inner.residual_phase;
        if len < src.len() {
            return Err(Failure::Status(
                IlStatus::BufferTooSmall,
                format!("buffer holds {len} values, trace has {}", src.len()),
            ));
        }
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
        Ok(())
    })
}

/// Rms residual phase (rad) and number of lock-lost slots.
///
/// # Safety
/// `trace` must be a handle from [`il_lock_run`]; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn il_lock_trace_stats(
    trace: *const IlLockTrace,
    rms: *mut f64,
    lock_lost: *mut usize,
) -> IlStatus {
    guard(|| {
        let trace = unsafe { in_ref(trace, "trace") }?;
        let rms = unsafe { out_ref(rms, "rms") }?;
        let lost = unsafe { out_ref(lock_lost, "lock_lost") }?;
        let stats = residual_stats(&trace.inner)?;
        *rms = stats.rms;
        *lost = stats.lock_lost_count;
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle from [`il_lock_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn il_lock_trace_free(trace: *mut IlLockTrace) {
    if !trace.is_null() {
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Map from the five coefficients `c1..c5` (m/V^i); the constant term is zero.
///
/// # Safety
/// `coefficients` must point to five doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn il_map_new(coefficients: *const f64, out: *mut *mut IlPolynomialMap) -> IlStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        if coefficients.is_null() {
            return Err(Failure::Null("coefficients"));
        }
        let mut c = [0.0; 5];
        unsafe { ptr::copy_nonoverlapping(coefficients, c.as_mut_ptr(), 5) };
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Failure::Status(IlStatus::InvalidArgument, "coefficients must be finite".into()));
        }
        *out = Box::into_raw(Box::new(IlPolynomialMap {
            inner: PolynomialMap::new(c),
        }));
        Ok(())
    })
}

/// Fifth-order map fitted to the equilibrium position of a segmented trap
/// over `[-range, range]` V. Lengths in metres, `feedthrough` in m/V.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn il_map_from_trap(
    pitch: f64,
    width: f64,
    decay: f64,
    feedthrough: f64,
    range: f64,
    out: *mut *mut IlPolynomialMap,
) -> IlStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        let model = SegmentPotentialModel::calibrated(pitch, width, decay, feedthrough)?;
        let map = PolynomialMap::from_curve(&model, range, 401)?;
        *out = Box::into_raw(Box::new(IlPolynomialMap { inner: map }));
        Ok(())
    })
}

/// Position (m) at shift voltage `v` (V).
///
/// # Safety
/// `map` must be a handle from this library and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn il_map_evaluate(map: *const IlPolynomialMap, v: f64, out: *mut f64) -> IlStatus {
    guard(|| {
        let map = unsafe { in_ref(map, "map") }?;
        let out = unsafe { out_ref(out, "out") }?;
        *out = map.inner.evaluate(v);
        Ok(())
    })
}

/// Slope dz/dV (m/V) at shift voltage `v`.
///
/// # Safety
/// `map` must be a handle from this library and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn il_map_derivative(map: *const IlPolynomialMap, v: f64, out: *mut f64) -> IlStatus {
    guard(|| {
        let map = unsafe { in_ref(map, "map") }?;
        let out = unsafe { out_ref(out, "out") }?;
        *out = map.inner.derivative(v);
        Ok(())
    })
}

/// Copy `c0..c5` into `out`, which must hold six doubles.
///
/// # Safety
/// `map` must be a handle from this library; `out` must hold six doubles.
#[no_mangle]
pub unsafe extern "C" fn il_map_coefficients(map: *const IlPolynomialMap, out: *mut f64) -> IlStatus {
    guard(|| {
        let map = unsafe { in_ref(map, "map") }?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let c = &map.inner.coefficients;
        unsafe { ptr::copy_nonoverlapping(c.as_ptr(), out, c.len()) };
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn il_map_free(map: *mut IlPolynomialMap) {
    if !map.is_null() {
        drop(unsafe { Box::from_raw(map) });
    }
}
