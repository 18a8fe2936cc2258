use std::ffi::{c_char, CString};
use std::ptr;

use ionlattice_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { il_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn lattice_period_matches_closed_form() {
    let mut out = 0.0;
    let alpha = 2.0 * (397.0f64 / 520.0).asin();
    assert_eq!(unsafe { il_lattice_period(397e-9, alpha, &mut out) }, IlStatus::Ok);
    assert!((out - 260e-9).abs() < 1e-15);
    assert_eq!(il_last_error_length(), 0);
}

#[test]
fn invalid_angle_reports_message() {
    let mut out = -1.0;
    let s = unsafe { il_lattice_period(397e-9, 0.0, &mut out) };
    assert_eq!(s, IlStatus::InvalidArgument);
    assert!(last_error().contains("beam_angle"));
    assert_eq!(il_last_error_length(), last_error().len());
}

#[test]
fn null_out_pointer_is_rejected() {
    assert_eq!(unsafe { il_lattice_period(397e-9, 1.7, ptr::null_mut()) }, IlStatus::NullPointer);
    assert!(last_error().contains("out"));
}

#[test]
fn short_error_buffer_truncates() {
    let mut out = 0.0;
    unsafe { il_stark_shift(-1.0, 1.0, 0.0, 0.0, &mut out) };
    let mut buf = [1 as c_char; 8];
    let s = unsafe { il_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(s, IlStatus::BufferTooSmall);
    assert_eq!(buf[7], 0);
}

#[test]
fn stark_shift_at_node_and_antinode() {
    let k = 2.0 * std::f64::consts::PI / 260e-9;
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(il_stark_shift(2.0, k, 0.0, 0.0, &mut a), IlStatus::Ok);
        assert_eq!(il_stark_shift(2.0, k, 0.0, 65e-9, &mut b), IlStatus::Ok);
    }
    assert!((a - 2.0).abs() < 1e-12);
    assert!(b.abs() < 1e-9);
}

#[test]
fn echo_signal_is_a_probability() {
    let mut s = -1.0;
    let status = unsafe { il_thermal_echo_signal(0.4, 0.21, 0.0, 0.0, 0.0, &mut s) };
    assert_eq!(status, IlStatus::Ok);
    assert!((s - 1.0).abs() < 1e-12);
    let status = unsafe { il_thermal_echo_signal(-1.0, 0.21, 0.0, 0.0, 0.0, &mut s) };
    assert_ne!(status, IlStatus::Ok);
}

#[test]
fn lock_round_trip() {
    let cfg = CString::new(r#"{"schema_version": 1, "seed": 5}"#).unwrap();
    let mut trace = ptr::null_mut();
    assert_eq!(unsafe { il_lock_run(cfg.as_ptr(), 60.0, &mut trace) }, IlStatus::Ok);
    assert!(!trace.is_null());
    let n = unsafe { il_lock_trace_len(trace) };
    assert_eq!(n, 120);
    let mut buf = vec![0.0; n];
    assert_eq!(unsafe { il_lock_trace_residuals(trace, buf.as_mut_ptr(), n - 1) }, IlStatus::BufferTooSmall);
    assert_eq!(unsafe { il_lock_trace_residuals(trace, buf.as_mut_ptr(), n) }, IlStatus::Ok);
    let (mut rms, mut lost) = (0.0, usize::MAX);
    assert_eq!(unsafe { il_lock_trace_stats(trace, &mut rms, &mut lost) }, IlStatus::Ok);
    let direct = (buf.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    assert!((rms - direct).abs() < 1e-15);
    assert_eq!(lost, 0);
    unsafe { il_lock_trace_free(trace) };
    unsafe { il_lock_trace_free(ptr::null_mut()) };
}

#[test]
fn malformed_config_is_config_error() {
    let cfg = CString::new(r#"{"schema_version": 1}"#).unwrap();
    let mut trace = std::ptr::dangling_mut::<IlLockTrace>();
    assert_eq!(unsafe { il_lock_run(cfg.as_ptr(), 0.0, &mut trace) }, IlStatus::Config);
    assert!(trace.is_null());
    assert!(last_error().contains("seed"));
}

#[test]
fn map_handles() {
    let c = [8e-6, 0.0, 1e-8, 0.0, 6e-11];
    let mut map = ptr::null_mut();
    assert_eq!(unsafe { il_map_new(c.as_ptr(), &mut map) }, IlStatus::Ok);
    let (mut z, mut d) = (0.0, 0.0);
    unsafe {
        assert_eq!(il_map_evaluate(map, 2.0, &mut z), IlStatus::Ok);
        assert_eq!(il_map_derivative(map, 2.0, &mut d), IlStatus::Ok);
    }
    assert!((z - (16e-6 + 8e-8 + 32.0 * 6e-11)).abs() < 1e-18);
    assert!((d - (8e-6 + 12e-8 + 80.0 * 6e-11)).abs() < 1e-18);
    let mut all = [1.0; 6];
    assert_eq!(unsafe { il_map_coefficients(map, all.as_mut_ptr()) }, IlStatus::Ok);
    assert_eq!(all, [0.0, 8e-6, 0.0, 1e-8, 0.0, 6e-11]);
    unsafe { il_map_free(map) };
}

#[test]
fn trap_map_has_calibrated_slope() {
    let mut map = ptr::null_mut();
    let s = unsafe { il_map_from_trap(250e-6, 250e-6, 300e-6, 8e-6, 8.6, &mut map) };
    assert_eq!(s, IlStatus::Ok, "{}", last_error());
    let mut d = 0.0;
    unsafe { il_map_derivative(map, 0.0, &mut d) };
    assert!((d - 8e-6).abs() < 0.05e-6);
    unsafe { il_map_free(map) };
    let s = unsafe { il_map_from_trap(-1.0, 250e-6, 300e-6, 8e-6, 8.6, &mut map) };
    assert_ne!(s, IlStatus::Ok);
    assert!(map.is_null());
}
