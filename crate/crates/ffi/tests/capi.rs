use std::ffi::{c_char, CStr};
use std::path::Path;
use std::process::Command;
use std::ptr;

use vss_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { vss_last_error(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned();
    assert_eq!(s.len(), n.min(255));
    s
}

#[test]
fn critical_values() {
    assert_eq!(vss_critical_p(0, 2, 1, 1.0), 9.0);
    assert!((vss_critical_p(2, 2, 1, 1.0) - 11.0 / 3.0).abs() < 1e-12);
    assert_eq!(vss_critical_alpha(0, 2, 1, 2.0), -0.75);
}

#[test]
fn params_lifecycle_and_errors() {
    let mut h = ptr::null_mut();
    let s = unsafe { vss_params_new(2, 1, 2.0, 4.0, VssVariant::Monotone, &mut h) };
    assert_eq!(s, VssStatus::Ok);
    assert_eq!(unsafe { vss_params_beta(h) }, 5.0);
    unsafe { vss_params_free(h) };

    let s = unsafe { vss_params_new(2, 1, 0.5, 4.0, VssVariant::Monotone, &mut h) };
    assert_eq!(s, VssStatus::InvalidArgument);
    assert!(h.is_null());
    assert!(!last_error().is_empty());

    let s = unsafe { vss_params_new(2, 1, 2.0, 4.0, VssVariant::Monotone, ptr::null_mut()) };
    assert_eq!(s, VssStatus::NullPointer);
    unsafe { vss_params_free(ptr::null_mut()) };
}

#[test]
fn profile_near_first_bifurcation() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { vss_params_new(2, 1, 4.8, 0.0, VssVariant::Monotone, &mut h) }, VssStatus::Ok);
    let mut prof = ptr::null_mut();
    let s = unsafe { vss_profile_from_bifurcation(h, 0, &mut prof) };
    assert_eq!(s, VssStatus::Ok, "{}", last_error());
    let amp = unsafe { vss_profile_amplitude(prof) };
    assert!(amp > 0.0 && amp.is_finite());
    assert_eq!(unsafe { vss_profile_dominant_extrema(prof) }, 1);
    let mut r = f64::NAN;
    assert_eq!(unsafe { vss_profile_identity_residual(prof, &mut r) }, VssStatus::Ok);
    assert!(r < 1e-6);
    let n = unsafe { vss_profile_len(prof) };
    let mut y = vec![0.0; n];
    let mut v = vec![0.0; n];
    assert_eq!(unsafe { vss_profile_copy(prof, y.as_mut_ptr(), v.as_mut_ptr(), n - 1) }, VssStatus::BufferTooSmall);
    assert_eq!(unsafe { vss_profile_copy(prof, y.as_mut_ptr(), v.as_mut_ptr(), n) }, VssStatus::Ok);
    assert_eq!(y[0], 0.0);
    assert_eq!(v[0], amp);
    unsafe {
        vss_profile_free(prof);
        vss_params_free(h);
    }
}

#[test]
fn blowup_summary() {
    let init = [1.0, 0.0, 0.0, 0.0];
    let mut out = VssBlowupSummary::default();
    assert_eq!(unsafe { vss_blowup(2.0, init.as_ptr(), &mut out) }, VssStatus::Ok);
    assert!(out.y0 > 0.0 && out.y0.is_finite());
    assert_eq!(out.mu_expected, -4.0);
    assert!((out.mu_fit / out.mu_expected - 1.0).abs() < 0.1);
}

#[test]
fn mu0_matches_first_eigenvalue() {
    let mut v = 0.0;
    assert_eq!(unsafe { vss_mu0(2, 1, 0.0, &mut v) }, VssStatus::Ok);
    assert!((v + 0.25).abs() < 1e-6);
    assert_eq!(unsafe { vss_mu0(0, 1, 0.0, &mut v) }, VssStatus::InvalidArgument);
}

#[test]
fn variant_names() {
    let mut v = VssVariant::Monotone;
    assert_eq!(unsafe { vss_variant_from_name(c"nonmonotone".as_ptr(), &mut v) }, VssStatus::Ok);
    assert_eq!(v, VssVariant::NonMonotone);
    assert_eq!(unsafe { vss_variant_from_name(c"other".as_ptr(), &mut v) }, VssStatus::InvalidArgument);
    let ver = unsafe { CStr::from_ptr(vss_version()) }.to_str().unwrap();
    assert_eq!(ver, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vss.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["vss_params_new", "vss_profile_free", "VSS_STATUS_NO_CONVERGENCE", "typedef struct VssProfile VssProfile"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
