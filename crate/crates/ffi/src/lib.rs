//! C ABI over vss-core.
//!
//! Every fallible call returns a [`VssStatus`]; on failure the message is kept
//! per thread and can be read with [`vss_last_error`]. Handles are opaque and
//! owned by the caller until passed to the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vss_core::blowup::{run_blowup, BlowupConfig};
use vss_core::branch::{profile_from_bifurcation, StepControl};
use vss_core::classify::{dominant_extrema, mass_identity, DEFAULT_DELTA};
use vss_core::params::{critical_alpha, critical_p, Parity, ProblemParams, Variant};
use vss_core::shoot::{solve_profile, Guess, ProfileSolution, ShootConfig};
use vss_core::spectral::{mu0, KernelTable};
use vss_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VssStatus {
    Ok = 0,
    NullPointer = 1,
    /// Solver or continuation failed to converge.
    NoConvergence = 2,
    InvalidArgument = 3,
    /// Result computed but flagged (identity violated, unreliable estimate).
    Anomaly = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VssVariant {
    Monotone = 0,
    NonMonotone = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VssParity {
    Even = 0,
    Odd = 1,
}

/// Problem parameters (m, N, p, α, variant).
pub struct VssParams(ProblemParams);

/// A converged similarity profile.
pub struct VssProfile(ProfileSolution);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VssBlowupSummary {
    pub y0: f64,
    pub mu_fit: f64,
    pub mu_expected: f64,
    pub ratio_mean: f64,
    pub ratio_stddev: f64,
    pub zero_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut v = e.borrow_mut();
        v.clear();
        v.extend(msg.bytes().filter(|b| *b != 0));
    });
}

fn status_of(e: &Error) -> VssStatus {
    match e.exit_code() {
        3 => VssStatus::InvalidArgument,
        4 => VssStatus::Anomaly,
        _ => VssStatus::NoConvergence,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (VssStatus, String)>) -> VssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            VssStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("panic inside vss");
            VssStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (VssStatus, String) {
    (status_of(&e), e.to_string())
}

fn null() -> (VssStatus, String) {
    (VssStatus::NullPointer, "null pointer argument".into())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated, truncated to `len`).
/// Returns the full message length excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vss_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn vss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[no_mangle]
pub extern "C" fn vss_critical_p(l: u32, m: u32, n: u32, alpha: f64) -> f64 {
    critical_p(l, m, n, alpha)
}

#[no_mangle]
pub extern "C" fn vss_critical_alpha(l: u32, m: u32, n: u32, p: f64) -> f64 {
    critical_alpha(l, m, n, p)
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vss_mu0(m: u32, n: u32, alpha: f64, out: *mut f64) -> VssStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(null)?;
        if m == 0 || n == 0 {
            return Err((VssStatus::InvalidArgument, "m and N must be positive".into()));
        }
        let kernel = KernelTable::new(m, 2);
        *out = mu0(m, n, alpha, &kernel).map_err(core_err)?;
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer; the handle written there is freed with [`vss_params_free`].
#[no_mangle]
pub unsafe extern "C" fn vss_params_new(m: u32, n: u32, p: f64, alpha: f64, variant: VssVariant, out: *mut *mut VssParams) -> VssStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(null)?;
        *out = ptr::null_mut();
        let v = match variant {
            VssVariant::Monotone => Variant::Monotone,
            VssVariant::NonMonotone => Variant::NonMonotone,
        };
        let params = ProblemParams::new(m, n, p, alpha, v).map_err(core_err)?;
        *out = Box::into_raw(Box::new(VssParams(params)));
        Ok(())
    })
}

/// # Safety
/// `params` must be null or a handle from [`vss_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vss_params_free(params: *mut VssParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// β = (1+α)/(p-1).
///
/// # Safety
/// `params` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vss_params_beta(params: *const VssParams) -> f64 {
    params.as_ref().map_or(f64::NAN, |p| p.0.beta())
}

fn parity(p: VssParity) -> Parity {
    match p {
        VssParity::Even => Parity::Even,
        VssParity::Odd => Parity::Odd,
    }
}

/// Shoots from the free parameters `guess[0..len]` (len = m).
///
/// # Safety
/// `params` must be a live handle, `guess` must point to `len` doubles, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vss_profile_solve(params: *const VssParams, par: VssParity, guess: *const f64, len: usize, out: *mut *mut VssProfile) -> VssStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(null)?;
        *out = ptr::null_mut();
        let params = params.as_ref().ok_or_else(null)?;
        if guess.is_null() {
            return Err(null());
        }
        let c = std::slice::from_raw_parts(guess, len).to_vec();
        let sol = solve_profile(&params.0, parity(par), &Guess::Params(c), &ShootConfig::default()).map_err(core_err)?;
        *out = Box::into_raw(Box::new(VssProfile(sol)));
        Ok(())
    })
}

/// Follows the p-branch born at critical index `l` down to the parameters' p.
///
/// # Safety
/// `params` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vss_profile_from_bifurcation(params: *const VssParams, l: u32, out: *mut *mut VssProfile) -> VssStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(null)?;
        *out = ptr::null_mut();
        let params = params.as_ref().ok_or_else(null)?;
        let sol = profile_from_bifurcation(&params.0, l, &StepControl::default(), &ShootConfig::default()).map_err(core_err)?;
        *out = Box::into_raw(Box::new(VssProfile(sol)));
        Ok(())
    })
}

/// # Safety
/// `profile` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vss_profile_free(profile: *mut VssProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// V(0) for even profiles, V'(0) for odd ones; NaN for a null handle.
///
/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vss_profile_amplitude(profile: *const VssProfile) -> f64 {
    profile.as_ref().map_or(f64::NAN, |p| p.0.amplitude)
}

/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vss_profile_sup_norm(profile: *const VssProfile) -> f64 {
    profile.as_ref().map_or(f64::NAN, |p| p.0.sup_norm)
}

/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vss_profile_dominant_extrema(profile: *const VssProfile) -> usize {
    profile.as_ref().map_or(0, |p| dominant_extrema(&p.0, DEFAULT_DELTA))
}

/// Relative residual of the integral identity.
///
/// # Safety
/// `profile` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vss_profile_identity_residual(profile: *const VssProfile, out: *mut f64) -> VssStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(null)?;
        let p = profile.as_ref().ok_or_else(null)?;
        *out = mass_identity(&p.0).map_err(core_err)?.mass_identity_residual;
        Ok(())
    })
}

/// Number of grid points on [0, L].
///
/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vss_profile_len(profile: *const VssProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.0.grid.len())
}

/// Copies the grid and V into caller buffers of length `cap`.
///
/// # Safety
/// `y` and `v` must each point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vss_profile_copy(profile: *const VssProfile, y: *mut f64, v: *mut f64, cap: usize) -> VssStatus {
    guard(|| {
        let p = profile.as_ref().ok_or_else(null)?;
        if y.is_null() || v.is_null() {
            return Err(null());
        }
        let n = p.0.grid.len();
        if cap < n {
            return Err((VssStatus::BufferTooSmall, format!("need {n} entries, got {cap}")));
        }
        let ys = std::slice::from_raw_parts_mut(y, n);
        let vs = std::slice::from_raw_parts_mut(v, n);
        ys.copy_from_slice(&p.0.grid);
        for (d, s) in vs.iter_mut().zip(&p.0.values) {
            *d = s[0];
        }
        Ok(())
    })
}

/// Integrates V'''' = -|V|^{p-1}V from `init` (4 values) to the blow-up point.
///
/// # Safety
/// `init` must point to 4 doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn vss_blowup(p: f64, init: *const f64, out: *mut VssBlowupSummary) -> VssStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(null)?;
        if init.is_null() {
            return Err(null());
        }
        let mut s = [0.0; 4];
        s.copy_from_slice(std::slice::from_raw_parts(init, 4));
        let o = run_blowup(p, &s, &BlowupConfig::default()).map_err(core_err)?;
        *out = VssBlowupSummary {
            y0: o.y0_est,
            mu_fit: o.mu_fit,
            mu_expected: o.mu_expected(),
            ratio_mean: o.ratio_stats.mean,
            ratio_stddev: o.ratio_stats.stddev,
            zero_count: o.zeros.len(),
        };
        if o.flagged {
            return Err((VssStatus::Anomaly, format!("y0 estimates {} and {} disagree", o.y0_est, o.y0_ladder)));
        }
        Ok(())
    })
}

/// Helper for C callers holding a NUL-terminated variant name.
///
/// # Safety
/// `name` must be null or a valid C string.
#[no_mangle]
pub unsafe extern "C" fn vss_variant_from_name(name: *const c_char, out: *mut VssVariant) -> VssStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(null)?;
        if name.is_null() {
            return Err(null());
        }
        *out = match CStr::from_ptr(name).to_str().unwrap_or("") {
            "monotone" => VssVariant::Monotone,
            "nonmonotone" => VssVariant::NonMonotone,
            other => return Err((VssStatus::InvalidArgument, format!("unknown variant {other:?}"))),
        };
        Ok(())
    })
}
