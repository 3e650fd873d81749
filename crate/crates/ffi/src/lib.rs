//! C ABI over `wadc-core`. Every entry point returns a [`WadcStatus`];
//! results go through out-pointers. On failure the message is kept per
//! thread and can be fetched with [`wadc_last_error_message`].
//!
//! Handles are opaque: create with a `wadc_system_*` constructor, release
//! with [`wadc_system_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::os::raw::c_int;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use wadc_core::delaychain::{enumerate_switching_states, SwitchedSystem};
use wadc_core::linalg::Mat;
use wadc_core::lmi::{self, LmiVerdict, SolverOptions};
use wadc_core::pdcsim::DelaySequence;
use wadc_core::ssmodel::{self, CtStateSpace};
use wadc_core::stability::{self, StabilityVerdict};
use wadc_core::timesim;
use wadc_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WadcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Parse = 4,
    Numerical = 5,
    DelayRange = 6,
    NoStableDelay = 7,
    TooFewPeaks = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WadcVerdictKind {
    Stable = 0,
    Unstable = 1,
    Undetermined = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WadcLmiKind {
    Feasible = 0,
    Undetermined = 1,
    NecessaryFail = 2,
}

/// Swing mode of one switching state.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WadcModePoint {
    pub n: usize,
    pub mu_re: f64,
    pub mu_im: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub zeta: f64,
    pub spectral_radius: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WadcDampingBounds {
    pub zeta_min: f64,
    pub zeta_max: f64,
    pub mu_abs_min: f64,
    pub mu_abs_max: f64,
    pub argmin_delay: usize,
    pub argmax_delay: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WadcVerdict {
    pub kind: WadcVerdictKind,
    /// Offending delay when unstable, 0 otherwise.
    pub witness_delay: usize,
    pub spectral_radius: f64,
    pub max_misalignment: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WadcLmiResult {
    pub kind: WadcLmiKind,
    /// Smallest certified margin (feasible) or final residual (undetermined).
    pub margin: f64,
    pub epsilon: f64,
    pub iterations: usize,
    /// Unstable state index for NecessaryFail.
    pub witness: usize,
}

/// Opaque switched closed-loop family.
pub struct WadcSystem {
    inner: SwitchedSystem,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> WadcStatus {
    match e {
        Error::DimensionMismatch(_) | Error::InvalidDimension(_) | Error::FeedthroughUnsupported => {
            WadcStatus::DimensionMismatch
        }
        Error::Parse(_) | Error::NonFiniteEntry(_) => WadcStatus::Parse,
        Error::InvalidArgument(_) | Error::InvalidProbability(_) | Error::CalibrationFailed(_) => {
            WadcStatus::InvalidArgument
        }
        Error::DelayOutOfRange { .. }
        | Error::DelayTooSmall(_)
        | Error::DelayOutOfFamily(_)
        | Error::InvalidRange { .. } => WadcStatus::DelayRange,
        Error::NoStableDelay(_) => WadcStatus::NoStableDelay,
        Error::TooFewPeaks(_) => WadcStatus::TooFewPeaks,
        _ => WadcStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (WadcStatus, String)>) -> WadcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WadcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            WadcStatus::Panic
        }
    }
}

fn core<T>(r: wadc_core::Result<T>) -> Result<T, (WadcStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (WadcStatus, String) {
    (WadcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn system_ref<'a>(system: *const WadcSystem) -> Result<&'a SwitchedSystem, (WadcStatus, String)> {
    system.as_ref().map(|s| &s.inner).ok_or_else(|| null("system"))
}

fn build(
    ct: &CtStateSpace,
    h: f64,
    gain: Mat,
    n_min: usize,
    n_max: usize,
    out: *mut *mut WadcSystem,
) -> Result<(), (WadcStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let plant = core(ssmodel::discretize_trapezoidal(ct, h))?;
    let inner = core(enumerate_switching_states(&plant, &gain, n_min, n_max))?;
    // SAFETY: checked non-null above; caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(WadcSystem { inner })) };
    Ok(())
}

/// Single-machine infinite-bus plant with scalar speed-feedback `gain`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_smib(
    h: f64,
    gain: f64,
    n_min: usize,
    n_max: usize,
    out: *mut *mut WadcSystem,
) -> WadcStatus {
    guard(|| build(&ssmodel::build_smib(), h, Mat::from_element(1, 1, gain), n_min, n_max, out))
}

/// Second-order modal surrogate with open-loop mode `lambda_re ± j lambda_im`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_surrogate(
    lambda_re: f64,
    lambda_im: f64,
    h: f64,
    gain: f64,
    n_min: usize,
    n_max: usize,
    out: *mut *mut WadcSystem,
) -> WadcStatus {
    guard(|| {
        let ct = core(ssmodel::build_modal_surrogate(Complex64::new(lambda_re, lambda_im), 1.0, 1.0))?;
        build(&ct, h, Mat::from_element(1, 1, gain), n_min, n_max, out)
    })
}

/// Plant from a JSON model document. `gain` is row-major `m x p` with
/// `gain_len == m * p`.
///
/// # Safety
/// `json` must be a NUL-terminated string, `gain` must point to `gain_len`
/// doubles and `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_from_model_json(
    json: *const c_char,
    h: f64,
    gain: *const f64,
    gain_len: usize,
    n_min: usize,
    n_max: usize,
    out: *mut *mut WadcSystem,
) -> WadcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if gain.is_null() {
            return Err(null("gain"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (WadcStatus::Parse, e.to_string()))?;
        let ct = core(ssmodel::load_model(text))?;
        let (m, p) = (ct.n_inputs(), ct.n_outputs());
        if gain_len != m * p {
            return Err((
                WadcStatus::DimensionMismatch,
                format!("gain has {gain_len} entries, model needs {m}x{p}"),
            ));
        }
        let k = Mat::from_row_slice(m, p, std::slice::from_raw_parts(gain, gain_len));
        build(&ct, h, k, n_min, n_max, out)
    })
}

/// # Safety
/// `system` must come from a `wadc_system_*` constructor and not be used
/// afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_free(system: *mut WadcSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// # Safety
/// `system` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_state_count(system: *const WadcSystem, out: *mut usize) -> WadcStatus {
    guard(|| {
        let s = system_ref(system)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = s.len();
        Ok(())
    })
}

/// Stacked state dimension (plant plus delay chain).
///
/// # Safety
/// `system` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_dimension(system: *const WadcSystem, out: *mut usize) -> WadcStatus {
    guard(|| {
        let s = system_ref(system)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = s.dim();
        Ok(())
    })
}

/// Swing mode at delay `n` (in steps).
///
/// # Safety
/// `system` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_swing_mode(
    system: *const WadcSystem,
    n: usize,
    out: *mut WadcModePoint,
) -> WadcStatus {
    guard(|| {
        let s = system_ref(system)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let st = core(s.state(n).ok_or(Error::DelayOutOfFamily(n)))?;
        let lambda = core(ssmodel::dt_to_ct_eig(st.mu(), s.h))?;
        *out = WadcModePoint {
            n,
            mu_re: st.mu().re,
            mu_im: st.mu().im,
            lambda_re: lambda.re,
            lambda_im: lambda.im,
            zeta: st.damping_ct,
            spectral_radius: st.spectral_radius,
        };
        Ok(())
    })
}

/// # Safety
/// `system` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_damping_bounds(
    system: *const WadcSystem,
    out: *mut WadcDampingBounds,
) -> WadcStatus {
    guard(|| {
        let s = system_ref(system)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let b = stability::damping_bounds(s);
        *out = WadcDampingBounds {
            zeta_min: b.zeta_min,
            zeta_max: b.zeta_max,
            mu_abs_min: b.mu_abs_min,
            mu_abs_max: b.mu_abs_max,
            argmin_delay: b.argmin_delay,
            argmax_delay: b.argmax_delay,
        };
        Ok(())
    })
}

/// Eigenvalue-modulus verdict. `constancy_tol <= 0` selects the default.
///
/// # Safety
/// `system` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_simplified_verdict(
    system: *const WadcSystem,
    constancy_tol: f64,
    out: *mut WadcVerdict,
) -> WadcStatus {
    guard(|| {
        let s = system_ref(system)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let tol = if constancy_tol > 0.0 {
            constancy_tol
        } else {
            stability::DEFAULT_CONSTANCY_TOL
        };
        let rho = s.states.iter().map(|st| st.spectral_radius).fold(0.0, f64::max);
        let misalignment = core(stability::check_eigenvector_constancy(s, tol))?.max_misalignment;
        let (kind, witness) = match core(stability::simplified_verdict(s, tol))? {
            StabilityVerdict::Stable { .. } => (WadcVerdictKind::Stable, 0),
            StabilityVerdict::Unstable { witness_delay, .. } => (WadcVerdictKind::Unstable, witness_delay),
            StabilityVerdict::Undetermined { .. } => (WadcVerdictKind::Undetermined, 0),
        };
        *out = WadcVerdict {
            kind,
            witness_delay: witness,
            spectral_radius: rho,
            max_misalignment: misalignment,
        };
        Ok(())
    })
}

/// Lyapunov LMI test: one shared `P` when `common != 0`, otherwise one `P`
/// per state. `epsilon <= 0` selects the scale-aware default.
///
/// # Safety
/// `system` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_lmi(
    system: *const WadcSystem,
    common: c_int,
    epsilon: f64,
    out: *mut WadcLmiResult,
) -> WadcStatus {
    guard(|| {
        let s = system_ref(system)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let states = s.matrices();
        let opts = SolverOptions {
            epsilon: (epsilon > 0.0).then_some(epsilon),
            ..SolverOptions::default()
        };
        let verdict = if common != 0 {
            core(lmi::common_p_solve(&states, &opts))?
        } else {
            core(lmi::lmi_solve(&states, &opts))?
        };
        let eps = opts.epsilon.unwrap_or_else(|| lmi::default_epsilon(&states));
        *out = match verdict {
            LmiVerdict::Feasible {
                certificate,
                epsilon,
                iterations,
            } => WadcLmiResult {
                kind: WadcLmiKind::Feasible,
                margin: certificate.min_margin(),
                epsilon,
                iterations,
                witness: 0,
            },
            LmiVerdict::Undetermined { iterations, residual } => WadcLmiResult {
                kind: WadcLmiKind::Undetermined,
                margin: residual,
                epsilon: eps,
                iterations,
                witness: 0,
            },
            LmiVerdict::NecessaryFail {
                witness,
                spectral_radius,
            } => WadcLmiResult {
                kind: WadcLmiKind::NecessaryFail,
                margin: spectral_radius,
                epsilon: eps,
                iterations: 0,
                witness,
            },
        };
        Ok(())
    })
}

/// Closed-loop response to a swing-mode kick of `magnitude` at step 0 under
/// the delay sequence `delays[0..len]`. Writes output channel 0 for steps
/// `0..=len` into `y` (capacity `y_len >= len + 1`).
///
/// # Safety
/// `system` must be a live handle, `delays` must point to `len` entries and
/// `y` to `y_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wadc_system_simulate(
    system: *const WadcSystem,
    delays: *const usize,
    len: usize,
    magnitude: f64,
    y: *mut f64,
    y_len: usize,
) -> WadcStatus {
    guard(|| {
        let s = system_ref(system)?;
        if delays.is_null() && len > 0 {
            return Err(null("delays"));
        }
        if y.is_null() {
            return Err(null("y"));
        }
        if y_len < len + 1 {
            return Err((WadcStatus::InvalidArgument, format!("y holds {y_len}, need {}", len + 1)));
        }
        let entries = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(delays, len).to_vec()
        };
        let seq = core(DelaySequence::new(entries, s.n_min(), s.n_max_delay(), None))?;
        let kick = core(timesim::fault_disturbance(s, magnitude, 0))?;
        let traj = core(timesim::simulate_switched(s, &seq, &vec![0.0; s.dim()], &[kick]))?;
        let out = std::slice::from_raw_parts_mut(y, y_len);
        for (slot, row) in out.iter_mut().zip(&traj.outputs) {
            *slot = row[0];
        }
        Ok(())
    })
}

/// Gain giving the modal surrogate a delay margin of `target` steps.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wadc_calibrate_surrogate_gain(
    lambda_re: f64,
    lambda_im: f64,
    h: f64,
    target: usize,
    out: *mut f64,
) -> WadcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = core(stability::calibrate_surrogate_gain(
            Complex64::new(lambda_re, lambda_im),
            h,
            target,
            stability::CalibrationOptions::default(),
        ))?;
        Ok(())
    })
}

/// Copies the calling thread's last error into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length; pass a
/// null `buf` to query it.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wadc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
