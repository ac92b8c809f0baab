//! C interface to `reachcert`.
//!
//! Every function returns an [`RcStatus`]. Results come back through out
//! pointers. Objects are opaque heap handles released with the matching
//! `*_free` function; freeing null is a no-op. After a non-OK status,
//! [`rc_last_error`] describes the failure on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use reachcert::config::RunConfig;
use reachcert::groundtruth::read_grid_file;
use reachcert::valuefn::{analytic_by_name, load_network};
use reachcert::verify::{required_samples, scenario_verify};
use reachcert::{Error, Mode, Perturbation, SystemModel, ValueFunctionHandle, VerifyConfig, VerifyResult};

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Malformed = 4,
    Config = 5,
    SamplingExhausted = 6,
    Panic = 7,
}

/// Problem mode: 0 keeps the system out of its target set, 1 drives it in.
pub const RC_MODE_AVOID: i32 = 0;
pub const RC_MODE_REACH: i32 = 1;

/// Opaque dynamical system.
pub struct RcSystem(SystemModel);

/// Opaque value function bound to a system.
pub struct RcValueFunction(ValueFunctionHandle);

/// Opaque verification result.
pub struct RcCertificate(VerifyResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RcStatus {
    match e {
        Error::InvalidParameter(_)
        | Error::Domain(_)
        | Error::Cfl { .. }
        | Error::Dimension(_)
        | Error::OutOfDomain { .. }
        | Error::GridTooLarge { .. } => RcStatus::InvalidArgument,
        Error::Io { .. } => RcStatus::Io,
        Error::Malformed { .. } | Error::Json(_) => RcStatus::Malformed,
        Error::Config(_) => RcStatus::Config,
        Error::SamplingExhausted { .. } => RcStatus::SamplingExhausted,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RcStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            RcStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            RcStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            RcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    Ok(PathBuf::from(str_arg(p, "path")?))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn state_arg<'a>(x: *const f64, len: usize, vf: &ValueFunctionHandle) -> Result<&'a [f64], Fail> {
    if x.is_null() {
        return Err(Fail::Null("state"));
    }
    if len != vf.state_dim() {
        return Err(Fail::Arg(format!("state has {len} entries, value function expects {}", vf.state_dim())));
    }
    Ok(std::slice::from_raw_parts(x, len))
}

fn mode_arg(mode: i32) -> Result<Mode, Fail> {
    match mode {
        RC_MODE_AVOID => Ok(Mode::Avoid),
        RC_MODE_REACH => Ok(Mode::Reach),
        m => Err(Fail::Arg(format!("unknown mode {m}"))),
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread. Empty if none.
#[no_mangle]
pub extern "C" fn rc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Per-iteration sample count for violation level `epsilon` and confidence
/// `1 - beta`.
///
/// # Safety
/// `out_n` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_required_samples(epsilon: f64, beta: f64, out_n: *mut u64) -> RcStatus {
    guard(|| {
        let o = out(out_n, "out_n")?;
        *o = required_samples(epsilon, beta)? as u64;
        Ok(())
    })
}

/// # Safety
/// `out_system` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_system_dubins3d(
    v: f64,
    u_min: f64,
    u_max: f64,
    radius: f64,
    mode: i32,
    out_system: *mut *mut RcSystem,
) -> RcStatus {
    guard(|| {
        let o = out(out_system, "out_system")?;
        let sys = SystemModel::dubins3d(v, u_min, u_max, radius)?.with_mode(mode_arg(mode)?);
        *o = Box::into_raw(Box::new(RcSystem(sys)));
        Ok(())
    })
}

/// Builds the system described by a run configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_system` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_system_from_config(path: *const c_char, out_system: *mut *mut RcSystem) -> RcStatus {
    guard(|| {
        let o = out(out_system, "out_system")?;
        let sys = RunConfig::load(path_arg(path)?)?.system()?;
        *o = Box::into_raw(Box::new(RcSystem(sys)));
        Ok(())
    })
}

/// # Safety
/// `system` must come from this library; `out_dim` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_system_state_dim(system: *const RcSystem, out_dim: *mut usize) -> RcStatus {
    guard(|| {
        *out(out_dim, "out_dim")? = deref(system, "system")?.0.state_dim();
        Ok(())
    })
}

/// # Safety
/// `system` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rc_system_free(system: *mut RcSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

unsafe fn new_vf(
    system: *const RcSystem,
    out_vf: *mut *mut RcValueFunction,
    make: impl FnOnce(&SystemModel) -> Result<ValueFunctionHandle, Fail>,
) -> RcStatus {
    guard(|| {
        let o = out(out_vf, "out_vf")?;
        let vf = make(&deref(system, "system")?.0)?;
        *o = Box::into_raw(Box::new(RcValueFunction(vf)));
        Ok(())
    })
}

/// Loads a solved grid file.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rc_value_function_load_grid(
    system: *const RcSystem,
    path: *const c_char,
    out_vf: *mut *mut RcValueFunction,
) -> RcStatus {
    new_vf(system, out_vf, |sys| {
        let gvf = read_grid_file(path_arg(path)?)?;
        Ok(ValueFunctionHandle::grid(Arc::new(gvf), sys)?)
    })
}

/// Loads a sinusoidal network weights file.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rc_value_function_load_weights(
    system: *const RcSystem,
    path: *const c_char,
    out_vf: *mut *mut RcValueFunction,
) -> RcStatus {
    new_vf(system, out_vf, |sys| {
        let net = load_network(path_arg(path)?)?;
        Ok(ValueFunctionHandle::network(Arc::new(net), sys)?)
    })
}

/// Built-in closed-form value function by name (`target`,
/// `straight_line_separation`, `ballistic_landing`).
///
/// # Safety
/// Pointers must be valid; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rc_value_function_analytic(
    system: *const RcSystem,
    name: *const c_char,
    out_vf: *mut *mut RcValueFunction,
) -> RcStatus {
    new_vf(system, out_vf, |sys| Ok(analytic_by_name(str_arg(name, "name")?, sys)?))
}

/// A new value function equal to `base + bias`. `base` stays valid.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_value_function_with_bias(
    base: *const RcValueFunction,
    bias: f64,
    out_vf: *mut *mut RcValueFunction,
) -> RcStatus {
    guard(|| {
        let o = out(out_vf, "out_vf")?;
        let vf = ValueFunctionHandle::perturb(deref(base, "base")?.0.clone(), Perturbation::UniformBias { bias })?;
        *o = Box::into_raw(Box::new(RcValueFunction(vf)));
        Ok(())
    })
}

/// Value at state `x` (length `len`) and time `t`.
///
/// # Safety
/// `x` must point to `len` doubles; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn rc_value_function_value(
    vf: *const RcValueFunction,
    x: *const f64,
    len: usize,
    t: f64,
    out_value: *mut f64,
) -> RcStatus {
    guard(|| {
        let vf = &deref(vf, "vf")?.0;
        let x = state_arg(x, len, vf)?;
        *out(out_value, "out_value")? = vf.value(x, t);
        Ok(())
    })
}

/// # Safety
/// `vf` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rc_value_function_free(vf: *mut RcValueFunction) {
    if !vf.is_null() {
        drop(Box::from_raw(vf));
    }
}

/// Runs iterative scenario verification with default iteration cap and
/// rollout step. `workers = 0` uses the global thread pool.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_verify(
    vf: *const RcValueFunction,
    system: *const RcSystem,
    epsilon: f64,
    beta: f64,
    seed: u64,
    workers: usize,
    out_certificate: *mut *mut RcCertificate,
) -> RcStatus {
    guard(|| {
        let o = out(out_certificate, "out_certificate")?;
        let vf = &deref(vf, "vf")?.0;
        let sys = &deref(system, "system")?.0;
        let cfg = VerifyConfig::new(epsilon, beta, seed);
        let result = if workers == 0 {
            scenario_verify(vf, sys, &cfg)?
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Fail::Arg(format!("cannot start {workers} workers: {e}")))?;
            pool.install(|| scenario_verify(vf, sys, &cfg))?
        };
        *o = Box::into_raw(Box::new(RcCertificate(result)));
        Ok(())
    })
}

/// Certified level. May be infinite.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_certificate_delta_hat(cert: *const RcCertificate, out_delta: *mut f64) -> RcStatus {
    guard(|| {
        *out(out_delta, "out_delta")? = deref(cert, "cert")?.0.delta_hat;
        Ok(())
    })
}

/// Writes 1 if a violation-free batch was reached, else 0.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_certificate_converged(cert: *const RcCertificate, out_flag: *mut i32) -> RcStatus {
    guard(|| {
        *out(out_flag, "out_flag")? = i32::from(deref(cert, "cert")?.0.converged);
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_certificate_iterations(cert: *const RcCertificate, out_n: *mut usize) -> RcStatus {
    guard(|| {
        *out(out_n, "out_n")? = deref(cert, "cert")?.0.iterations;
        Ok(())
    })
}

/// Writes 1 if `x` lies in the certified set, else 0.
///
/// # Safety
/// `x` must point to `len` doubles; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn rc_certificate_contains(
    cert: *const RcCertificate,
    vf: *const RcValueFunction,
    x: *const f64,
    len: usize,
    out_flag: *mut i32,
) -> RcStatus {
    guard(|| {
        let cert = &deref(cert, "cert")?.0;
        let vf = &deref(vf, "vf")?.0;
        let x = state_arg(x, len, vf)?;
        *out(out_flag, "out_flag")? = i32::from(cert.recovered_member(vf, x));
        Ok(())
    })
}

/// Writes the full result as JSON.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rc_certificate_write_json(cert: *const RcCertificate, path: *const c_char) -> RcStatus {
    guard(|| {
        let cert = &deref(cert, "cert")?.0;
        let path = path_arg(path)?;
        let text = serde_json::to_string_pretty(cert).map_err(Error::from)?;
        std::fs::write(&path, text).map_err(|e| Fail::Lib(Error::Io { path, source: e }))
    })
}

/// # Safety
/// `cert` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rc_certificate_free(cert: *mut RcCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}
