//! C ABI over the `arz-etc` simulation library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! functions and released by the matching `*_free`. Every fallible function
//! returns an [`ArzStatus`]; the message of the most recent failure on the
//! calling thread is available from [`arz_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use arz_etc::config::{Controller, SimConfig};
use arz_etc::runner::{run, Setup, SimResult};
use arz_etc::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Parse = 4,
    Solver = 5,
    Composition = 6,
    Simulation = 7,
    Invariant = 8,
    Io = 9,
    Domain = 10,
    Shape = 11,
    InsufficientData = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

impl From<&Error> for ArzStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => Self::Domain,
            Error::Config(_) => Self::Config,
            Error::Shape { .. } => Self::Shape,
            Error::Solver { .. } => Self::Solver,
            Error::Composition { .. } => Self::Composition,
            Error::Simulation { .. } => Self::Simulation,
            Error::Invariant { .. } => Self::Invariant,
            Error::InsufficientData(_) => Self::InsufficientData,
            Error::Io(_) | Error::Csv(_) => Self::Io,
            Error::Parse(_) => Self::Parse,
        }
    }
}

/// Run configuration handle.
pub struct ArzConfig(SimConfig);

/// Solved kernels and derived constants for one configuration.
pub struct ArzSetup(Setup);

/// Completed run.
pub struct ArzResult(SimResult);

/// Headline numbers of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ArzSummary {
    /// Number of control updates, the one at `t = 0` included.
    pub n_t: u64,
    /// Mean time between updates [min].
    pub mean_dwell_min: f64,
    /// Shortest time between updates [min].
    pub min_dwell_min: f64,
    pub j_ttt: f64,
    pub j_fuel: f64,
    pub j_d: f64,
    /// Final over initial `‖w̄‖ + ‖v̄‖`.
    pub norm_ratio: f64,
    /// Whether every closed-loop property check passed.
    pub invariants_ok: bool,
    pub wall_clock_s: f64,
}

/// Trigger design constants of a setup.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ArzConstants {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub theta_m: f64,
    pub tau_d: f64,
    pub b: f64,
    pub b_star: f64,
    pub rho_star: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(ArzStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(ArzStatus::from(&e), e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ArzStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ArzStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            ArzStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(ArzStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ArzStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(ArzStatus::NullPointer, format!("{what} is null")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(ArzStatus::NullPointer, format!("{what} is null")))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn arz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn arz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a preset by name or a TOML file by path.
///
/// # Safety
/// `spec` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn arz_config_load(spec: *const c_char, out: *mut *mut ArzConfig) -> ArzStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = SimConfig::load(str_arg(spec, "spec")?)?;
        *out = Box::into_raw(Box::new(ArzConfig(cfg)));
        Ok(())
    })
}

/// Releases a configuration; null is ignored.
///
/// # Safety
/// `cfg` must come from [`arz_config_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn arz_config_free(cfg: *mut ArzConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Selects the controller: `open-loop`, `continuous` or a trigger kind such
/// as `P-CETC`.
///
/// # Safety
/// `cfg` must be a live handle and `controller` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn arz_config_set_controller(cfg: *mut ArzConfig, controller: *const c_char) -> ArzStatus {
    guard(|| {
        let cfg = mut_arg(cfg, "cfg")?;
        let ctl: Controller = str_arg(controller, "controller")?.parse()?;
        cfg.0.control.controller = ctl;
        Ok(())
    })
}

/// Sets the resource-aware parameter `c` of the barrier triggers.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn arz_config_set_c(cfg: *mut ArzConfig, c: f64) -> ArzStatus {
    guard(|| {
        let cfg = mut_arg(cfg, "cfg")?;
        let mut next = cfg.0.clone();
        next.trigger.c = c;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Sets the simulated horizon in hours.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn arz_config_set_horizon(cfg: *mut ArzConfig, hours: f64) -> ArzStatus {
    guard(|| {
        let cfg = mut_arg(cfg, "cfg")?;
        let mut next = cfg.0.clone();
        next.grid.horizon = hours;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Solves the kernels and derives the trigger constants for `cfg`.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn arz_setup_new(cfg: *const ArzConfig, out: *mut *mut ArzSetup) -> ArzStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let setup = Setup::prepare(&ref_arg(cfg, "cfg")?.0)?;
        *out = Box::into_raw(Box::new(ArzSetup(setup)));
        Ok(())
    })
}

/// Releases a setup; null is ignored.
///
/// # Safety
/// `setup` must come from [`arz_setup_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn arz_setup_free(setup: *mut ArzSetup) {
    if !setup.is_null() {
        drop(Box::from_raw(setup));
    }
}

/// Copies the derived trigger constants into `out`.
///
/// # Safety
/// `setup` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn arz_setup_constants(setup: *const ArzSetup, out: *mut ArzConstants) -> ArzStatus {
    guard(|| {
        let c = &ref_arg(setup, "setup")?.0.constants;
        *mut_arg(out, "out")? = ArzConstants {
            kappa1: c.kappa1,
            kappa2: c.kappa2,
            kappa3: c.kappa3,
            theta_m: c.theta_m,
            tau_d: c.tau_d,
            b: c.b,
            b_star: c.b_star,
            rho_star: c.rho_star,
        };
        Ok(())
    })
}

/// Runs one closed loop. The setup must have been built from a
/// configuration with the same model, grid and design parameters.
///
/// # Safety
/// `cfg` and `setup` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn arz_run(cfg: *const ArzConfig, setup: *const ArzSetup, out: *mut *mut ArzResult) -> ArzStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let result = run(&ref_arg(cfg, "cfg")?.0, &ref_arg(setup, "setup")?.0)?;
        *out = Box::into_raw(Box::new(ArzResult(result)));
        Ok(())
    })
}

/// Releases a result; null is ignored.
///
/// # Safety
/// `result` must come from [`arz_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn arz_result_free(result: *mut ArzResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Copies the headline numbers of a run into `out`.
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn arz_result_summary(result: *const ArzResult, out: *mut ArzSummary) -> ArzStatus {
    guard(|| {
        let s = ref_arg(result, "result")?.0.summary();
        *mut_arg(out, "out")? = ArzSummary {
            n_t: s.n_t as u64,
            mean_dwell_min: s.mean_dwell_min,
            min_dwell_min: s.min_dwell_min,
            j_ttt: s.j_ttt,
            j_fuel: s.j_fuel,
            j_d: s.j_d,
            norm_ratio: s.norm_ratio,
            invariants_ok: s.invariants_ok,
            wall_clock_s: s.wall_clock_s,
        };
        Ok(())
    })
}

/// Copies the update times [h] into `buf`. `len` is the capacity of `buf`;
/// the number of events is always stored in `written`. A null `buf` with
/// zero `len` queries the count alone.
///
/// # Safety
/// `result` must be a live handle, `written` a valid pointer and `buf`
/// valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn arz_result_event_times(
    result: *const ArzResult,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> ArzStatus {
    guard(|| {
        let events = &ref_arg(result, "result")?.0.events;
        let written = mut_arg(written, "written")?;
        *written = events.len();
        if len == 0 && buf.is_null() {
            return Ok(());
        }
        if buf.is_null() {
            return Err(Failure(ArzStatus::NullPointer, "buf is null".into()));
        }
        if len < events.len() {
            return Err(Failure(
                ArzStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", events.len()),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(buf, len);
        for (d, e) in dst.iter_mut().zip(events) {
            *d = e.t;
        }
        Ok(())
    })
}

/// Writes trace, events, summary and report files into `dir`.
///
/// # Safety
/// `result` must be a live handle and `dir` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn arz_result_write(result: *const ArzResult, dir: *const c_char) -> ArzStatus {
    guard(|| {
        let r = &ref_arg(result, "result")?.0;
        arz_etc::io::write_run(Path::new(str_arg(dir, "dir")?), r)?;
        Ok(())
    })
}
