//! C ABI over `adadrop`.
//!
//! Objects are opaque handles created by `*_new`/`*_parse` and released by
//! the matching `*_free`. Every fallible call returns an [`AdStatus`]; on
//! failure [`ad_last_error_message`] describes the error for the calling
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use adadrop::dropout::{effective_penalty, vardrop_f, MaskFamily, MethodSpec};
use adadrop::harness::{run_solver, CurveItem, SolveTarget};
use adadrop::penalty::{EtaVector, PenaltySpec};
use adadrop::solvers::{standardize, Init, Problem, SolverConfig, SolverKind, StepSchedule, Trace};
use adadrop::special::dawson;
use adadrop::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Numerical = 4,
    Unsupported = 5,
    Panic = 6,
}

impl From<&Error> for AdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse { .. } => AdStatus::Parse,
            Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::NotStandardized { .. }
            | Error::ZeroColumn(_)
            | Error::EmptyDomain => AdStatus::InvalidArgument,
            Error::ScalarUnsupported(_) | Error::InvalidCombination(_) => AdStatus::Unsupported,
            _ => AdStatus::Numerical,
        }
    }
}

/// Mask family selector for [`AdSolverConfig::mask`].
pub const AD_MASK_NONE: i32 = -1;
pub const AD_MASK_BINARY: i32 = 0;
pub const AD_MASK_GAUSSIAN: i32 = 1;
pub const AD_MASK_BERNOULLI: i32 = 2;

/// Step schedule selector for [`AdSolverConfig::schedule`].
pub const AD_SCHEDULE_CONSTANT: i32 = 0;
pub const AD_SCHEDULE_LINEAR_DECAY: i32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AdSolverConfig {
    pub lambda: f64,
    pub step: f64,
    pub iters: usize,
    pub seed: u64,
    pub log_every: usize,
    pub mask: i32,
    pub schedule: i32,
    pub zero_tol: f64,
}

pub struct AdPenalty {
    spec: PenaltySpec,
}

pub struct AdProblem {
    problem: Problem,
    scales: Vec<f64>,
}

pub struct AdTrace {
    trace: Trace,
    dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: AdStatus, msg: impl Into<String>) -> AdStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> AdStatus {
    let s = AdStatus::from(&e);
    fail(s, e.to_string())
}

fn guard(f: impl FnOnce() -> AdStatus) -> AdStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(AdStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AdStatus> {
    if p.is_null() {
        return Err(fail(AdStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AdStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], AdStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(AdStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! out_ptr {
    ($p:expr) => {
        if $p.is_null() {
            return fail(AdStatus::NullPointer, concat!(stringify!($p), " is null"));
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ad_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a penalty such as `"logsum:eps=2"`.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_penalty_parse(spec: *const c_char, out: *mut *mut AdPenalty) -> AdStatus {
    guard(|| {
        out_ptr!(out);
        let s = tri!(str_arg(spec, "spec"));
        match s.parse::<PenaltySpec>() {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(AdPenalty { spec }));
                AdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `p` must come from [`ad_penalty_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ad_penalty_free(p: *mut AdPenalty) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// `Omega(w)` for a vector of length `len`.
///
/// # Safety
/// `w` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ad_penalty_omega(p: *const AdPenalty, w: *const f64, len: usize, out: *mut f64) -> AdStatus {
    guard(|| {
        out_ptr!(out);
        let p = tri!(p.as_ref().ok_or_else(|| fail(AdStatus::NullPointer, "penalty is null")));
        let w = tri!(slice_arg(w, len, "w"));
        *out = p.spec.omega(w);
        AdStatus::Ok
    })
}

/// Dual `f(eta)`; `+inf` outside its domain.
///
/// # Safety
/// `eta` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ad_penalty_f_dual(
    p: *const AdPenalty,
    eta: *const f64,
    len: usize,
    out: *mut f64,
) -> AdStatus {
    guard(|| {
        out_ptr!(out);
        let p = tri!(p.as_ref().ok_or_else(|| fail(AdStatus::NullPointer, "penalty is null")));
        let eta = tri!(slice_arg(eta, len, "eta"));
        match EtaVector::new(eta.to_vec()) {
            Ok(e) => {
                *out = p.spec.f_dual(&e);
                AdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Writes `eta_hat(w)` (entries may be `+inf`) to `eta_out`.
///
/// # Safety
/// `w` and `eta_out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ad_penalty_eta_hat(
    p: *const AdPenalty,
    w: *const f64,
    len: usize,
    eta_out: *mut f64,
) -> AdStatus {
    guard(|| {
        let p = tri!(p.as_ref().ok_or_else(|| fail(AdStatus::NullPointer, "penalty is null")));
        let w = tri!(slice_arg(w, len, "w"));
        if len > 0 && eta_out.is_null() {
            return fail(AdStatus::NullPointer, "eta_out is null");
        }
        let eta = p.spec.eta_hat(w);
        if len > 0 {
            std::slice::from_raw_parts_mut(eta_out, len).copy_from_slice(eta.as_slice());
        }
        AdStatus::Ok
    })
}

/// Dawson's integral.
#[no_mangle]
pub extern "C" fn ad_dawson(u: f64) -> f64 {
    dawson(u)
}

/// VariationalDropout dual `f(eta)` for keep scale `lambda`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_vardrop_f(eta: f64, lambda: f64, out: *mut f64) -> AdStatus {
    guard(|| {
        out_ptr!(out);
        match vardrop_f(eta, lambda) {
            Ok(v) => {
                *out = v;
                AdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Effective penalty of a dropout method (`"vardrop:lambda=1"`,
/// `"hardconcrete:lambda=1"`, `"standout:lambda=1,w2=1"`) at magnitude `w`.
///
/// # Safety
/// `method` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_effective_penalty(method: *const c_char, w: f64, out: *mut f64) -> AdStatus {
    guard(|| {
        out_ptr!(out);
        let s = tri!(str_arg(method, "method"));
        let m = match s.parse::<MethodSpec>() {
            Ok(m) => m,
            Err(e) => return from_error(e),
        };
        match effective_penalty(&m, w) {
            Ok(v) => {
                *out = v;
                AdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Defaults matching the command-line `solve` command.
#[no_mangle]
pub extern "C" fn ad_solver_config_default() -> AdSolverConfig {
    AdSolverConfig {
        lambda: 1.0,
        step: 0.1,
        iters: 200,
        seed: 0,
        log_every: 1,
        mask: AD_MASK_NONE,
        schedule: AD_SCHEDULE_CONSTANT,
        zero_tol: 1e-8,
    }
}

/// Builds a least-squares problem from row-major `x` (`n * d`) and `y`
/// (`n`). With `standardize != 0` the columns are rescaled to unit mean
/// square first; otherwise they must already be.
///
/// # Safety
/// `x` must hold `n * d` doubles, `y` `n` doubles, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_problem_new(
    x: *const f64,
    y: *const f64,
    n: usize,
    d: usize,
    standardize_columns: i32,
    out: *mut *mut AdProblem,
) -> AdStatus {
    guard(|| {
        out_ptr!(out);
        let Some(nd) = n.checked_mul(d) else {
            return fail(AdStatus::InvalidArgument, "n * d overflows");
        };
        let xs = tri!(slice_arg(x, nd, "x"));
        let ys = tri!(slice_arg(y, n, "y"));
        let built = Problem::from_rows(n, d, xs, ys).and_then(|p| {
            if standardize_columns != 0 {
                let (xm, scales) = standardize(p.x())?;
                Ok((Problem::new(xm, p.y().clone())?, scales))
            } else {
                Ok((p, vec![1.0; d]))
            }
        });
        match built {
            Ok((problem, scales)) => {
                *out = Box::into_raw(Box::new(AdProblem { problem, scales }));
                AdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Column scales applied by [`ad_problem_new`] (all 1 without
/// standardization).
///
/// # Safety
/// `scales_out` must hold `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn ad_problem_scales(p: *const AdProblem, scales_out: *mut f64) -> AdStatus {
    guard(|| {
        out_ptr!(scales_out);
        let p = tri!(p.as_ref().ok_or_else(|| fail(AdStatus::NullPointer, "problem is null")));
        std::slice::from_raw_parts_mut(scales_out, p.scales.len()).copy_from_slice(&p.scales);
        AdStatus::Ok
    })
}

/// # Safety
/// `p` must come from [`ad_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ad_problem_free(p: *mut AdProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn to_config(c: &AdSolverConfig) -> Result<SolverConfig, AdStatus> {
    let mask = match c.mask {
        AD_MASK_NONE => None,
        AD_MASK_BINARY => Some(MaskFamily::UnbiasedBinary),
        AD_MASK_GAUSSIAN => Some(MaskFamily::Gaussian),
        AD_MASK_BERNOULLI => Some(MaskFamily::BiasedBernoulli),
        m => return Err(fail(AdStatus::InvalidArgument, format!("unknown mask selector {m}"))),
    };
    let schedule = match c.schedule {
        AD_SCHEDULE_CONSTANT => StepSchedule::Constant,
        AD_SCHEDULE_LINEAR_DECAY => StepSchedule::LinearDecay,
        s => return Err(fail(AdStatus::InvalidArgument, format!("unknown schedule selector {s}"))),
    };
    Ok(SolverConfig {
        lambda: c.lambda,
        step: c.step,
        schedule,
        iters: c.iters,
        seed: c.seed,
        mask,
        log_every: c.log_every,
        init: Init::Zeros,
        zero_tol: c.zero_tol,
    })
}

/// Runs `solver` (`"irls"`, `"ada-prox"`, `"iht"`, ...) with `penalty`
/// (`"l1"`, `"vardrop:lambda=1"`, `"hardthresh:k=5"` for iht, ...).
/// A NULL `config` uses [`ad_solver_config_default`].
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_solve(
    problem: *const AdProblem,
    solver: *const c_char,
    penalty: *const c_char,
    config: *const AdSolverConfig,
    out: *mut *mut AdTrace,
) -> AdStatus {
    guard(|| {
        out_ptr!(out);
        let p = tri!(problem.as_ref().ok_or_else(|| fail(AdStatus::NullPointer, "problem is null")));
        let solver = tri!(str_arg(solver, "solver"));
        let penalty = tri!(str_arg(penalty, "penalty"));
        let cfg = config.as_ref().copied().unwrap_or_else(|| ad_solver_config_default());
        let cfg = tri!(to_config(&cfg));
        let kind = match solver.parse::<SolverKind>() {
            Ok(k) => k,
            Err(e) => return from_error(e),
        };
        let item = match CurveItem::parse(penalty, cfg.lambda) {
            Ok(i) => i,
            Err(e) => return from_error(e),
        };
        match run_solver(kind, &SolveTarget::Penalty(item.reg), &p.problem, &cfg) {
            Ok(trace) => {
                *out = Box::into_raw(Box::new(AdTrace {
                    trace,
                    dim: p.problem.d(),
                }));
                AdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of logged records; 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live trace.
#[no_mangle]
pub unsafe extern "C" fn ad_trace_len(t: *const AdTrace) -> usize {
    t.as_ref().map_or(0, |t| t.trace.records.len())
}

/// Dimension of the iterates; 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live trace.
#[no_mangle]
pub unsafe extern "C" fn ad_trace_dim(t: *const AdTrace) -> usize {
    t.as_ref().map_or(0, |t| t.dim)
}

/// Iteration number, risk and objective of record `i`. Any output pointer
/// may be NULL.
///
/// # Safety
/// `t` must be a live trace; non-NULL outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ad_trace_record(
    t: *const AdTrace,
    i: usize,
    iter: *mut usize,
    risk: *mut f64,
    objective: *mut f64,
) -> AdStatus {
    guard(|| {
        let t = tri!(t.as_ref().ok_or_else(|| fail(AdStatus::NullPointer, "trace is null")));
        let Some(r) = t.trace.records.get(i) else {
            return fail(AdStatus::InvalidArgument, format!("record {i} out of range"));
        };
        if !iter.is_null() {
            *iter = r.iter;
        }
        if !risk.is_null() {
            *risk = r.risk;
        }
        if !objective.is_null() {
            *objective = r.objective;
        }
        AdStatus::Ok
    })
}

/// Copies the iterate of record `i` into `w_out` (`ad_trace_dim` doubles).
///
/// # Safety
/// `w_out` must hold `ad_trace_dim(t)` doubles.
#[no_mangle]
pub unsafe extern "C" fn ad_trace_iterate(t: *const AdTrace, i: usize, w_out: *mut f64) -> AdStatus {
    guard(|| {
        out_ptr!(w_out);
        let t = tri!(t.as_ref().ok_or_else(|| fail(AdStatus::NullPointer, "trace is null")));
        let Some(r) = t.trace.records.get(i) else {
            return fail(AdStatus::InvalidArgument, format!("record {i} out of range"));
        };
        std::slice::from_raw_parts_mut(w_out, t.dim).copy_from_slice(&r.w);
        AdStatus::Ok
    })
}

/// # Safety
/// `t` must come from [`ad_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ad_trace_free(t: *mut AdTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
