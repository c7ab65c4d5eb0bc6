//! C ABI over `lyocert`.
//!
//! Conventions:
//! - every fallible call returns a [`LyoStatus`]; results go through out-pointers;
//! - objects are opaque handles, released with their `*_free` function;
//! - strings returned to the caller are released with [`lyo_string_free`];
//! - on failure, [`lyo_last_error`] describes the error of the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lyocert::cli::{certify_property, CertifyPlan};
use lyocert::comparison::{FunctionClass, ScalarFunction};
use lyocert::evidence::Status;
use lyocert::inference::{assume, infer_closure, PropertyId};
use lyocert::integral::{integral_transform, IntegralPolicy};
use lyocert::lyapunov::{construct_nclf, default_rho, LyapunovEvaluator, NclfPolicy};
use lyocert::system::{DisturbanceSignal, SystemConfig, SystemDef};
use lyocert::{Error, Evidence};

/// Error codes of the C API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyoStatus {
    LyoOk = 0,
    LyoNullPointer = 1,
    LyoInvalidArgument = 2,
    LyoParseError = 3,
    LyoClassViolation = 4,
    LyoPrecondition = 5,
    LyoFiniteEscape = 6,
    LyoNumerical = 7,
    LyoConfig = 8,
    LyoPanic = 9,
}

/// Verdict of a certificate; the values match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyoVerdict {
    LyoSupported = 0,
    LyoRefuted = 1,
    LyoInconclusive = 3,
}

impl From<Status> for LyoVerdict {
    fn from(s: Status) -> Self {
        match s {
            Status::Supported => LyoVerdict::LyoSupported,
            Status::Refuted => LyoVerdict::LyoRefuted,
            Status::Inconclusive => LyoVerdict::LyoInconclusive,
        }
    }
}

/// Class declared for a scalar comparison function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyoClass {
    LyoClassK = 0,
    LyoClassKinf = 1,
    LyoClassL = 2,
    LyoClassPositiveDefinite = 3,
    LyoClassNone = 4,
}

impl From<LyoClass> for FunctionClass {
    fn from(c: LyoClass) -> Self {
        match c {
            LyoClass::LyoClassK => FunctionClass::K,
            LyoClass::LyoClassKinf => FunctionClass::Kinf,
            LyoClass::LyoClassL => FunctionClass::L,
            LyoClass::LyoClassPositiveDefinite => FunctionClass::PositiveDefinite,
            LyoClass::LyoClassNone => FunctionClass::None,
        }
    }
}

/// A system Σ (opaque).
pub struct LyoSystem(SystemDef);
/// A scalar comparison function (opaque).
pub struct LyoScalar(ScalarFunction);
/// A certificate with status, margin, witness and parameters (opaque).
pub struct LyoEvidence(Evidence);
/// A Lyapunov function candidate (opaque).
pub struct LyoLyapunov(LyapunovEvaluator);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_of(e: &Error) -> LyoStatus {
    match e {
        Error::Syntax { .. } | Error::UnknownIdentifier { .. } | Error::UnknownFunction { .. } | Error::Arity { .. } => {
            LyoStatus::LyoParseError
        }
        Error::Json(_) | Error::Csv(_) => LyoStatus::LyoParseError,
        Error::InvalidArgument(_) | Error::Range { .. } => LyoStatus::LyoInvalidArgument,
        Error::ClassViolation(_) => LyoStatus::LyoClassViolation,
        Error::Precondition { .. } => LyoStatus::LyoPrecondition,
        Error::FiniteEscape { .. } => LyoStatus::LyoFiniteEscape,
        Error::RefinementBudget { .. } | Error::Integrator(_) => LyoStatus::LyoNumerical,
        Error::Config(_) | Error::Io(_) => LyoStatus::LyoConfig,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LyoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LyoStatus::LyoOk
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            LyoStatus::LyoNullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            code_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            LyoStatus::LyoPanic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs removed").into_raw()
}

fn disturbance(sys: &SystemDef, d: &[f64]) -> Result<DisturbanceSignal, Fail> {
    let m = sys.disturbance().dim();
    if m == 0 {
        return Ok(DisturbanceSignal::empty());
    }
    if d.len() != m {
        return Err(Fail::Lib(Error::InvalidArgument(format!(
            "disturbance has {} components, system expects {m}",
            d.len()
        ))));
    }
    Ok(DisturbanceSignal::constant(d.to_vec()))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn lyo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lyo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lyo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Build a system from its JSON config.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_system_from_json(json: *const c_char, out: *mut *mut LyoSystem) -> LyoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = SystemConfig::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(LyoSystem(cfg.build()?)));
        Ok(())
    })
}

/// Built-in system by name (e.g. "scalar_stable").
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_system_catalogue(name: *const c_char, out: *mut *mut LyoSystem) -> LyoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let sys = SystemDef::named(str_arg(name, "name")?)?;
        *out = Box::into_raw(Box::new(LyoSystem(sys)));
        Ok(())
    })
}

/// # Safety
/// `sys` comes from this library (or is NULL) and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lyo_system_free(sys: *mut LyoSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// State and disturbance dimensions.
///
/// # Safety
/// Pointers are valid; `state_dim` and `disturbance_dim` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn lyo_system_dimensions(
    sys: *const LyoSystem,
    state_dim: *mut usize,
    disturbance_dim: *mut usize,
) -> LyoStatus {
    guard(|| {
        let sys = &ref_arg(sys, "sys")?.0;
        if let Some(n) = state_dim.as_mut() {
            *n = sys.dimension();
        }
        if let Some(m) = disturbance_dim.as_mut() {
            *m = sys.disturbance().dim();
        }
        Ok(())
    })
}

/// φ(t, x, d) for the constant disturbance `d` (ignored for systems without
/// disturbance input). `out` receives `n` values.
///
/// # Safety
/// `x` and `out` point to `n` doubles, `d` to `m` doubles (or NULL with m = 0).
#[no_mangle]
pub unsafe extern "C" fn lyo_system_flow(
    sys: *const LyoSystem,
    t: f64,
    x: *const f64,
    n: usize,
    d: *const f64,
    m: usize,
    out: *mut f64,
) -> LyoStatus {
    guard(|| {
        let sys = &ref_arg(sys, "sys")?.0;
        if n != sys.dimension() {
            return Err(Fail::Lib(Error::InvalidArgument(format!(
                "state has {n} components, system expects {}",
                sys.dimension()
            ))));
        }
        let x = slice_arg(x, n, "x")?;
        let d = disturbance(sys, slice_arg(d, m, "d")?)?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let y = sys.flow(t, x, &d)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&y);
        Ok(())
    })
}

/// Scalar function from an expression in `r` with a declared class.
///
/// # Safety
/// `expr` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_scalar_parse(expr: *const c_char, class: LyoClass, out: *mut *mut LyoScalar) -> LyoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let f = ScalarFunction::expr(str_arg(expr, "expr")?, class.into())?;
        *out = Box::into_raw(Box::new(LyoScalar(f)));
        Ok(())
    })
}

/// # Safety
/// `f` is a valid handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_scalar_eval(f: *const LyoScalar, r: f64, out: *mut f64) -> LyoStatus {
    guard(|| {
        let f = &ref_arg(f, "f")?.0;
        *out_arg(out, "out")? = f.eval(r);
        Ok(())
    })
}

/// # Safety
/// `f` comes from this library (or is NULL) and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lyo_scalar_free(f: *mut LyoScalar) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// ∫_{t0}^∞ α(‖φ(s, x, d)‖) ds for a constant disturbance. `value` receives the
/// integral up to the horizon and `tail` the bound on the remainder (may be
/// infinite).
///
/// # Safety
/// Handles are valid; `x` has `n` doubles and `d` has `m`; outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_integral_transform(
    sys: *const LyoSystem,
    alpha: *const LyoScalar,
    x: *const f64,
    n: usize,
    d: *const f64,
    m: usize,
    t0: f64,
    value: *mut f64,
    tail: *mut f64,
) -> LyoStatus {
    guard(|| {
        let sys = &ref_arg(sys, "sys")?.0;
        let alpha = &ref_arg(alpha, "alpha")?.0;
        let x = slice_arg(x, n, "x")?;
        let d = disturbance(sys, slice_arg(d, m, "d")?)?;
        let value = out_arg(value, "value")?;
        let tail = out_arg(tail, "tail")?;
        let r = integral_transform(sys, alpha, x, &d, t0, &IntegralPolicy::default())?;
        *value = r.value;
        *tail = r.tail_bound;
        Ok(())
    })
}

/// Certify a property by name ("UGAS", "iUGS", ...). `plan_json` may be NULL
/// for the default plan; it has the shape of the `certify --plan` file.
///
/// # Safety
/// `sys` is valid, strings are NUL-terminated, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_certify(
    sys: *const LyoSystem,
    property: *const c_char,
    plan_json: *const c_char,
    out: *mut *mut LyoEvidence,
) -> LyoStatus {
    guard(|| {
        let sys = &ref_arg(sys, "sys")?.0;
        let out = out_arg(out, "out")?;
        let property = str_arg(property, "property")?;
        let plan: CertifyPlan = if plan_json.is_null() {
            CertifyPlan::default()
        } else {
            serde_json::from_str(str_arg(plan_json, "plan_json")?).map_err(Error::from)?
        };
        let (_, ev) = certify_property(property, sys, plan)?;
        *out = Box::into_raw(Box::new(LyoEvidence(ev)));
        Ok(())
    })
}

/// # Safety
/// `ev` is valid; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_evidence_verdict(ev: *const LyoEvidence, out: *mut LyoVerdict) -> LyoStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(ev, "ev")?.0.status.into();
        Ok(())
    })
}

/// Worst margin; `has_margin` is set to false when the check has none.
///
/// # Safety
/// `ev` is valid; outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_evidence_margin(ev: *const LyoEvidence, margin: *mut f64, has_margin: *mut bool) -> LyoStatus {
    guard(|| {
        let ev = &ref_arg(ev, "ev")?.0;
        let margin = out_arg(margin, "margin")?;
        let has = out_arg(has_margin, "has_margin")?;
        *has = ev.margin.is_some();
        *margin = ev.margin.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Full certificate as JSON; free with [`lyo_string_free`].
///
/// # Safety
/// `ev` is valid; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_evidence_to_json(ev: *const LyoEvidence, out: *mut *mut c_char) -> LyoStatus {
    guard(|| {
        let ev = &ref_arg(ev, "ev")?.0;
        let out = out_arg(out, "out")?;
        *out = into_c_string(serde_json::to_string(ev).map_err(Error::from)?);
        Ok(())
    })
}

/// # Safety
/// `ev` comes from this library (or is NULL) and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lyo_evidence_free(ev: *mut LyoEvidence) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

/// V̂(x) = max over the default ensemble of ∫₀^∞ ρ(‖φ(s, x, d)‖) ds. `rho` may
/// be NULL for min(r, 1); it must be bounded and of class K.
///
/// # Safety
/// `sys` is valid, `rho` is valid or NULL, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_nclf_construct(
    sys: *const LyoSystem,
    rho: *const LyoScalar,
    out: *mut *mut LyoLyapunov,
) -> LyoStatus {
    guard(|| {
        let sys = &ref_arg(sys, "sys")?.0;
        let out = out_arg(out, "out")?;
        let rho = rho.as_ref().map_or_else(default_rho, |r| r.0.clone());
        let v = construct_nclf(sys, &rho, &NclfPolicy::default())?;
        *out = Box::into_raw(Box::new(LyoLyapunov(v)));
        Ok(())
    })
}

/// Closed-form V from an expression in `x1, …, xn`.
///
/// # Safety
/// `expr` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_lyapunov_parse(expr: *const c_char, dimension: usize, out: *mut *mut LyoLyapunov) -> LyoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let v = LyapunovEvaluator::closed_form(str_arg(expr, "expr")?, dimension)?;
        *out = Box::into_raw(Box::new(LyoLyapunov(v)));
        Ok(())
    })
}

/// V(x). Safe to call from several threads on the same handle.
///
/// # Safety
/// `v` is valid, `x` has `n` doubles, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_lyapunov_eval(v: *const LyoLyapunov, x: *const f64, n: usize, out: *mut f64) -> LyoStatus {
    guard(|| {
        let v = &ref_arg(v, "v")?.0;
        let x = slice_arg(x, n, "x")?;
        *out_arg(out, "out")? = v.eval(x)?;
        Ok(())
    })
}

/// # Safety
/// `v` comes from this library (or is NULL) and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lyo_lyapunov_free(v: *mut LyoLyapunov) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Closure of a comma separated list of properties under the implication
/// rules, as a JSON array of names; free with [`lyo_string_free`].
///
/// # Safety
/// `assumptions` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lyo_infer_closure(assumptions: *const c_char, out: *mut *mut c_char) -> LyoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ids = str_arg(assumptions, "assumptions")?
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse::<PropertyId>)
            .collect::<Result<Vec<_>, _>>()?;
        let closure = infer_closure(&assume(&ids));
        *out = into_c_string(serde_json::to_string(&closure.properties).map_err(Error::from)?);
        Ok(())
    })
}
