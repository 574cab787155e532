//! C ABI over the key-rate pipeline.
//!
//! Every function returns an [`SnsStatus`]; on failure a description is
//! kept per thread and read with [`sns_last_error`]. Tallies live behind an
//! opaque [`SnsTally`] handle that the caller frees with [`sns_tally_free`].
//! Strings returned by the library are freed with [`sns_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sns_qkd::cli;
use sns_qkd::io::report::report_to_json;
use sns_qkd::io::{parse_tally, parse_tally_str, RunConfig, TallyFile};
use sns_qkd::keyrate::{self, KeyRateInput, KeyRateReport};
use sns_qkd::model::{SecurityParams, SourceParams};
use sns_qkd::Error;

/// Result codes; the error classes share their values with the CLI exit
/// codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnsStatus {
    Ok = 0,
    Usage = 2,
    Parse = 3,
    Validation = 4,
    Vacuous = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Opaque parsed tally.
pub struct SnsTally {
    inner: TallyFile,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnsSource {
    pub mu_x: f64,
    pub mu_y: f64,
    pub p_v: f64,
    pub p_x: f64,
    pub p_y: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnsSecurity {
    pub eps_chernoff: f64,
    pub eps_cor: f64,
    pub eps_pa: f64,
    pub eps_hat: f64,
    /// Error-correction inefficiency.
    pub f: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnsKeyRateInput {
    pub n_total: u64,
    pub n1: f64,
    pub e1ph: f64,
    pub n_t: f64,
    pub e_t: f64,
    pub n_vy: u64,
    pub n_yv: u64,
    pub security: SnsSecurity,
    pub clock_hz: f64,
    /// End-to-end transmittance; NaN skips the PLOB comparison.
    pub eta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnsReport {
    pub r_per_pulse: f64,
    pub r_unclamped: f64,
    pub r_bps: f64,
    pub r_tail: f64,
    pub total_secure_bits: u64,
    /// NaN when no transmittance was known.
    pub plob_bound: f64,
    pub above_plob: bool,
    pub vacuous: bool,
    pub n1: f64,
    pub e1ph: f64,
    pub n_t: f64,
    pub e_t: f64,
}

impl From<SnsSecurity> for SecurityParams {
    fn from(s: SnsSecurity) -> Self {
        SecurityParams {
            eps_chernoff: s.eps_chernoff,
            eps_cor: s.eps_cor,
            eps_pa: s.eps_pa,
            eps_hat: s.eps_hat,
            f: s.f,
        }
    }
}

impl From<SecurityParams> for SnsSecurity {
    fn from(s: SecurityParams) -> Self {
        SnsSecurity {
            eps_chernoff: s.eps_chernoff,
            eps_cor: s.eps_cor,
            eps_pa: s.eps_pa,
            eps_hat: s.eps_hat,
            f: s.f,
        }
    }
}

impl From<SourceParams> for SnsSource {
    fn from(p: SourceParams) -> Self {
        SnsSource {
            mu_x: p.mu_x,
            mu_y: p.mu_y,
            p_v: p.p_v,
            p_x: p.p_x,
            p_y: p.p_y,
        }
    }
}

impl From<&KeyRateReport> for SnsReport {
    fn from(r: &KeyRateReport) -> Self {
        SnsReport {
            r_per_pulse: r.r_per_pulse,
            r_unclamped: r.r_unclamped,
            r_bps: r.r_bps,
            r_tail: r.r_tail,
            total_secure_bits: r.total_secure_bits,
            plob_bound: r.plob_bound.unwrap_or(f64::NAN),
            above_plob: r.above_plob(),
            vacuous: r.vacuous,
            n1: r.inputs.n1,
            e1ph: r.inputs.e1ph,
            n_t: r.inputs.n_t,
            e_t: r.inputs.e_t,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SnsStatus {
    match err.kind() {
        "usage" => SnsStatus::Usage,
        "parse" => SnsStatus::Parse,
        "vacuous-bound" | "insufficient-data" => SnsStatus::Vacuous,
        _ => SnsStatus::Validation,
    }
}

struct Failure(SnsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SnsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic for [`sns_last_error`].
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> SnsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SnsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SnsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(SnsStatus::Parse, format!("{what} is not UTF-8")))
}

unsafe fn config_arg(p: *const c_char) -> Result<RunConfig, Failure> {
    if p.is_null() {
        return Ok(RunConfig::default());
    }
    Ok(RunConfig::parse(unsafe { str_arg(p, "config") }?)?)
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

/// Description of the last failure on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn sns_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sns_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses tally JSON text into a new handle.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sns_tally_from_json(json: *const c_char, out: *mut *mut SnsTally) -> SnsStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        let text = unsafe { str_arg(json, "json") }?;
        let inner = parse_tally_str(text)?;
        *out = Box::into_raw(Box::new(SnsTally { inner }));
        Ok(())
    })
}

/// Reads and parses a tally file into a new handle.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sns_tally_from_file(path: *const c_char, out: *mut *mut SnsTally) -> SnsStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        let path = unsafe { str_arg(path, "path") }?;
        let inner = parse_tally(Path::new(path))?;
        *out = Box::into_raw(Box::new(SnsTally { inner }));
        Ok(())
    })
}

/// Releases a tally handle; null is ignored.
///
/// # Safety
/// `tally` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sns_tally_free(tally: *mut SnsTally) {
    if !tally.is_null() {
        drop(unsafe { Box::from_raw(tally) });
    }
}

/// Total pulse pairs and vacuum-signal detection counts of a tally.
///
/// # Safety
/// `tally` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sns_tally_counts(
    tally: *const SnsTally,
    n_total: *mut u64,
    n_vy: *mut u64,
    n_yv: *mut u64,
) -> SnsStatus {
    guard(|| {
        let t = &unsafe { tally.as_ref() }.ok_or_else(|| null("tally"))?.inner.tally;
        *unsafe { out_arg(n_total, "n_total") }? = t.n_total;
        *unsafe { out_arg(n_vy, "n_vy") }? = t.n_vy();
        *unsafe { out_arg(n_yv, "n_yv") }? = t.n_yv();
        Ok(())
    })
}

/// Default security parameters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sns_security_default(out: *mut SnsSecurity) -> SnsStatus {
    guard(|| {
        *unsafe { out_arg(out, "out") }? = SecurityParams::default().into();
        Ok(())
    })
}

/// Published source parameter set 1 or 2.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sns_source_preset(set: u32, out: *mut SnsSource) -> SnsStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        let p = SourceParams::preset(&set.to_string())
            .ok_or_else(|| Failure(SnsStatus::Validation, format!("no parameter set {set}")))?;
        *out = p.into();
        Ok(())
    })
}

/// Evaluates the rate formula.
///
/// # Safety
/// `input` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sns_secure_key_rate(input: *const SnsKeyRateInput, out: *mut SnsReport) -> SnsStatus {
    guard(|| {
        let i = unsafe { input.as_ref() }.ok_or_else(|| null("input"))?;
        let out = unsafe { out_arg(out, "out") }?;
        let report = keyrate::secure_key_rate(&KeyRateInput {
            n_total: i.n_total,
            n1: i.n1,
            e1ph: i.e1ph,
            n_t: i.n_t,
            e_t: i.e_t,
            n_vy: i.n_vy,
            n_yv: i.n_yv,
            sec: i.security.into(),
            clock_hz: i.clock_hz,
            eta: (!i.eta.is_nan()).then_some(i.eta),
        })?;
        *out = (&report).into();
        Ok(())
    })
}

fn analyze_tally(tally: *const SnsTally, config: *const c_char) -> Result<KeyRateReport, Failure> {
    let t = unsafe { tally.as_ref() }.ok_or_else(|| null("tally"))?;
    let cfg = unsafe { config_arg(config) }?;
    Ok(cli::analyze(&cfg, &t.inner)?)
}

/// Full pipeline on a tally. `config` is optional run-configuration JSON
/// (null for defaults and tally metadata). A vacuous bound still fills
/// `out` and returns `Vacuous`.
///
/// # Safety
/// `tally` must be a live handle, `config` null or a nul-terminated string,
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sns_analyze(tally: *const SnsTally, config: *const c_char, out: *mut SnsReport) -> SnsStatus {
    let mut vacuous = false;
    let status = guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        let report = analyze_tally(tally, config)?;
        vacuous = report.vacuous;
        *out = (&report).into();
        Ok(())
    });
    if status == SnsStatus::Ok && vacuous {
        set_error("bound is vacuous: no key can be certified".into());
        return SnsStatus::Vacuous;
    }
    status
}

/// Full pipeline on a tally, returning the complete report as JSON in
/// `*out`; free it with [`sns_string_free`].
///
/// # Safety
/// As for [`sns_analyze`]; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sns_analyze_json(
    tally: *const SnsTally,
    config: *const c_char,
    out: *mut *mut c_char,
) -> SnsStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        let report = analyze_tally(tally, config)?;
        *out = CString::new(report_to_json(&report))
            .expect("json has no nul")
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sns_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Binary Shannon entropy in bits.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sns_binary_entropy(x: f64, out: *mut f64) -> SnsStatus {
    guard(|| {
        *unsafe { out_arg(out, "out") }? = keyrate::binary_entropy(x)?;
        Ok(())
    })
}

/// Repeaterless bound `-log2(1 - eta)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sns_plob(eta: f64, out: *mut f64) -> SnsStatus {
    guard(|| {
        *unsafe { out_arg(out, "out") }? = keyrate::plob(eta)?;
        Ok(())
    })
}

/// Per-pulse finite-size correction term.
///
/// # Safety
/// `security` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sns_r_tail(
    n_total: u64,
    n_vy: u64,
    n_yv: u64,
    security: *const SnsSecurity,
    out: *mut f64,
) -> SnsStatus {
    guard(|| {
        let sec: SecurityParams = (*unsafe { security.as_ref() }.ok_or_else(|| null("security"))?).into();
        *unsafe { out_arg(out, "out") }? = keyrate::r_tail(n_total, n_vy, n_yv, &sec)?;
        Ok(())
    })
}
