//! C interface to the DNSSEC model.
//!
//! Scenarios and runs are opaque handles. Every call returns a [`DmStatus`];
//! on failure [`dm_last_error`] describes what went wrong on the calling
//! thread. Strings handed out are owned by the caller and released with
//! [`dm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dnssec_model::harness::properties::CatalogError;
use dnssec_model::harness::report;
use dnssec_model::harness::scenario::{Expectation, RunResult, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// The scenario file could not be read or did not validate.
    Scenario = 3,
    /// A property list or seed range did not parse, or named an unknown id.
    Usage = 4,
    /// Checked verdicts differ from the scenario's expectations.
    Deviation = 5,
    Panic = 6,
}

/// A verdict for one property.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmVerdict {
    Holds = 0,
    Falsified = 1,
}

/// A loaded scenario.
pub struct DmScenario(Scenario);

/// The outcome of one seeded run.
pub struct DmRun(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Ffi<T> = Result<T, (DmStatus, String)>;

fn guard(f: impl FnOnce() -> Ffi<()>) -> DmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            DmStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Ffi<&'a str> {
    if p.is_null() {
        return Err((DmStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (DmStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Ffi<&'a T> {
    p.as_ref().ok_or_else(|| (DmStatus::NullArgument, format!("{what} is null")))
}

fn out_ptr<T>(out: *mut T) -> Ffi<()> {
    if out.is_null() {
        Err((DmStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

fn string_out(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message left by the last call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn dm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a scenario file. Zone paths in it resolve against its directory.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_scenario_load(path: *const c_char, out: *mut *mut DmScenario) -> DmStatus {
    guard(|| {
        out_ptr(out)?;
        let path = text(path, "path")?;
        let s = Scenario::load(Path::new(path)).map_err(|e| (DmStatus::Scenario, e.to_string()))?;
        *out = Box::into_raw(Box::new(DmScenario(s)));
        Ok(())
    })
}

/// Parses scenario TOML held in memory; `base` is the file it stands for.
///
/// # Safety
/// `toml` and `base` must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_scenario_parse(toml: *const c_char, base: *const c_char, out: *mut *mut DmScenario) -> DmStatus {
    guard(|| {
        out_ptr(out)?;
        let body = text(toml, "toml")?;
        let base = text(base, "base")?;
        let s = Scenario::parse(body, Path::new(base)).map_err(|e| (DmStatus::Scenario, e.to_string()))?;
        *out = Box::into_raw(Box::new(DmScenario(s)));
        Ok(())
    })
}

/// # Safety
/// `s` must come from `dm_scenario_load` or `dm_scenario_parse`, or be null.
#[no_mangle]
pub unsafe extern "C" fn dm_scenario_free(s: *mut DmScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs the scenario once under `seed`.
///
/// # Safety
/// `s` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_scenario_run(s: *const DmScenario, seed: u64, out: *mut *mut DmRun) -> DmStatus {
    guard(|| {
        out_ptr(out)?;
        let s = handle(s, "scenario")?;
        *out = Box::into_raw(Box::new(DmRun(s.0.run(seed))));
        Ok(())
    })
}

/// # Safety
/// `r` must come from `dm_scenario_run`, or be null.
#[no_mangle]
pub unsafe extern "C" fn dm_run_free(r: *mut DmRun) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Number of events in the run's trace.
///
/// # Safety
/// `r` must be a live run handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_run_event_count(r: *const DmRun, out: *mut usize) -> DmStatus {
    guard(|| {
        out_ptr(out)?;
        *out = handle(r, "run")?.0.trace.len();
        Ok(())
    })
}

/// The run's trace as JSON lines. Free the result with `dm_string_free`.
///
/// # Safety
/// `r` must be a live run handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_run_trace_json(r: *const DmRun, out: *mut *mut c_char) -> DmStatus {
    guard(|| {
        out_ptr(out)?;
        *out = string_out(handle(r, "run")?.0.trace.to_json_lines());
        Ok(())
    })
}

/// Checks one property over seeds `[seed_start, seed_end)`. When the verdict is
/// `DM_VERDICT_FALSIFIED`, `dm_last_error` holds the counterexample's reason.
///
/// # Safety
/// `s` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_check_property(
    s: *const DmScenario,
    property: u8,
    seed_start: u64,
    seed_end: u64,
    out: *mut DmVerdict,
) -> DmStatus {
    guard(|| {
        out_ptr(out)?;
        let s = handle(s, "scenario")?;
        if seed_start >= seed_end {
            return Err((DmStatus::Usage, format!("empty seed range {seed_start}..{seed_end}")));
        }
        let rec = report::check(&s.0, Some(&[property]), Some(seed_start..seed_end)).map_err(catalog)?;
        let r = rec.first().expect("one property asked");
        *out = match r.result {
            Expectation::Holds => DmVerdict::Holds,
            Expectation::Falsified => DmVerdict::Falsified,
        };
        if let Some(reason) = &r.reason {
            set_error(reason.clone());
        }
        Ok(())
    })
}

fn catalog(e: CatalogError) -> (DmStatus, String) {
    (DmStatus::Usage, e.to_string())
}

/// Checks `props` (e.g. `"1-12,14"`, or null for the scenario's own list) over
/// `seeds` (`"500"` or `"A..B"`, or null for its default) and writes the report as
/// JSON lines to `out`. Returns `DM_STATUS_DEVIATION` when a verdict differs from
/// the expected one; the report is written either way.
///
/// # Safety
/// `s` must be a live scenario handle; `props` and `seeds` must be null or
/// nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_check_report(
    s: *const DmScenario,
    props: *const c_char,
    seeds: *const c_char,
    out: *mut *mut c_char,
) -> DmStatus {
    guard(|| {
        out_ptr(out)?;
        let s = handle(s, "scenario")?;
        let props = match props.is_null() {
            true => None,
            false => Some(report::parse_props(text(props, "props")?).map_err(|e| (DmStatus::Usage, e))?),
        };
        let seeds = match seeds.is_null() {
            true => None,
            false => Some(report::parse_seeds(text(seeds, "seeds")?).map_err(|e| (DmStatus::Usage, e))?),
        };
        let records = report::check(&s.0, props.as_deref(), seeds).map_err(catalog)?;
        *out = string_out(report::json_lines(&records));
        let off: Vec<String> = records.iter().filter(|r| !r.as_expected()).map(|r| format!("P{}", r.id)).collect();
        if off.is_empty() {
            Ok(())
        } else {
            Err((DmStatus::Deviation, format!("unexpected verdicts: {}", off.join(", "))))
        }
    })
}

/// # Safety
/// `p` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn dm_string_free(p: *mut c_char) {
    if !p.is_null() {
        drop(CString::from_raw(p));
    }
}
