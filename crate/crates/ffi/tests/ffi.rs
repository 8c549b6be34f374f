use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use dnssec_model_ffi::*;

fn scenario_path(name: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/fixtures/scenarios/{name}.toml"));
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = dm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(name: &str) -> *mut DmScenario {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { dm_scenario_load(scenario_path(name).as_ptr(), &mut s) }, DmStatus::Ok);
    assert!(!s.is_null());
    s
}

fn take(p: *mut std::ffi::c_char) -> String {
    let out = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { dm_string_free(p) };
    out
}

#[test]
fn run_and_trace_round_trip() {
    let s = load("downgrade");
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { dm_scenario_run(s, 0, &mut run) }, DmStatus::Ok);
    let mut n = 0usize;
    assert_eq!(unsafe { dm_run_event_count(run, &mut n) }, DmStatus::Ok);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { dm_run_trace_json(run, &mut json) }, DmStatus::Ok);
    let trace = take(json);
    assert_eq!(trace.lines().count(), n);
    assert!(trace.contains("alg_rewrite"));
    unsafe {
        dm_run_free(run);
        dm_scenario_free(s);
    }
}

#[test]
fn property_verdicts() {
    let s = load("mixed-gap");
    let mut v = DmVerdict::Holds;
    assert_eq!(unsafe { dm_check_property(s, 19, 0, 5, &mut v) }, DmStatus::Ok);
    assert_eq!(v, DmVerdict::Falsified);
    assert!(last_error().contains("contains existing"));
    assert_eq!(unsafe { dm_check_property(s, 5, 0, 5, &mut v) }, DmStatus::Ok);
    assert_eq!(v, DmVerdict::Holds);
    assert_eq!(unsafe { dm_check_property(s, 99, 0, 5, &mut v) }, DmStatus::Usage);
    assert!(last_error().contains("99"));
    assert_eq!(unsafe { dm_check_property(s, 5, 5, 5, &mut v) }, DmStatus::Usage);
    unsafe { dm_scenario_free(s) };
}

#[test]
fn report_and_deviation() {
    let s = load("baseline");
    let props = CString::new("1-3").unwrap();
    let seeds = CString::new("10").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dm_check_report(s, props.as_ptr(), seeds.as_ptr(), &mut out) }, DmStatus::Ok);
    assert_eq!(take(out).lines().count(), 3);

    let p19 = CString::new("19").unwrap();
    assert_eq!(unsafe { dm_check_report(s, p19.as_ptr(), seeds.as_ptr(), &mut out) }, DmStatus::Deviation);
    assert!(take(out).contains("\"holds\""));

    let bad = CString::new("0..0").unwrap();
    assert_eq!(unsafe { dm_check_report(s, ptr::null(), bad.as_ptr(), &mut out) }, DmStatus::Usage);
    unsafe { dm_scenario_free(s) };
}

#[test]
fn errors_are_reported() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { dm_scenario_load(ptr::null(), &mut s) }, DmStatus::NullArgument);
    let missing = CString::new("/nonexistent/x.toml").unwrap();
    assert_eq!(unsafe { dm_scenario_load(missing.as_ptr(), &mut s) }, DmStatus::Scenario);
    assert!(last_error().contains("/nonexistent/x.toml"));
    let toml = CString::new("name = 1").unwrap();
    let base = CString::new("inline.toml").unwrap();
    assert_eq!(unsafe { dm_scenario_parse(toml.as_ptr(), base.as_ptr(), &mut s) }, DmStatus::Scenario);
    assert_eq!(unsafe { dm_scenario_run(ptr::null(), 0, ptr::null_mut()) }, DmStatus::NullArgument);
    let bytes = [0xffu8, 0];
    assert_eq!(unsafe { dm_scenario_load(bytes.as_ptr().cast(), &mut s) }, DmStatus::InvalidUtf8);
    unsafe {
        dm_scenario_free(ptr::null_mut());
        dm_run_free(ptr::null_mut());
        dm_string_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_last_error() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { dm_scenario_load(ptr::null(), &mut s) }, DmStatus::NullArgument);
    let s = load("ruc");
    assert!(dm_last_error().is_null());
    unsafe { dm_scenario_free(s) };
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(dm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dnssec_model.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for f in [
        "dm_last_error", "dm_version", "dm_scenario_load", "dm_scenario_parse", "dm_scenario_free", "dm_scenario_run",
        "dm_run_free", "dm_run_event_count", "dm_run_trace_json", "dm_check_property", "dm_check_report", "dm_string_free",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(h.contains("typedef struct DmScenario DmScenario;"));
    assert!(h.contains("DM_STATUS_DEVIATION = 5"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"dnssec_model.h\"\nint main(void) { DmScenario *s = 0; DmStatus st = dm_scenario_load(\"x\", &s); return (int)st; }\n",
    )
    .unwrap();
    let inc = header().parent().unwrap().to_path_buf();
    for (cc, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg("-I")
            .arg(&inc)
            .arg(&src)
            .output()
            .expect("a C compiler on PATH");
        assert!(out.status.success(), "{cc}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
