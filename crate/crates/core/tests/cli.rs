mod common;

use std::process::{Command, Output};

use common::fixture;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dnssec-model")).args(args).output().expect("binary runs")
}

fn scen(name: &str) -> String {
    fixture(&format!("scenarios/{name}.toml")).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn check_baseline_holds() {
    let o = run(&["check", &scen("baseline"), "--props", "1-12", "--seeds", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("Analysis Group") && out.contains("Verified"));
    assert!(!out.contains("DEVIATION"));
}

#[test]
fn check_mixed_gap_is_falsified_as_expected() {
    let o = run(&["check", &scen("mixed-gap"), "--props", "19", "--seeds", "20", "--format", "json-lines"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(line["id"], 19);
    assert_eq!(line["result"], line["expected"]);
    assert_eq!(line["result"], "falsified");
}

#[test]
fn deviation_exits_one() {
    // Undeclared, P19 is expected to fall, and a pure NSEC zone cannot make it.
    let o = run(&["check", &scen("baseline"), "--props", "19", "--seeds", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("P19 on baseline"));
}

#[test]
fn unknown_property_is_a_usage_error() {
    let o = run(&["check", &scen("baseline"), "--props", "99"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown property id 99"));
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(run(&["check", "--seeds", "x"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["check", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn report_writes_counterexamples() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("out/report.jsonl");
    let o = run(&["check", &scen("enumeration"), "--props", "14", "--seeds", "5", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rec: serde_json::Value = serde_json::from_str(std::fs::read_to_string(&report).unwrap().trim()).unwrap();
    let cex = rec["counterexample"].as_str().unwrap();
    let trace = std::fs::read_to_string(cex).unwrap();
    assert!(trace.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    assert!(trace.contains("knowledge_grow"));
}

#[test]
fn enumerate_nsec_zone() {
    let o = run(&["enumerate", &scen("enumeration")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 9);
    assert!(stdout(&o).lines().any(|l| l.trim_end_matches('.') == "x.y.w.example"));
}

#[test]
fn enumerate_bare_zone_file() {
    let zone = fixture("zones/example.zone");
    let o = run(&["enumerate", zone.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 9);
    assert!(stderr(&o).contains("9 names in"));
}

#[test]
fn enumerate_nsec3_zone_is_blocked() {
    let o = run(&["enumerate", &scen("enumeration-nsec3")]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("enumeration blocked"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn enumerate_rejects_empty_zone() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.zone");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(run(&["enumerate", empty.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn trace_is_byte_identical_per_seed() {
    let a = run(&["trace", &scen("baseline"), "--seed", "7"]);
    let b = run(&["trace", &scen("baseline"), "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["trace", &scen("baseline"), "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

fn events(o: &Output) -> Vec<serde_json::Value> {
    stdout(o).lines().map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()[1].clone()).collect()
}

#[test]
fn downgrade_trace_shows_the_rewrite() {
    let o = run(&["trace", &scen("downgrade")]);
    assert!(events(&o).iter().any(|e| e["event"] == "adversary" && e["action"]["kind"] == "alg_rewrite"));
}

#[test]
fn ruc_trace_shows_unvalidated_insert() {
    let o = run(&["trace", &scen("ruc")]);
    assert!(events(&o).iter().any(|e| e["event"] == "cache_insert" && e["validated"] == false));
}

#[test]
fn zone_prints_signed_records() {
    let zone = fixture("zones/example.zone");
    let o = run(&["zone", zone.to_str().unwrap(), "--chain", "nsec3", "--nsec3", "1:0:0021"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("NSEC3"));
    assert!(out.contains("RRSIG"));
    assert!(!out.lines().any(|l| l.split_whitespace().nth(1) == Some("NSEC")));
}
