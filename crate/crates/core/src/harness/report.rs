//! Verdict reports: one record per property checked, as JSON lines or as a table.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::properties::{check_scenario, info, CatalogError, Counterexample, Outcome, CATALOG};
use super::scenario::{Expectation, Scenario};

/// Expected verdict for a property when a scenario does not say.
pub fn default_expectation(id: u8) -> Expectation {
    match id {
        14 | 19 => Expectation::Falsified,
        _ => Expectation::Holds,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub id: u8,
    pub name: &'static str,
    pub group: &'static str,
    pub cache: bool,
    pub scenario: String,
    pub result: Expectation,
    pub expected: Expectation,
    pub seeds: u64,
    pub counterexample: Option<PathBuf>,
    pub seed: Option<u64>,
    pub event: Option<usize>,
    pub reason: Option<String>,
    pub elapsed_ms: u128,
    #[serde(skip)]
    pub trace: Option<super::trace::Trace>,
}

impl Record {
    pub fn as_expected(&self) -> bool {
        self.result == self.expected
    }
}

/// Checks `props` (or the scenario's declared ones) over `seeds` (or its default range).
pub fn check(scenario: &Scenario, props: Option<&[u8]>, seeds: Option<Range<u64>>) -> Result<Vec<Record>, CatalogError> {
    let ids: Vec<u8> = match props {
        Some(p) => p.to_vec(),
        None => scenario.expectations().keys().copied().collect(),
    };
    let seeds = seeds.unwrap_or(0..scenario.file.seeds);
    let start = Instant::now();
    let verdicts = check_scenario(scenario, &ids, seeds)?;
    let per = start.elapsed() / verdicts.len().max(1) as u32;
    Ok(verdicts
        .into_iter()
        .map(|v| {
            let p = info(v.id).expect("checked by check_scenario");
            let expected = scenario.expectations().get(&v.id).copied().unwrap_or_else(|| default_expectation(v.id));
            let (result, cex) = match v.outcome {
                Outcome::Holds => (Expectation::Holds, None),
                Outcome::Falsified(c) => (Expectation::Falsified, Some(c)),
            };
            let Counterexample { seed, event, reason, trace } =
                cex.unwrap_or(Counterexample { seed: None, event: None, reason: String::new(), trace: None });
            Record {
                id: v.id,
                name: p.name,
                group: p.group,
                cache: p.cache,
                scenario: v.scenario,
                result,
                expected,
                seeds: v.seeds,
                counterexample: None,
                seed,
                event,
                reason: (!reason.is_empty()).then_some(reason),
                elapsed_ms: per.as_millis(),
                trace,
            }
        })
        .collect())
}

/// Writes each counterexample trace next to `report` and records its path.
pub fn save_counterexamples(records: &mut [Record], report: &Path) -> io::Result<()> {
    let dir = report.parent().unwrap_or(Path::new("."));
    let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    fs::create_dir_all(dir)?;
    for r in records.iter_mut() {
        let (Some(trace), Some(seed)) = (&r.trace, r.seed) else { continue };
        let path = dir.join(format!("{stem}-{}-p{}-seed{seed}.jsonl", r.scenario, r.id));
        fs::write(&path, trace.to_json_lines())?;
        r.counterexample = Some(path);
    }
    Ok(())
}

pub fn json_lines(records: &[Record]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("plain data") + "\n").collect()
}

fn mark(e: Expectation) -> &'static str {
    match e {
        Expectation::Holds => "✓",
        Expectation::Falsified => "✗",
    }
}

fn fmt_time(ms: u128) -> String {
    let d = Duration::from_millis(ms as u64);
    if d.as_secs() >= 60 {
        format!("{}m{:02}s", d.as_secs() / 60, d.as_secs() % 60)
    } else {
        format!("{:.1}s", d.as_secs_f64())
    }
}

/// Same columns as the published results table, plus the expected verdict.
pub fn table(records: &[Record]) -> String {
    let rows: Vec<[String; 8]> = records
        .iter()
        .map(|r| {
            [
                r.id.to_string(),
                r.group.to_string(),
                r.name.to_string(),
                if r.cache { "✓" } else { "✗" }.to_string(),
                mark(r.result).to_string(),
                fmt_time(r.elapsed_ms),
                format!("bounded: {} seeds, {}", r.seeds, r.scenario),
                format!("{}{}", mark(r.expected), if r.as_expected() { "" } else { " DEVIATION" }),
            ]
        })
        .collect();
    let header = ["#", "Analysis Group", "Property Description", "Cache", "Verified", "Time", "Tool", "Expected"];
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[&str]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&width).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{c}{}", " ".repeat(w - c.chars().count()));
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    out += &line(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect::<Vec<_>>());
    for row in &rows {
        out += &line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    for r in records.iter().filter(|r| r.result == super::scenario::Expectation::Falsified) {
        let _ = writeln!(
            out,
            "P{} on {}: {}{}",
            r.id,
            r.scenario,
            r.reason.as_deref().unwrap_or(""),
            r.seed.map(|s| format!(" (seed {s})")).unwrap_or_default()
        );
    }
    out
}

/// Parses `1-12,14,19`.
pub fn parse_props(s: &str) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let lo: u8 = lo.parse().map_err(|_| format!("bad property id {lo:?}"))?;
        let hi: u8 = hi.parse().map_err(|_| format!("bad property id {hi:?}"))?;
        if lo > hi {
            return Err(format!("empty range {part}"));
        }
        for id in lo..=hi {
            if info(id).is_none() {
                return Err(format!("unknown property id {id}; ids run 1-{}", CATALOG.len()));
            }
            if !out.contains(&id) {
                out.push(id);
            }
        }
    }
    if out.is_empty() {
        return Err("no property ids given".into());
    }
    Ok(out)
}

/// Parses `500` (seeds 0..500) or `100..600`.
pub fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let bad = || format!("bad seed range {s:?}: expected N or A..B");
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            if a >= b {
                return Err(bad());
            }
            Ok(a..b)
        }
        None => {
            let n: u64 = s.parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(bad());
            }
            Ok(0..n)
        }
    }
}
