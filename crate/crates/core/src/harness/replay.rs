//! Attack replays: a scenario run reduced to what each client saw and what
//! the cache ended up holding, so runs under different seeds can be compared.

use serde::Serialize;
use sha2::{Digest as _, Sha256};

use super::scenario::{RunResult, Scenario};
use crate::name::DomainName;
use crate::record::{DenialFamily, Rcode, RecordType};
use crate::resolver::{CachedData, SecurityState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryOutcome {
    pub qname: DomainName,
    pub qtype: RecordType,
    pub cd: bool,
    pub rcode: Option<Rcode>,
    pub security: Option<SecurityState>,
    pub answers: usize,
    pub ede: Option<String>,
    /// Some cache entry now holds the answer or denial for this question.
    pub cached: bool,
}

/// Negative cache entries by the family of their proof.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Census {
    pub positive: usize,
    pub nsec: usize,
    pub nsec3: usize,
    pub mixed: usize,
    pub unproven: usize,
}

impl Census {
    pub fn of(run: &RunResult) -> Census {
        let mut c = Census::default();
        for (_, e) in &run.cache {
            match (&e.data, e.data.denial_families().as_slice()) {
                (CachedData::Positive { .. }, _) => c.positive += 1,
                (_, [DenialFamily::Nsec]) => c.nsec += 1,
                (_, [DenialFamily::Nsec3]) => c.nsec3 += 1,
                (_, []) => c.unproven += 1,
                _ => c.mixed += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Replay {
    pub scenario: String,
    pub outcomes: Vec<QueryOutcome>,
    pub census: Census,
    /// SHA-256 of the JSON-lines trace.
    pub trace_digest: String,
}

pub fn summarize(scenario: &Scenario, run: &RunResult) -> Replay {
    let outcomes = run
        .results
        .iter()
        .map(|o| {
            let cached = run.cache.iter().any(|(k, _)| k.owner == o.query.qname && k.rtype == o.query.qtype);
            let (rcode, security, answers, ede) = match &o.result {
                Ok(v) => (Some(v.response.rcode), Some(v.security), v.response.answer.len(), v.ede.clone()),
                Err(e) => (None, None, 0, Some(e.to_string())),
            };
            QueryOutcome { qname: o.query.qname.clone(), qtype: o.query.qtype, cd: o.query.cd, rcode, security, answers, ede, cached }
        })
        .collect();
    let digest = Sha256::digest(run.trace.to_json_lines().as_bytes());
    Replay {
        scenario: scenario.file.name.clone(),
        outcomes,
        census: Census::of(run),
        trace_digest: digest.iter().map(|b| format!("{b:02x}")).collect(),
    }
}

pub fn replay(scenario: &Scenario, seed: u64) -> Replay {
    summarize(scenario, &scenario.run(seed))
}

/// The first seed whose replay differs from seed `seeds.start`, with both replays.
#[derive(Debug, Clone)]
pub struct Unstable {
    pub seed: u64,
    pub expected: Replay,
    pub got: Replay,
}

pub fn stable(scenario: &Scenario, seeds: std::ops::Range<u64>) -> Result<Replay, Box<Unstable>> {
    let first = replay(scenario, seeds.start);
    for seed in seeds.skip(1) {
        let got = replay(scenario, seed);
        if got != first {
            return Err(Box::new(Unstable { seed, expected: first, got }));
        }
    }
    Ok(first)
}
