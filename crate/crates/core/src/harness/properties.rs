//! The property catalog and the per-trace checkers.
//!
//! Each property is a predicate over one run. Safety properties must hold on
//! every run of a scenario; reachability properties need one witnessing run.
//! Checkers recompute what they need from the topology rather than trusting
//! resolver internals.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use super::scenario::{RunResult, Scenario};
use super::topology::Topology;
use super::trace::{AcceptedDenial, AcceptedRRSet, Event, Trace};
use crate::crypto::{hash, verify, AlgorithmId, HashedLabel};
use crate::name::DomainName;
use crate::record::{
    signed_data, DenialFamily, Query, QueryId, RData, RRSet, Rcode, RecordType, ResourceRecord, RrsigData, SignedRRSet,
};
use crate::resolver::validate::signed_owner;
use crate::resolver::{
    validate_rrsig, ActivityId, CacheKey, CachedData, EntryStatus, ResolverConfig, SecurityState, SigVerdict,
};
use crate::zone::{answer_query, dnskey_digest, nsec3_covers, nsec_covers, ChainMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Must hold on every run.
    Safety,
    /// Some run must reach it.
    Reachability,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PropertyInfo {
    pub id: u8,
    pub name: &'static str,
    pub group: &'static str,
    /// Whether the property concerns the resolver cache.
    pub cache: bool,
    pub kind: Kind,
}

const fn p(id: u8, name: &'static str, group: &'static str, cache: bool, kind: Kind) -> PropertyInfo {
    PropertyInfo { id, name, group, cache, kind }
}

pub const CATALOG: [PropertyInfo; 19] = [
    p(1, "Consistent Cache Hit Semantics", "Cache - Core Func.", true, Kind::Safety),
    p(2, "Provable Cache Miss Handling", "Cache - Core Func.", true, Kind::Safety),
    p(3, "Strict Server Cache Partitioning", "Cache - Core Func.", true, Kind::Safety),
    p(4, "Atomic Expiration & Refresh", "Cache - Core Func.", true, Kind::Safety),
    p(5, "Mutual Exclusion via Locks", "Cache - Consistency", true, Kind::Safety),
    p(6, "State Synchronization", "Cache - Consistency", true, Kind::Safety),
    p(7, "Termination Under Expiry", "Cache - Liveness", true, Kind::Safety),
    p(8, "Resource Reclamation", "Cache - Liveness", true, Kind::Safety),
    p(9, "Data Origin Authentication", "Data Auth. & Integrity", true, Kind::Safety),
    p(10, "Record Validation", "Data Auth. & Integrity", true, Kind::Safety),
    p(11, "Integrity Preservation", "Data Auth. & Integrity", true, Kind::Safety),
    p(12, "Chain Integrity", "Chain of Trust", true, Kind::Safety),
    p(13, "NSEC Executability", "Denial Auth. (NSEC)", false, Kind::Reachability),
    p(14, "NSEC Domain Secrecy", "Denial Auth. (NSEC)", false, Kind::Safety),
    p(15, "NSEC Result Authentication", "Denial Auth. (NSEC)", false, Kind::Safety),
    p(16, "NSEC3 Executability", "Denial Auth. (NSEC3)", false, Kind::Reachability),
    p(17, "NSEC3 Domain Secrecy", "Denial Auth. (NSEC3)", false, Kind::Safety),
    p(18, "NSEC3 Result Authentication", "Denial Auth. (NSEC3)", false, Kind::Safety),
    p(19, "Mixed NSEC/NSEC3 Denial Correctness", "Mixed NSEC/NSEC3", false, Kind::Safety),
];

pub fn info(id: u8) -> Option<&'static PropertyInfo> {
    CATALOG.iter().find(|p| p.id == id)
}

/// Steps one resolver level may take for one question.
pub const STEPS_PER_LEVEL: usize = 128;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown property id {0}")]
    Unknown(u8),
    #[error("property {0} has no checker")]
    Unmapped(u8),
}

/// A reason a run fails a property, pinned to an event when there is one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub event: Option<usize>,
    pub reason: String,
}

fn at(i: usize, reason: impl Into<String>) -> Violation {
    Violation { event: Some(i), reason: reason.into() }
}

fn whole(reason: impl Into<String>) -> Violation {
    Violation { event: None, reason: reason.into() }
}

/// What a checker may consult besides the run itself.
pub struct Context<'a> {
    pub topology: &'a Topology,
    pub config: &'a ResolverConfig,
    pub delta: usize,
}

type Checker = fn(&Context<'_>, &RunResult) -> Result<(), Violation>;

fn checker(id: u8) -> Option<Checker> {
    Some(match id {
        1 => p1_cache_hit,
        2 => p2_cache_miss,
        3 => p3_partitioning,
        4 => p4_expiry,
        5 => p5_mutual_exclusion,
        6 => p6_synchronization,
        7 => p7_termination,
        8 => p8_reclamation,
        9 => p9_origin,
        10 => p10_validation,
        11 => p11_integrity,
        12 => p12_chain,
        13 => |cx, r| executability(cx, r, DenialFamily::Nsec),
        14 => |cx, r| secrecy(cx, r, DenialFamily::Nsec),
        15 => |cx, r| result_authentication(cx, r, DenialFamily::Nsec),
        16 => |cx, r| executability(cx, r, DenialFamily::Nsec3),
        17 => |cx, r| secrecy(cx, r, DenialFamily::Nsec3),
        18 => |cx, r| result_authentication(cx, r, DenialFamily::Nsec3),
        19 => p19_mixed,
        _ => return None,
    })
}

/// Refuses to run with a catalog entry that has no checker.
pub fn ensure_coverage() -> Result<(), CatalogError> {
    match CATALOG.iter().find(|p| checker(p.id).is_none()) {
        Some(p) => Err(CatalogError::Unmapped(p.id)),
        None => Ok(()),
    }
}

pub fn check_run(id: u8, cx: &Context<'_>, run: &RunResult) -> Result<Result<(), Violation>, CatalogError> {
    info(id).ok_or(CatalogError::Unknown(id))?;
    let f = checker(id).ok_or(CatalogError::Unmapped(id))?;
    Ok(f(cx, run))
}

#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub seed: Option<u64>,
    pub event: Option<usize>,
    pub reason: String,
    #[serde(skip)]
    pub trace: Option<Trace>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Outcome {
    Holds,
    Falsified(Counterexample),
}

impl Outcome {
    pub fn holds(&self) -> bool {
        matches!(self, Outcome::Holds)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub id: u8,
    pub scenario: String,
    pub seeds: u64,
    pub outcome: Outcome,
}

/// Runs `scenario` once per seed and checks every property in `ids` on each run.
pub fn check_scenario(scenario: &Scenario, ids: &[u8], seeds: Range<u64>) -> Result<Vec<Verdict>, CatalogError> {
    ensure_coverage()?;
    for &id in ids {
        info(id).ok_or(CatalogError::Unknown(id))?;
    }
    let cx = Context { topology: &scenario.topology, config: &scenario.file.resolver, delta: scenario.file.delta };
    let mut state: BTreeMap<u8, Option<Counterexample>> = BTreeMap::new();
    let mut witnessed: BTreeSet<u8> = BTreeSet::new();
    let mut last_miss: BTreeMap<u8, Violation> = BTreeMap::new();
    let explored = seeds.end.saturating_sub(seeds.start);
    for seed in seeds {
        let run = scenario.run(seed);
        for &id in ids {
            let kind = info(id).expect("checked").kind;
            if state.get(&id).is_some_and(Option::is_some) || witnessed.contains(&id) {
                continue;
            }
            let res = check_run(id, &cx, &run)?;
            match (kind, res) {
                (Kind::Safety, Err(v)) => {
                    let cex = Counterexample { seed: Some(seed), event: v.event, reason: v.reason, trace: Some(run.trace.clone()) };
                    state.insert(id, Some(cex));
                }
                (Kind::Safety, Ok(())) => {
                    state.entry(id).or_insert(None);
                }
                (Kind::Reachability, Ok(())) => {
                    witnessed.insert(id);
                }
                (Kind::Reachability, Err(v)) => {
                    last_miss.insert(id, v);
                }
            }
        }
    }
    Ok(ids
        .iter()
        .map(|&id| {
            let outcome = match info(id).expect("checked").kind {
                Kind::Safety => match state.remove(&id).flatten() {
                    Some(c) => Outcome::Falsified(c),
                    None => Outcome::Holds,
                },
                Kind::Reachability if witnessed.contains(&id) => Outcome::Holds,
                Kind::Reachability => {
                    let why = last_miss.remove(&id).map(|v| v.reason).unwrap_or_else(|| "no runs".into());
                    Outcome::Falsified(Counterexample { seed: None, event: None, reason: why, trace: None })
                }
            };
            Verdict { id, scenario: scenario.file.name.clone(), seeds: explored, outcome }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Shared helpers

fn cached_records(data: &CachedData) -> (Option<Rcode>, Vec<ResourceRecord>) {
    match data {
        CachedData::Positive { rrset, proof } => {
            (None, rrset.records().chain(proof.iter().flat_map(SignedRRSet::records)).collect())
        }
        CachedData::Negative { rcode, proof } => (Some(*rcode), proof.iter().flat_map(SignedRRSet::records).collect()),
    }
}

fn accepted(trace: &Trace) -> impl Iterator<Item = (usize, SecurityState, &Vec<AcceptedRRSet>, Option<&AcceptedDenial>, &Event)> {
    trace.iter().enumerate().filter_map(|(i, e)| match e {
        Event::Accept { security, rrsets, denial, .. } => Some((i, *security, rrsets, denial.as_ref(), e)),
        _ => None,
    })
}

/// Every signed RRSet inside a Secure acceptance, answers and denial records alike.
fn secure_rrsets(trace: &Trace) -> impl Iterator<Item = (usize, &AcceptedRRSet)> {
    accepted(trace).filter(|(_, s, ..)| *s == SecurityState::Secure).flat_map(|(i, _, rrsets, denial, _)| {
        rrsets.iter().chain(denial.into_iter().flat_map(|d| &d.records)).map(move |a| (i, a))
    })
}

fn signed_bytes(rrset: &RRSet, sig: &RrsigData) -> Option<Vec<u8>> {
    let owner = signed_owner(rrset.owner(), sig.labels)?;
    Some(signed_data(sig, &rrset.with_owner(owner)))
}

/// Scope bookkeeping shared by the lock audits.
#[derive(Debug)]
struct OpenScope {
    activity: ActivityId,
    key: CacheKey,
    acquired: usize,
    missed: bool,
    fetched: Option<(DomainName, QueryId)>,
    delivered: bool,
    inserts: Vec<usize>,
    own_events: usize,
}

// ---------------------------------------------------------------------------
// Cache

/// Every entry read or written matches what the partition's server publishes.
fn p1_cache_hit(cx: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    for (i, e) in run.trace.iter().enumerate() {
        let (Event::CacheRead { key, data, .. } | Event::CacheInsert { key, data, .. }) = e else {
            continue;
        };
        let Some(z) = cx.topology.server(&key.partition) else {
            return Err(at(i, format!("cache partition {} is not a server", key.partition)));
        };
        let truth = answer_query(z, &Query::new(key.owner.clone(), key.rtype, QueryId(0)));
        let published: BTreeSet<&ResourceRecord> = truth.all_records().collect();
        let (rcode, recs) = cached_records(data);
        if let Some(bad) = recs.iter().find(|r| !published.contains(r)) {
            return Err(at(i, format!("cached {} {} is not served by {}", bad.owner, bad.rtype(), key.partition)));
        }
        match (rcode, data) {
            (Some(rc), _) if rc != truth.rcode => {
                return Err(at(i, format!("cached {rc:?} but {} answers {:?}", key.partition, truth.rcode)));
            }
            (None, CachedData::Positive { rrset, .. }) if *rrset.rrset.owner() == key.owner => {
                let want: BTreeSet<&RData> = truth
                    .answer
                    .iter()
                    .chain(&truth.authority)
                    .filter(|r| r.owner == key.owner && r.rtype() == key.rtype)
                    .map(|r| &r.rdata)
                    .collect();
                let got: BTreeSet<&RData> = rrset.rrset.rdata().iter().collect();
                if want != got {
                    return Err(at(i, format!("cached {} {} is not the full RRSet", key.owner, key.rtype)));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Inserts happen only after a miss in the same lock scope, with the fetch inside that scope.
fn p2_cache_miss(_: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    let mut open: BTreeMap<u64, OpenScope> = BTreeMap::new();
    let mut delivered_from: BTreeMap<ActivityId, BTreeSet<DomainName>> = BTreeMap::new();
    for (i, e) in run.trace.iter().enumerate() {
        match e {
            Event::LockAcquire { activity, key, scope } => {
                open.insert(
                    scope.0,
                    OpenScope {
                        activity: *activity,
                        key: key.clone(),
                        acquired: i,
                        missed: false,
                        fetched: None,
                        delivered: false,
                        inserts: Vec::new(),
                        own_events: 0,
                    },
                );
            }
            Event::CacheLookup { scope, found: None, .. } | Event::CacheExpire { scope, .. } => {
                if let Some(s) = open.get_mut(&scope.0) {
                    s.missed = true;
                }
            }
            Event::ResolverQuery { scope: Some(scope), server, qid, activity, .. } => match open.get_mut(&scope.0) {
                Some(s) if s.activity == *activity => s.fetched = Some((server.clone(), *qid)),
                _ => return Err(at(i, "fetch tagged with a scope its activity does not hold")),
            },
            Event::Delivered { activity, qid, server, .. } => {
                delivered_from.entry(*activity).or_default().insert(server.clone());
                for s in open.values_mut() {
                    if s.fetched.as_ref().is_some_and(|(_, q)| q == qid) {
                        s.delivered = true;
                    }
                }
            }
            Event::CacheInsert { activity, key, scope, origin, .. } => {
                let Some(s) = open.get_mut(&scope.0) else {
                    return Err(at(i, format!("insert of {} {} outside a lock scope", key.owner, key.rtype)));
                };
                if s.activity != *activity || s.key != *key {
                    return Err(at(i, "insert under a scope held for another key or activity"));
                }
                if !s.missed {
                    return Err(at(i, format!("insert of {} {} without a preceding miss", key.owner, key.rtype)));
                }
                let provenance = match &s.fetched {
                    Some((server, _)) => s.delivered && server == origin,
                    None => delivered_from.get(activity).is_some_and(|d| d.contains(origin)),
                };
                if !provenance {
                    return Err(at(i, format!("insert of {} {} with no response from {origin}", key.owner, key.rtype)));
                }
                s.inserts.push(i);
            }
            Event::LockRelease { scope, .. } => {
                open.remove(&scope.0);
            }
            _ => {}
        }
        // A foreign mutation of a held key breaks the lookup-then-insert reasoning.
        if let Event::CacheInsert { activity, key, .. } | Event::CacheExpire { activity, key, .. } = e {
            if let Some(s) = open.values().find(|s| s.key == *key && s.activity != *activity) {
                return Err(at(i, format!("{key:?} changed while {:?} held it", s.activity)));
            }
        }
    }
    match open.values().find(|s| !s.inserts.is_empty()) {
        Some(s) => Err(at(s.acquired, "scope with inserts was never released")),
        None => Ok(()),
    }
}

/// Data in a partition comes from that partition's server and nothing else.
fn p3_partitioning(_: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    let mut fetch_in: BTreeMap<u64, DomainName> = BTreeMap::new();
    for (i, e) in run.trace.iter().enumerate() {
        match e {
            Event::ResolverQuery { scope: Some(s), server, .. } => {
                fetch_in.insert(s.0, server.clone());
            }
            Event::CacheInsert { key, scope, origin, data, .. } | Event::CacheRead { key, scope, origin, data, .. } => {
                if *origin != key.partition {
                    return Err(at(i, format!("entry from {origin} in partition {}", key.partition)));
                }
                if let Some(server) = fetch_in.get(&scope.0) {
                    if *server != key.partition {
                        return Err(at(i, format!("data fetched from {server} stored under {}", key.partition)));
                    }
                }
                let (_, recs) = cached_records(data);
                if let Some(r) = recs.iter().find(|r| !r.owner.is_subdomain_of(&key.partition)) {
                    return Err(at(i, format!("{} outside partition {}", r.owner, key.partition)));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Model of the cache contents rebuilt from inserts and expiries.
fn cache_model(trace: &Trace, mut on: impl FnMut(usize, &Event, &BTreeMap<CacheKey, u64>) -> Result<(), Violation>) -> Result<(), Violation> {
    let mut present: BTreeMap<CacheKey, u64> = BTreeMap::new();
    for (i, e) in trace.iter().enumerate() {
        on(i, e, &present)?;
        match e {
            Event::CacheInsert { key, version, .. } => {
                present.insert(key.clone(), *version);
            }
            Event::CacheExpire { key, version, .. }
                if present.remove(key) != Some(*version) => {
                    return Err(at(i, format!("expired version {version} of {} {} was not current", key.owner, key.rtype)));
                }
            _ => {}
        }
    }
    Ok(())
}

/// No read sees an entry that expired, and an expired entry is gone before anyone reads it.
fn p4_expiry(_: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    let mut stale: BTreeSet<u64> = BTreeSet::new();
    cache_model(&run.trace, |i, e, present| {
        match e {
            Event::CacheStatus { scope, status: EntryStatus::Expired, .. } => {
                stale.insert(scope.0);
            }
            Event::CacheExpire { scope, .. } => {
                stale.remove(&scope.0);
            }
            Event::CacheRead { key, scope, version, .. } => {
                if stale.contains(&scope.0) {
                    return Err(at(i, format!("read of expired {} {}", key.owner, key.rtype)));
                }
                if present.get(key) != Some(version) {
                    return Err(at(i, format!("read of version {version} of {} {} that is not current", key.owner, key.rtype)));
                }
            }
            Event::LockRelease { scope, key, .. } if stale.contains(&scope.0) => {
                return Err(at(i, format!("released {} {} with an expired entry still present", key.owner, key.rtype)));
            }
            _ => {}
        }
        Ok(())
    })
}

fn p5_mutual_exclusion(_: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    let mut holder: BTreeMap<&CacheKey, (ActivityId, u64)> = BTreeMap::new();
    for (i, e) in run.trace.iter().enumerate() {
        match e {
            Event::LockAcquire { activity, key, scope } => {
                if let Some((h, _)) = holder.insert(key, (*activity, scope.0)) {
                    return Err(at(i, format!("{activity:?} acquired {} {} held by {h:?}", key.owner, key.rtype)));
                }
            }
            Event::LockRelease { activity, key, scope } => match holder.remove(key) {
                Some((h, s)) if h == *activity && s == scope.0 => {}
                _ => return Err(at(i, format!("{activity:?} released {} {} it did not hold", key.owner, key.rtype))),
            },
            Event::CacheLookup { activity, key, .. }
            | Event::CacheStatus { activity, key, .. }
            | Event::CacheRead { activity, key, .. }
            | Event::CacheExpire { activity, key, .. }
            | Event::CacheInsert { activity, key, .. }
                if holder.get(key).map(|(h, _)| h) != Some(activity) => {
                    return Err(at(i, format!("{activity:?} touched {} {} without its lock", key.owner, key.rtype)));
                }
            _ => {}
        }
    }
    Ok(())
}

/// A lookup sees exactly the last version written and not yet expired.
fn p6_synchronization(_: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    cache_model(&run.trace, |i, e, present| {
        if let Event::CacheLookup { key, found, .. } = e {
            if present.get(key).copied() != *found {
                return Err(at(
                    i,
                    format!("lookup of {} {} saw {found:?}, latest is {:?}", key.owner, key.rtype, present.get(key)),
                ));
            }
        }
        Ok(())
    })
}

fn p7_termination(cx: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    if let Some(e) = &run.error {
        return Err(whole(format!("run did not finish: {e}")));
    }
    let bound = cx.config.depth_bound * STEPS_PER_LEVEL;
    let mut open: BTreeMap<ActivityId, (QueryId, usize, usize)> = BTreeMap::new();
    for (i, e) in run.trace.iter().enumerate() {
        match e {
            Event::ClientQuery { activity, qid, .. } => {
                if open.insert(*activity, (*qid, i, 0)).is_some() {
                    return Err(at(i, format!("{activity:?} asked again before its answer")));
                }
            }
            Event::ClientResult { activity, qid, .. } => match open.remove(activity) {
                Some((q, _, _)) if q == *qid => {}
                _ => return Err(at(i, format!("answer {qid:?} matches no open question"))),
            },
            _ => {
                if let Some(act) = e.activity() {
                    if let Some((_, start, steps)) = open.get_mut(&act) {
                        *steps += 1;
                        if *steps > bound {
                            return Err(at(*start, format!("question took more than {bound} steps")));
                        }
                    }
                }
            }
        }
    }
    match open.values().next() {
        Some((q, start, _)) => Err(at(*start, format!("question {q:?} never answered"))),
        None => Ok(()),
    }
}

fn p8_reclamation(cx: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    if run.locks_held > 0 {
        return Err(whole(format!("{} locks still held at the end", run.locks_held)));
    }
    if run.pending > 0 {
        return Err(whole(format!("{} cache mutations still pending", run.pending)));
    }
    let mut open: BTreeMap<u64, OpenScope> = BTreeMap::new();
    for (i, e) in run.trace.iter().enumerate() {
        match e {
            Event::LockAcquire { activity, key, scope } => {
                open.insert(
                    scope.0,
                    OpenScope {
                        activity: *activity,
                        key: key.clone(),
                        acquired: i,
                        missed: false,
                        fetched: None,
                        delivered: false,
                        inserts: Vec::new(),
                        own_events: 0,
                    },
                );
            }
            Event::LockRelease { scope, .. } => {
                open.remove(&scope.0);
            }
            _ => {
                if let Some(act) = e.activity() {
                    for s in open.values_mut().filter(|s| s.activity == act) {
                        s.own_events += 1;
                        if s.own_events > cx.delta {
                            return Err(at(s.acquired, format!("lock held for more than {} steps", cx.delta)));
                        }
                    }
                }
            }
        }
    }
    match open.values().next() {
        Some(s) => Err(at(s.acquired, format!("{} {} never released", s.key.owner, s.key.rtype))),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Authentication and integrity

/// Every Secure RRSet carries a signature its zone's authority actually produced.
fn p9_origin(_: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    let mut signed: BTreeMap<(DomainName, crate::crypto::KeyId), BTreeSet<crate::crypto::Digest>> = BTreeMap::new();
    let mut last_sign = 0;
    for (i, e) in run.trace.iter().enumerate() {
        if let Event::Sign { zone, key, digest } = e {
            signed.entry((zone.clone(), *key)).or_default().insert(*digest);
            last_sign = i;
        }
    }
    for (i, a) in secure_rrsets(&run.trace) {
        let (Some(sig), Some(key)) = (&a.sig, &a.key) else {
            return Err(at(i, format!("Secure {} {} has no signature", a.rrset.owner(), a.rrset.rtype())));
        };
        if !a.rrset.owner().is_subdomain_of(&a.zone) || sig.signer != a.zone {
            return Err(at(i, format!("{} signed for {} accepted in {}", a.rrset.owner(), sig.signer, a.zone)));
        }
        let Some(bytes) = signed_bytes(&a.rrset, sig) else {
            return Err(at(i, "signature label count exceeds the owner"));
        };
        let d = hash(&bytes);
        let made = signed.get(&(a.zone.clone(), key.key.key)).is_some_and(|s| s.contains(&d));
        if !made || i < last_sign || sig.signature.signer() != Some(key.key.key) {
            return Err(at(i, format!("no signing by {} over {} {}", a.zone, a.rrset.owner(), a.rrset.rtype())));
        }
    }
    Ok(())
}

/// Every published RRSet verifies, and every Secure answer went through acceptance.
fn p10_validation(cx: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    for z in cx.topology.servers() {
        for s in z.signed_rrsets() {
            if s.sigs.is_empty() {
                continue;
            }
            let ok = s.sigs.iter().any(|sig| {
                z.dnskeys().iter().any(|k| {
                    k.key_tag() == sig.key_tag
                        && signed_bytes(&s.rrset, sig).is_some_and(|b| verify(&sig.signature, &b, &k.key))
                })
            });
            if !ok {
                return Err(whole(format!("{} {} in {} does not verify", s.rrset.owner(), s.rrset.rtype(), z.apex())));
            }
        }
    }
    for (i, a) in secure_rrsets(&run.trace) {
        let (Some(sig), Some(key)) = (&a.sig, &a.key) else {
            return Err(at(i, "Secure RRSet without signature"));
        };
        if !signed_bytes(&a.rrset, sig).is_some_and(|b| verify(&sig.signature, &b, &key.key)) {
            return Err(at(i, format!("accepted {} {} does not verify", a.rrset.owner(), a.rrset.rtype())));
        }
    }
    let mut accepted_answers: BTreeMap<(ActivityId, QueryId), (SecurityState, BTreeSet<ResourceRecord>)> = BTreeMap::new();
    for (i, e) in run.trace.iter().enumerate() {
        match e {
            Event::Accept { activity, qid, security, rrsets, .. } => {
                let recs = rrsets.iter().flat_map(|a| a.rrset.records()).collect();
                accepted_answers.insert((*activity, *qid), (*security, recs));
            }
            Event::ClientResult { activity, qid, security: Some(SecurityState::Secure), answer, .. } => {
                let Some((SecurityState::Secure, recs)) = accepted_answers.get(&(*activity, *qid)) else {
                    return Err(at(i, format!("Secure result for {qid:?} without a Secure acceptance")));
                };
                if let Some(r) = answer.iter().filter(|r| r.rtype() != RecordType::RRSIG).find(|r| !recs.contains(r)) {
                    return Err(at(i, format!("answer {} {} was not validated", r.owner, r.rtype())));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn mutate_rdata(r: &RData) -> Option<RData> {
    let m = |n: &DomainName| n.child(b"m").ok();
    Some(match r {
        RData::A(a) => RData::A(format!("{a}1")),
        RData::Ns(n) => RData::Ns(m(n)?),
        RData::Mx(n) => RData::Mx(m(n)?),
        RData::Dnskey(d) => RData::Dnskey(crate::record::DnskeyData { flags: d.flags ^ 1, ..d.clone() }),
        RData::Ds(d) => RData::Ds(crate::record::DsData { key_tag: d.key_tag.wrapping_add(1), ..d.clone() }),
        RData::Rrsig(_) => return None,
        RData::Nsec(d) => RData::Nsec(crate::record::NsecData { next: m(&d.next)?, ..d.clone() }),
        RData::Nsec3(d) => {
            let mut b = *d.next_hashed.as_bytes();
            b[19] ^= 1;
            RData::Nsec3(crate::record::Nsec3Data { next_hashed: HashedLabel::from_bytes(b), ..d.clone() })
        }
    })
}

/// Changes the label that decides which name was signed.
fn mutate_owner(owner: &DomainName, labels: u8) -> Option<DomainName> {
    let labels_vec: Vec<Vec<u8>> = owner.labels().map(<[u8]>::to_vec).collect();
    if labels_vec.is_empty() {
        return DomainName::root().child(b"m").ok();
    }
    let idx = labels_vec.len().checked_sub((labels as usize).max(1))?;
    let mut out = labels_vec;
    out[idx].push(b'm');
    DomainName::from_labels(out).ok()
}

/// Single-field changes to an accepted RRSet or its signature.
pub fn mutations(rrset: &RRSet, sig: &RrsigData) -> Vec<(String, RRSet, RrsigData)> {
    let mut out = Vec::new();
    if let Some(o) = mutate_owner(rrset.owner(), sig.labels) {
        out.push(("owner".to_string(), rrset.with_owner(o), sig.clone()));
    }
    for (k, r) in rrset.rdata().iter().enumerate() {
        if let Some(new) = mutate_rdata(r) {
            let mut rd = rrset.rdata().to_vec();
            rd[k] = new;
            if let Ok(s) = rrset.with_rdata(rd) {
                if s != *rrset {
                    out.push((format!("rdata {k}"), s, sig.clone()));
                }
            }
        }
    }
    if rrset.len() > 1 {
        let rd = rrset.rdata()[1..].to_vec();
        if let Ok(s) = rrset.with_rdata(rd) {
            out.push(("dropped record".into(), s, sig.clone()));
        }
    }
    let sig_fields: [(&str, RrsigData); 5] = [
        ("labels", RrsigData { labels: sig.labels.wrapping_add(1), ..sig.clone() }),
        ("algorithm", RrsigData { algorithm: AlgorithmId(sig.algorithm.0 ^ 0x40), ..sig.clone() }),
        ("key tag", RrsigData { key_tag: sig.key_tag.wrapping_add(1), ..sig.clone() }),
        ("signer", RrsigData { signer: sig.signer.child(b"m").unwrap_or_else(|_| sig.signer.clone()), ..sig.clone() }),
        (
            "type covered",
            RrsigData {
                type_covered: if sig.type_covered == RecordType::A { RecordType::MX } else { RecordType::A },
                ..sig.clone()
            },
        ),
    ];
    for (name, s) in sig_fields {
        out.push((format!("rrsig {name}"), rrset.clone(), s));
    }
    if sig.labels > 0 {
        out.push(("rrsig labels down".into(), rrset.clone(), RrsigData { labels: sig.labels - 1, ..sig.clone() }));
    }
    out
}

/// No single-field change to accepted data still validates.
fn p11_integrity(cx: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    let mut seen = BTreeSet::new();
    for (i, a) in secure_rrsets(&run.trace) {
        let (Some(sig), Some(key)) = (&a.sig, &a.key) else {
            return Err(at(i, "Secure RRSet without signature"));
        };
        if !seen.insert((a.rrset.clone(), sig.clone())) {
            continue;
        }
        if validate_rrsig(&a.rrset, sig, key, cx.config) != SigVerdict::Ok {
            return Err(at(i, format!("accepted {} {} does not validate", a.rrset.owner(), a.rrset.rtype())));
        }
        for (what, rrset, s) in mutations(&a.rrset, sig) {
            if validate_rrsig(&rrset, &s, key, cx.config) == SigVerdict::Ok {
                return Err(at(i, format!("{} {} still validates with its {what} changed", a.rrset.owner(), a.rrset.rtype())));
            }
        }
    }
    Ok(())
}

/// Secure data hangs off a chain that starts at the anchor and uses only the zones' real keys.
fn p12_chain(cx: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    let anchor = cx.topology.anchor();
    for (i, e) in run.trace.iter().enumerate() {
        let Event::Accept { security: SecurityState::Secure, chain, rrsets, denial, .. } = e else {
            continue;
        };
        let Some(first) = chain.first() else {
            return Err(at(i, "Secure acceptance with an empty chain"));
        };
        if first.zone != anchor.zone || first.ds != anchor.ds {
            return Err(at(i, format!("chain starts at {} rather than the trust anchor", first.zone)));
        }
        for (k, link) in chain.iter().enumerate() {
            let Some(z) = cx.topology.server(&link.zone) else {
                return Err(at(i, format!("chain passes through unknown zone {}", link.zone)));
            };
            let honest: BTreeSet<_> = z.dnskeys().iter().collect();
            if !honest.contains(&link.ksk) || link.zsks.iter().any(|k| !honest.contains(k)) {
                return Err(at(i, format!("chain uses a key {} never published", link.zone)));
            }
            let d = dnskey_digest(&link.zone, &link.ksk);
            if !link.ds.iter().any(|ds| ds.digest == d && ds.key_tag == link.ksk.key_tag()) {
                return Err(at(i, format!("KSK of {} does not match the DS it was linked with", link.zone)));
            }
            if k > 0 {
                let parent = &chain[k - 1].zone;
                if !link.zone.is_strict_subdomain_of(parent) {
                    return Err(at(i, format!("{} follows {parent} in the chain", link.zone)));
                }
                let published = cx
                    .topology
                    .server(parent)
                    .and_then(|p| p.signed_rrset(&link.zone, RecordType::DS))
                    .map(|s| crate::resolver::validate::ds_rdata(&s.rrset))
                    .unwrap_or_default();
                if link.ds.iter().any(|d| !published.contains(d)) {
                    return Err(at(i, format!("DS for {} is not the one {parent} publishes", link.zone)));
                }
            }
        }
        let last = chain.last().expect("non-empty");
        let keys: BTreeSet<_> = std::iter::once(&last.ksk).chain(&last.zsks).collect();
        for a in rrsets.iter().chain(denial.iter().flat_map(|d| &d.records)) {
            if a.zone != last.zone || a.key.as_ref().is_none_or(|k| !keys.contains(k)) {
                return Err(at(i, format!("{} {} vouched for outside the chain", a.rrset.owner(), a.rrset.rtype())));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Authenticated denial

fn family_of(records: &[AcceptedRRSet]) -> Option<DenialFamily> {
    let fams: BTreeSet<DenialFamily> = records
        .iter()
        .filter_map(|a| match a.rrset.rtype() {
            RecordType::NSEC => Some(DenialFamily::Nsec),
            RecordType::NSEC3 => Some(DenialFamily::Nsec3),
            _ => None,
        })
        .collect();
    match fams.len() {
        1 => fams.into_iter().next(),
        _ => None,
    }
}

/// A validated denial of this family happens.
fn executability(_: &Context<'_>, run: &RunResult, fam: DenialFamily) -> Result<(), Violation> {
    let hit = accepted(&run.trace).any(|(_, s, _, d, _)| {
        s == SecurityState::Secure && d.is_some_and(|d| !d.records.is_empty() && family_of(&d.records) == Some(fam))
    });
    if hit {
        Ok(())
    } else {
        Err(whole(format!("no Secure {fam} denial")))
    }
}

/// The adversary only learns a zone's name after someone asked about it.
fn secrecy(cx: &Context<'_>, run: &RunResult, fam: DenialFamily) -> Result<(), Violation> {
    let secret = cx.topology.secret_names(fam);
    let mut asked: Vec<&DomainName> = Vec::new();
    for (i, e) in run.trace.iter().enumerate() {
        match e {
            Event::ClientQuery { qname, .. } | Event::ResolverQuery { qname, .. } => asked.push(qname),
            Event::KnowledgeGrow { names } => {
                for n in names {
                    for (d, zone) in &secret {
                        if !n.is_subdomain_of(d) {
                            continue;
                        }
                        if !asked.iter().any(|q| q.is_subdomain_of(d)) {
                            return Err(at(i, format!("adversary learned {d} in {zone} without a query for it")));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Every record of an accepted denial was served by the zone, carries a sane
/// label count, covers the question, and the denial is true of the zone.
fn result_authentication(cx: &Context<'_>, run: &RunResult, fam: DenialFamily) -> Result<(), Violation> {
    let mut served: BTreeMap<&DomainName, BTreeSet<&ResourceRecord>> = BTreeMap::new();
    for (i, e) in run.trace.iter().enumerate() {
        match e {
            Event::ServerResponse { server, records, .. } => served.entry(server).or_default().extend(records),
            Event::Accept { security: SecurityState::Secure, qname, qtype, denial: Some(d), .. }
                if family_of(&d.records) == Some(fam) =>
            {
                let Some(z) = cx.topology.server(&d.zone) else {
                    return Err(at(i, format!("denial from unknown zone {}", d.zone)));
                };
                for a in &d.records {
                    let from = served.get(&d.zone);
                    if let Some(r) = a.rrset.records().find(|r| !from.is_some_and(|s| s.contains(r))) {
                        return Err(at(i, format!("{} {} was never sent by {}", r.owner, r.rtype(), d.zone)));
                    }
                    if let Some(sig) = &a.sig {
                        if sig.labels as usize != a.rrset.owner().rrsig_label_count() {
                            return Err(at(i, format!("{} signed with label count {}", a.rrset.owner(), sig.labels)));
                        }
                    }
                }
                let truth = answer_query(z, &Query::new(qname.clone(), *qtype, QueryId(0)));
                let exists_answer = truth.answer.iter().any(|r| r.owner == *qname && r.rtype() == *qtype);
                let true_rcode = if d.rcode == Rcode::NxDomain { !z.zone().name_exists(qname) } else { true };
                if exists_answer || truth.rcode != d.rcode || !true_rcode {
                    return Err(at(i, format!("accepted denial of {qname} {qtype} is false in {}", d.zone)));
                }
                if d.rcode == Rcode::NxDomain && !covers_name(z, &d.records, qname) {
                    return Err(at(i, format!("no accepted record covers {qname}")));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn covers_name(z: &crate::zone::SignedZone, records: &[AcceptedRRSet], q: &DomainName) -> bool {
    records.iter().any(|a| {
        a.rrset.rdata().iter().any(|r| match r {
            RData::Nsec(d) => nsec_covers(a.rrset.owner(), &d.next, q),
            RData::Nsec3(d) => HashedLabel::from_owner(a.rrset.owner())
                .is_some_and(|o| nsec3_covers(&o, &d.next_hashed, &z.zone().hasher().hash(q, &d.params))),
            _ => false,
        })
    })
}

/// In a zone served with both families, no accepted interval, read in canonical
/// name order, may contain a name the zone holds.
fn p19_mixed(cx: &Context<'_>, run: &RunResult) -> Result<(), Violation> {
    for (i, e) in run.trace.iter().enumerate() {
        let Event::Accept { security: SecurityState::Secure, denial: Some(d), .. } = e else {
            continue;
        };
        let Some(z) = cx.topology.server(&d.zone) else {
            continue;
        };
        let Some(ChainMode::Mixed { params, .. }) = z.zone().chain_mode() else {
            continue;
        };
        let names = z.zone().authoritative_owners();
        let by_hash: BTreeMap<HashedLabel, &DomainName> =
            names.iter().map(|n| (z.zone().hasher().hash(n, params), n)).collect();
        for a in &d.records {
            for r in a.rrset.rdata() {
                let interval = match r {
                    RData::Nsec(n) => Some((a.rrset.owner().clone(), n.next.clone())),
                    RData::Nsec3(n) => HashedLabel::from_owner(a.rrset.owner())
                        .and_then(|o| Some(((*by_hash.get(&o)?).clone(), (*by_hash.get(&n.next_hashed)?).clone()))),
                    _ => None,
                };
                let Some((lo, hi)) = interval else { continue };
                if let Some(inside) = names.iter().find(|n| **n != lo && **n != hi && nsec_covers(&lo, &hi, n)) {
                    return Err(at(
                        i,
                        format!("{} interval ({lo}, {hi}) accepted in {} contains existing {inside}", r.rtype(), d.zone),
                    ));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_catalog_entry_has_a_checker() {
        ensure_coverage().unwrap();
        assert_eq!(CATALOG.iter().map(|p| p.id).collect::<Vec<_>>(), (1..=19).collect::<Vec<_>>());
        assert!(checker(20).is_none());
    }

    #[test]
    fn owner_mutation_targets_the_signed_label() {
        let n: DomainName = "z.w.example".parse().unwrap();
        assert_eq!(mutate_owner(&n, 2).unwrap().to_string(), "z.wm.example");
        assert_eq!(mutate_owner(&n, 3).unwrap().to_string(), "zm.w.example");
    }
}
