//! Each checker holds on a clean run and catches a violation planted in it.

mod common;

use common::{n, scenario};
use dnssec_model::crypto::KeyId;
use dnssec_model::harness::properties::{check_run, check_scenario, Context, Outcome};
use dnssec_model::harness::scenario::{RunResult, Scenario};
use dnssec_model::harness::trace::Event;
use dnssec_model::record::{DenialFamily, RData, RecordType};
use dnssec_model::resolver::{ActivityId, CachedData, SecurityState};

fn verdict(s: &Scenario, id: u8, run: &RunResult) -> Result<(), String> {
    let cx = Context { topology: &s.topology, config: &s.file.resolver, delta: s.file.delta };
    check_run(id, &cx, run).unwrap().map_err(|v| v.reason)
}

/// Runs `name` at `seed`, checks `id` holds, applies `plant` and checks it no longer does.
fn caught(name: &str, seed: u64, id: u8, plant: impl FnOnce(&mut RunResult)) -> String {
    let s = scenario(name);
    let mut run = s.run(seed);
    verdict(&s, id, &run).unwrap_or_else(|r| panic!("P{id} fails on clean {name}: {r}"));
    plant(&mut run);
    verdict(&s, id, &run).expect_err(&format!("P{id} missed the planted violation"))
}

fn position(run: &RunResult, f: impl Fn(&Event) -> bool) -> usize {
    run.trace.events.iter().position(f).expect("event present")
}

fn is_positive_insert(e: &Event) -> bool {
    matches!(e, Event::CacheInsert { data: CachedData::Positive { rrset, .. }, .. }
        if rrset.rrset.rtype() == RecordType::A)
}

fn tamper_a(data: &mut CachedData) {
    if let CachedData::Positive { rrset, .. } = data {
        rrset.rrset = rrset.rrset.with_rdata(vec![RData::A("evil".into())]).unwrap();
    }
}

/// First Secure accepted A RRSet, rewritten.
fn tamper_accept(run: &mut RunResult) {
    for e in &mut run.trace.events {
        if let Event::Accept { security: SecurityState::Secure, rrsets, .. } = e {
            if let Some(a) = rrsets.iter_mut().find(|a| a.rrset.rtype() == RecordType::A) {
                a.rrset = a.rrset.with_rdata(vec![RData::A("evil".into())]).unwrap();
                return;
            }
        }
    }
    panic!("no Secure A acceptance");
}

#[test]
fn p1_cached_data_not_served() {
    let why = caught("baseline", 0, 1, |run| {
        let i = position(run, is_positive_insert);
        if let Event::CacheInsert { data, .. } = &mut run.trace.events[i] {
            tamper_a(data);
        }
    });
    assert!(why.contains("not served"), "{why}");
}

#[test]
fn p2_insert_without_miss() {
    caught("baseline", 0, 2, |run| {
        let i = position(run, |e| matches!(e, Event::CacheInsert { .. }));
        let Event::CacheInsert { scope, .. } = run.trace.events[i].clone() else { unreachable!() };
        run.trace.events.retain(|e| {
            !matches!(e, Event::CacheLookup { scope: s, found: None, .. } | Event::CacheExpire { scope: s, .. } if *s == scope)
        });
    });
}

#[test]
fn p3_entry_in_wrong_partition() {
    let why = caught("baseline", 0, 3, |run| {
        let i = position(run, is_positive_insert);
        if let Event::CacheInsert { key, .. } = &mut run.trace.events[i] {
            key.partition = n("b.example");
        }
    });
    assert!(why.contains("partition"), "{why}");
}

#[test]
fn p4_read_of_stale_version() {
    caught("baseline", 0, 4, |run| {
        let i = position(run, |e| matches!(e, Event::CacheRead { .. }));
        if let Event::CacheRead { version, .. } = &mut run.trace.events[i] {
            *version += 100;
        }
    });
}

#[test]
fn p5_two_holders() {
    let why = caught("baseline", 0, 5, |run| {
        let i = position(run, |e| matches!(e, Event::LockAcquire { .. }));
        let mut intruder = run.trace.events[i].clone();
        if let Event::LockAcquire { activity, .. } = &mut intruder {
            *activity = ActivityId(99);
        }
        run.trace.events.insert(i + 1, intruder);
    });
    assert!(why.contains("held by"), "{why}");
}

#[test]
fn p6_lookup_sees_old_state() {
    caught("baseline", 0, 6, |run| {
        let i = position(run, |e| matches!(e, Event::CacheLookup { found: Some(_), .. }));
        if let Event::CacheLookup { found, .. } = &mut run.trace.events[i] {
            *found = None;
        }
    });
}

#[test]
fn p7_unanswered_question() {
    let why = caught("baseline", 0, 7, |run| {
        let i = position(run, |e| matches!(e, Event::ClientResult { .. }));
        run.trace.events.remove(i);
    });
    assert!(why.contains("never answered") || why.contains("asked again"), "{why}");
}

#[test]
fn p7_runaway_question() {
    caught("downgrade", 0, 7, |run| {
        let i = position(run, |e| matches!(e, Event::ResolverQuery { .. }));
        let filler = run.trace.events[i].clone();
        for _ in 0..8 * 128 {
            run.trace.events.insert(i, filler.clone());
        }
    });
}

#[test]
fn p8_lock_never_released() {
    let why = caught("baseline", 0, 8, |run| {
        let i = run.trace.events.iter().rposition(|e| matches!(e, Event::LockRelease { .. })).unwrap();
        run.trace.events.remove(i);
    });
    assert!(why.contains("never released"), "{why}");
}

#[test]
fn p8_lock_held_too_long() {
    caught("baseline", 0, 8, |run| {
        let i = position(run, |e| matches!(e, Event::LockAcquire { .. }));
        let Event::LockAcquire { activity, key, scope } = run.trace.events[i].clone() else { unreachable!() };
        for _ in 0..=16 {
            run.trace.events.insert(i + 1, Event::CacheLookup { activity, key: key.clone(), scope, found: None });
        }
    });
}

#[test]
fn p9_unsigned_data_accepted() {
    caught("baseline", 0, 9, tamper_accept);
}

#[test]
fn p10_accepted_data_does_not_verify() {
    caught("baseline", 0, 10, tamper_accept);
}

#[test]
fn p11_accepted_data_does_not_validate() {
    caught("baseline", 0, 11, tamper_accept);
}

#[test]
fn p12_chain_with_foreign_key() {
    let why = caught("baseline", 0, 12, |run| {
        for e in &mut run.trace.events {
            if let Event::Accept { security: SecurityState::Secure, chain, .. } = e {
                if let Some(last) = chain.last_mut() {
                    last.zsks[0].key.key = KeyId(1 << 40);
                    return;
                }
            }
        }
    });
    assert!(why.contains("never published"), "{why}");
}

fn strip_denials(run: &mut RunResult) {
    for e in &mut run.trace.events {
        if let Event::Accept { denial, .. } = e {
            *denial = None;
        }
    }
}

#[test]
fn p13_needs_a_secure_nsec_denial() {
    caught("baseline", 0, 13, strip_denials);
}

#[test]
fn p16_needs_a_secure_nsec3_denial() {
    caught("denial-nsec3", 0, 16, strip_denials);
}

fn leak(s: &Scenario, fam: DenialFamily) -> impl FnOnce(&mut RunResult) {
    let (name, _) = s.topology.secret_names(fam).into_iter().next().expect("a secret name");
    move |run| run.trace.events.insert(0, Event::KnowledgeGrow { names: vec![name] })
}

#[test]
fn p14_leak_without_query() {
    let s = scenario("enumeration");
    // Seed 0 of the walk leaks already; a client-only rerun starts clean.
    let clean = s.with_plans(s.plans[..1].to_vec());
    let mut run = clean.run(0);
    verdict(&clean, 14, &run).unwrap();
    leak(&s, DenialFamily::Nsec)(&mut run);
    assert!(verdict(&clean, 14, &run).is_err());
}

#[test]
fn p17_leak_without_query() {
    let s = scenario("enumeration-nsec3");
    caught("enumeration-nsec3", 0, 17, leak(&s, DenialFamily::Nsec3));
}

fn forge_denial(rtype: RecordType) -> impl FnOnce(&mut RunResult) {
    move |run| {
        for e in &mut run.trace.events {
            if let Event::Accept { security: SecurityState::Secure, denial: Some(d), .. } = e {
                if let Some(a) = d.records.iter_mut().find(|a| a.rrset.rtype() == rtype) {
                    let rd = match &a.rrset.rdata()[0] {
                        RData::Nsec(x) => RData::Nsec(dnssec_model::record::NsecData { next: n("zzz.example"), ..x.clone() }),
                        RData::Nsec3(x) => {
                            let mut x = x.clone();
                            x.types.insert(RecordType::MX);
                            RData::Nsec3(x)
                        }
                        _ => unreachable!(),
                    };
                    a.rrset = a.rrset.with_rdata(vec![rd]).unwrap();
                    return;
                }
            }
        }
        panic!("no Secure {rtype} denial");
    }
}

#[test]
fn p15_denial_record_never_served() {
    let why = caught("baseline", 0, 15, forge_denial(RecordType::NSEC));
    assert!(why.contains("never sent"), "{why}");
}

#[test]
fn p18_denial_record_never_served() {
    let why = caught("denial-nsec3", 0, 18, forge_denial(RecordType::NSEC3));
    assert!(why.contains("never sent"), "{why}");
}

#[test]
fn p19_holds_under_servfail_and_catches_the_gap() {
    let bad = scenario("mixed-gap").run(0);
    let gap = bad
        .trace
        .events
        .iter()
        .find(|e| matches!(e, Event::Accept { qname, denial: Some(_), .. } if *qname == n("b1.example")))
        .cloned()
        .expect("b1 denial accepted");
    caught("mixed-gap-servfail", 0, 19, move |run| run.trace.events.push(gap));
}

/// A falsified verdict replays to the same failure at the same event.
#[test]
fn falsified_verdicts_replay() {
    for (name, id) in [("enumeration", 14), ("mixed-gap", 19)] {
        let s = scenario(name);
        let v = check_scenario(&s, &[id], 0..20).unwrap().remove(0);
        let Outcome::Falsified(c) = v.outcome else { panic!("P{id} holds on {name}") };
        let seed = c.seed.expect("safety counterexample has a seed");
        let again = check_scenario(&s, &[id], seed..seed + 1).unwrap().remove(0);
        let Outcome::Falsified(c2) = again.outcome else { panic!("P{id} on {name} did not replay") };
        assert_eq!((c.event, &c.reason), (c2.event, &c2.reason));
        assert_eq!(c.trace.unwrap().to_json_lines(), c2.trace.unwrap().to_json_lines());
    }
}
