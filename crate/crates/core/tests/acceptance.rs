//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{built_nsec, built_nsec3, fixture, n, random_params, scenario, RandomZone};
use dnssec_model::adversary::AdversaryAction;
use dnssec_model::harness::linearizability::{self, Locking};
use dnssec_model::harness::properties::{check_scenario, Outcome};
use dnssec_model::harness::replay::{self, Replay};
use dnssec_model::harness::report;
use dnssec_model::harness::scenario::{Expectation, Scenario};
use dnssec_model::harness::trace::Event;
use dnssec_model::harness::walker::WalkOutcome;
use dnssec_model::record::{DenialFamily, Rcode};
use dnssec_model::resolver::SecurityState;
use dnssec_model::zone::{build_nsec3_chain, build_nsec_chain};

const SEEDS: u64 = 500;
const TIME_LIMIT: Duration = Duration::from_secs(600);
/// Seeds used where a criterion asks for the same result on every seed.
const STABLE_SEEDS: u64 = 100;

type Check = Result<String, String>;
type Criterion = fn() -> Check;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Properties 1-13 and 15-18 hold; 14 and 19 fall with the expected witnesses.
fn c1() -> Check {
    let start = Instant::now();
    let mut held = BTreeSet::new();
    for (name, props) in [
        ("baseline", (1..=13).chain([15]).collect::<Vec<u8>>()),
        ("denial-nsec3", vec![16, 17, 18]),
    ] {
        let s = scenario(name);
        for r in report::check(&s, Some(&props), Some(0..SEEDS)).map_err(|e| e.to_string())? {
            ensure(r.result == Expectation::Holds, || {
                format!("P{} falsified on {name}: {}", r.id, r.reason.clone().unwrap_or_default())
            })?;
            held.insert(r.id);
        }
    }
    ensure(held.len() == 17, || format!("only {} properties checked", held.len()))?;

    let s = scenario("enumeration");
    let p14 = &report::check(&s, Some(&[14]), Some(0..SEEDS)).map_err(|e| e.to_string())?[0];
    let trace = p14.trace.as_ref().ok_or("P14 not falsified on the NSEC scenario")?;
    let asked: BTreeSet<_> = trace
        .iter()
        .filter_map(|e| match e {
            Event::ClientQuery { qname, .. } => Some(qname.clone()),
            _ => None,
        })
        .collect();
    let secret = s.topology.all_secret_names();
    let leaked = trace
        .iter()
        .filter_map(|e| match e {
            Event::KnowledgeGrow { names } => Some(names),
            _ => None,
        })
        .flatten()
        .find(|x| secret.contains(*x) && !asked.contains(*x))
        .ok_or("P14 trace shows no unqueried zone name in the adversary's knowledge")?;

    let s = scenario("mixed-gap");
    let p19 = &report::check(&s, Some(&[19]), Some(0..SEEDS)).map_err(|e| e.to_string())?[0];
    ensure(p19.result == Expectation::Falsified, || "P19 holds on the mixed scenario".into())?;

    let took = start.elapsed();
    ensure(took < TIME_LIMIT, || format!("took {took:?}"))?;
    Ok(format!("17 hold over {SEEDS} seeds; P14 leaks {leaked}; P19 falsified; {:.1}s", took.as_secs_f64()))
}

fn stable(s: &Scenario) -> Result<Replay, String> {
    replay::stable(s, 0..STABLE_SEEDS).map_err(|u| format!("{} differs at seed {}", s.file.name, u.seed))
}

fn outcome<'a>(r: &'a Replay, qname: &str) -> Result<&'a replay::QueryOutcome, String> {
    r.outcomes.iter().find(|o| o.qname == n(qname)).ok_or_else(|| format!("no outcome for {qname}"))
}

/// Mixed NSEC/NSEC3 gap under both policies.
fn c2() -> Check {
    let accept = scenario("mixed-gap");
    let r = stable(&accept)?;
    let b1 = outcome(&r, "b1.example")?;
    ensure(b1.rcode == Some(Rcode::NxDomain) && b1.cached, || format!("accept: b1 gave {b1:?}"))?;
    let run = accept.run(0);
    let families: Vec<_> = run
        .cache
        .iter()
        .filter(|(k, _)| k.owner == n("b1.example"))
        .map(|(_, e)| e.data.denial_families())
        .collect();
    ensure(families == [vec![DenialFamily::Nsec3]], || format!("accept: b1 cached as {families:?}"))?;
    let c = outcome(&r, "c.example")?;
    ensure(c.rcode == Some(Rcode::NoError) && c.answers > 0, || format!("accept: c gave {c:?}"))?;
    ensure(r.census.nsec == 1 && r.census.nsec3 == 1 && r.census.mixed == 0, || format!("census {:?}", r.census))?;
    let census = (r.census.nsec, r.census.nsec3);

    let refuse = scenario("mixed-gap-servfail");
    let r = stable(&refuse)?;
    let b1 = outcome(&r, "b1.example")?;
    ensure(b1.rcode == Some(Rcode::ServFail) && !b1.cached, || format!("servfail: b1 gave {b1:?}"))?;
    Ok(format!("accept caches NSEC3 denial, c answered, NSEC/NSEC3 census {census:?}; servfail refuses; stable over {STABLE_SEEDS} seeds"))
}

/// Zone walking recovers the NSEC zone and nothing from the NSEC3 one.
fn c3() -> Check {
    let want: BTreeSet<_> =
        ["example", "a.example", "ai.example", "b.example", "ns.example", "*.w.example", "x.w.example", "x.y.w.example", "xx.example"]
            .into_iter()
            .map(n)
            .collect();
    let s = scenario("enumeration");
    let mut worst = 0;
    for seed in 0..STABLE_SEEDS {
        let run = s.run(seed);
        let walk = run.walks.first().ok_or("no walk")?;
        ensure(matches!(walk, WalkOutcome::Complete { .. }), || format!("seed {seed}: {walk:?}"))?;
        ensure(walk.names() == want, || format!("seed {seed}: got {:?}", walk.names()))?;
        ensure(walk.queries() <= 18, || format!("seed {seed}: {} queries", walk.queries()))?;
        worst = worst.max(walk.queries());
    }
    let s = scenario("enumeration-nsec3");
    for seed in 0..STABLE_SEEDS {
        let run = s.run(seed);
        let walk = run.walks.first().ok_or("no walk")?;
        ensure(walk.names().is_empty(), || format!("nsec3 seed {seed}: recovered {:?}", walk.names()))?;
    }
    Ok(format!("9/9 names in at most {worst} queries; NSEC3 zone yields 0"))
}

fn single(r: &Replay) -> Result<&replay::QueryOutcome, String> {
    r.outcomes.last().ok_or_else(|| "no client outcome".into())
}

/// Algorithm downgrade under both policies.
fn c4() -> Check {
    let strict = stable(&scenario("downgrade"))?;
    let o = single(&strict)?;
    ensure(o.rcode == Some(Rcode::ServFail), || format!("strict gave {o:?}"))?;
    let permissive = stable(&scenario("downgrade-permissive"))?;
    let o = single(&permissive)?;
    ensure(o.rcode == Some(Rcode::NoError) && o.security == Some(SecurityState::Insecure), || format!("permissive gave {o:?}"))?;
    let run = scenario("downgrade").run(0);
    ensure(
        run.trace.iter().any(|e| matches!(e, Event::Adversary { action: AdversaryAction::AlgRewrite { .. }, .. })),
        || "no algorithm rewrite in trace".into(),
    )?;
    Ok("strict SERVFAIL, permissive Insecure".into())
}

/// Unvalidated cache use under both cache layouts.
fn c5() -> Check {
    let unified = stable(&scenario("ruc"))?;
    let o = single(&unified)?;
    ensure(o.rcode == Some(Rcode::ServFail) && o.security == Some(SecurityState::Bogus), || format!("unified gave {o:?}"))?;
    let split = stable(&scenario("ruc-partitioned"))?;
    let o = single(&split)?;
    ensure(o.rcode == Some(Rcode::NoError) && o.security == Some(SecurityState::Secure), || format!("partitioned gave {o:?}"))?;
    Ok("unified Bogus/SERVFAIL, partitioned Secure".into())
}

/// Cache linearizability and chain builders against sorted-vector oracles.
fn c6() -> Check {
    let lin = linearizability::check(0..10_000, Locking::Scoped);
    ensure(lin.violations == 0, || format!("{} violations, first at seed {:?}", lin.violations, lin.first_violation))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..1000 {
        let rz = RandomZone::generate(&mut rng, 32, true);
        let z = rz.zone();
        let nsec = build_nsec_chain(&z).map_err(|e| e.to_string())?;
        ensure(built_nsec(&nsec) == rz.expected_nsec(), || format!("zone {i}: NSEC chain differs for {:?}", rz.owners.keys()))?;
        let p = random_params(&mut rng);
        let nsec3 = build_nsec3_chain(&z, &p).map_err(|e| e.to_string())?;
        ensure(built_nsec3(&nsec3) == rz.expected_nsec3(&p.salt, p.iterations), || {
            format!("zone {i}: NSEC3 chain differs for {:?} under {p}", rz.owners.keys())
        })?;
    }
    Ok(format!("{} interleavings linearizable; 1000 zones match both oracles", lin.runs))
}

/// Lock and bound properties on every scenario the other criteria ran.
fn c7() -> Check {
    let names = [
        "baseline", "denial-nsec3", "enumeration", "enumeration-nsec3", "mixed-gap", "mixed-gap-servfail",
        "downgrade", "downgrade-permissive", "ruc", "ruc-partitioned",
    ];
    for name in names {
        let s = scenario(name);
        let seeds = if matches!(name, "baseline" | "denial-nsec3" | "enumeration" | "mixed-gap") { SEEDS } else { STABLE_SEEDS };
        for v in check_scenario(&s, &[4, 5, 7, 8], 0..seeds).map_err(|e| e.to_string())? {
            if let Outcome::Falsified(c) = v.outcome {
                return Err(format!("P{} on {name}: {} (seed {:?})", v.id, c.reason, c.seed));
            }
        }
    }
    Ok(format!("P4, P5, P7, P8 hold on all {} scenarios", names.len()))
}

fn main() -> ExitCode {
    assert!(fixture("scenarios").is_dir(), "fixtures missing");
    let criteria: [(&str, Criterion); 7] = [
        ("C1 property verdicts", c1),
        ("C2 mixed denial gap", c2),
        ("C3 zone enumeration", c3),
        ("C4 algorithm downgrade", c4),
        ("C5 unvalidated cache use", c5),
        ("C6 oracles", c6),
        ("C7 lock and bound properties", c7),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
