mod common;

use std::sync::Arc;

use common::{fixture, n};
use dnssec_model::crypto::Nsec3Params;
use dnssec_model::harness::scenario::{ActivityPlan, QuerySpec, Scenario};
use dnssec_model::harness::topology::{ChainSpec, Topology, ZoneConfig};
use dnssec_model::harness::trace::Role;
use dnssec_model::record::{RData, Rcode, RecordType};
use dnssec_model::resolver::SecurityState;
use dnssec_model::zone::{build_nsec_chain, load_zone};

fn resolve(zone: &str, chain: ChainSpec, question: &str) -> (Rcode, SecurityState) {
    let z = load_zone(zone).unwrap();
    let topology = Arc::new(Topology::build(vec![ZoneConfig::new(z, chain)]).unwrap());
    let q: QuerySpec = question.parse().unwrap();
    let s = Scenario::from_topology(
        "denial",
        topology,
        vec![ActivityPlan::Client { role: Role::Client, queries: vec![q], random: None, after: None }],
    );
    let run = s.run(0);
    let v = run.results[0].result.as_ref().unwrap();
    (v.response.rcode, v.security)
}

const ENT_WILDCARD: &str = "$ORIGIN example\nexample NS ns.example\nz0.example A ip\nns.*.z0.example A ip\n";

#[test]
fn empty_wildcard_gives_nodata_nsec() {
    assert_eq!(resolve(ENT_WILDCARD, ChainSpec::Nsec, "q.z0.example A"), (Rcode::NoError, SecurityState::Secure));
}

#[test]
fn empty_wildcard_gives_nodata_nsec3() {
    let chain = ChainSpec::Nsec3(Nsec3Params::default());
    assert_eq!(resolve(ENT_WILDCARD, chain, "q.z0.example A"), (Rcode::NoError, SecurityState::Secure));
}

#[test]
fn nxdomain_under_each_chain() {
    let zone = "$ORIGIN example\nexample NS ns.example\na.example A ip\nb.c.example A ip\n";
    for chain in [ChainSpec::Nsec, ChainSpec::Nsec3("1:3:aabb".parse().unwrap())] {
        assert_eq!(resolve(zone, chain.clone(), "x.example A"), (Rcode::NxDomain, SecurityState::Secure));
        assert_eq!(resolve(zone, chain.clone(), "a.example MX"), (Rcode::NoError, SecurityState::Secure));
        assert_eq!(resolve(zone, chain.clone(), "c.example A"), (Rcode::NoError, SecurityState::Secure));
        assert_eq!(resolve(zone, chain, "x.b.c.example A"), (Rcode::NxDomain, SecurityState::Secure));
    }
}

#[test]
fn wildcard_expansion_validates() {
    let zone = "$ORIGIN example\nexample NS ns.example\n*.w.example MX ai.example\nx.w.example MX xx.example\n";
    for chain in [ChainSpec::Nsec, ChainSpec::Nsec3(Nsec3Params::default())] {
        assert_eq!(resolve(zone, chain.clone(), "z.w.example MX"), (Rcode::NoError, SecurityState::Secure));
        assert_eq!(resolve(zone, chain, "z.w.example A"), (Rcode::NoError, SecurityState::Secure));
    }
}

/// The example zone's listing spells out its NSEC chain; rebuilding it must agree.
#[test]
fn example_listing_chain_is_reproduced() {
    let text = std::fs::read_to_string(fixture("zones/example.zone")).unwrap();
    let listed = load_zone(&text).unwrap();
    let rebuilt = build_nsec_chain(&listed.without_denial()).unwrap();
    let chain = |z: &dnssec_model::zone::Zone| -> Vec<(String, String)> {
        z.rrsets_of_type(RecordType::NSEC)
            .map(|s| match &s.rdata()[0] {
                RData::Nsec(d) => (s.owner().to_string(), d.next.to_string()),
                _ => unreachable!(),
            })
            .collect()
    };
    let want = chain(&listed);
    assert_eq!(want.len(), 7, "listing carries seven NSEC records");
    let got = chain(&rebuilt);
    for pair in &want {
        assert!(got.contains(pair), "{pair:?} missing from {got:?}");
    }
    assert_eq!(listed.owner_names().len(), 9);
    assert!(listed.owner_names().contains(&n("*.w.example")));
}

/// The mixed listing: with its salt, b.example hashes highest and the apex lowest.
#[test]
fn mixed_listing_hash_order() {
    use dnssec_model::crypto::{Nsec3Hasher, Sha1Nsec3};
    let p: Nsec3Params = "1:0:0021".parse().unwrap();
    let h = |s: &str| Sha1Nsec3.hash(&n(s), &p);
    let names = ["example", "a.example", "b.example", "c.example"];
    assert!(names.iter().all(|x| h(x) <= h("b.example")));
    assert!(names.iter().all(|x| h(x) >= h("example")));
    assert_eq!(h("b.example").to_string(), "js0bdh2c3ie3miamsfipu6223c2saaje");
}
