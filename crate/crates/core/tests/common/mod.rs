//! Shared fixtures and independent oracles for the integration tests.
//!
//! The oracles work on plain label vectors and byte strings and only touch the
//! library's types at the boundary, so a bug in the model's name ordering or
//! hashing cannot hide in both places at once.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use data_encoding::BASE32HEX_NOPAD;
use rand::seq::SliceRandom;
use rand::Rng;
use sha1::{Digest, Sha1};

use dnssec_model::crypto::Nsec3Params;
use dnssec_model::harness::scenario::{ActivityPlan, Scenario};
use dnssec_model::harness::topology::{ChainSpec, Topology, ZoneConfig};
use dnssec_model::name::DomainName;
use dnssec_model::record::{RData, RecordType};
use dnssec_model::zone::Zone;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn scenario(name: &str) -> Scenario {
    let path = fixture(&format!("scenarios/{name}.toml"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn n(s: &str) -> DomainName {
    s.parse().unwrap()
}

/// Labels from the leftmost, lower-cased, without the root.
pub type Labels = Vec<Vec<u8>>;

pub fn labels_of(text: &str) -> Labels {
    text.trim_end_matches('.').split('.').filter(|l| !l.is_empty()).map(|l| l.to_ascii_lowercase().into_bytes()).collect()
}

pub fn text_of(l: &Labels) -> String {
    if l.is_empty() {
        return ".".into();
    }
    l.iter().map(|x| String::from_utf8(x.clone()).unwrap()).collect::<Vec<_>>().join(".")
}

/// Canonical order: compare right to left, label by label, as byte strings.
pub fn oracle_cmp(a: &Labels, b: &Labels) -> Ordering {
    let mut ia = a.iter().rev();
    let mut ib = b.iter().rev();
    loop {
        match (ia.next(), ib.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) => match x.cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            },
        }
    }
}

/// RFC 5155 hash of a lower-cased name, as the base32hex owner label.
pub fn oracle_nsec3(l: &Labels, salt: &[u8], iterations: u16) -> String {
    let mut wire = Vec::new();
    for x in l {
        wire.push(x.len() as u8);
        wire.extend_from_slice(x);
    }
    wire.push(0);
    let mut h: Vec<u8> = Sha1::new().chain_update(&wire).chain_update(salt).finalize().to_vec();
    for _ in 0..iterations {
        h = Sha1::new().chain_update(&h).chain_update(salt).finalize().to_vec();
    }
    BASE32HEX_NOPAD.encode(&h).to_ascii_lowercase()
}

fn is_strict_ancestor(a: &Labels, b: &Labels) -> bool {
    a.len() < b.len() && b[b.len() - a.len()..] == a[..]
}

/// A random unsigned zone, kept as both a label-level description and a [`Zone`].
#[derive(Debug, Clone)]
pub struct RandomZone {
    pub apex: Labels,
    /// Owner to the record types it holds.
    pub owners: BTreeMap<Labels, BTreeSet<&'static str>>,
}

const POOL: &[&str] = &["a", "b", "c", "d", "x", "y", "mail", "ns", "z0", "*"];

impl RandomZone {
    /// Up to `max` owners below `example`; `delegations` allows NS cuts and glue.
    pub fn generate(rng: &mut impl Rng, max: usize, delegations: bool) -> RandomZone {
        let apex = labels_of("example");
        let mut owners: BTreeMap<Labels, BTreeSet<&'static str>> = BTreeMap::new();
        let count = rng.gen_range(0..=max.saturating_sub(1));
        while owners.len() < count {
            let depth = rng.gen_range(1..=3);
            let mut name = apex.clone();
            for _ in 0..depth {
                name.insert(0, POOL.choose(rng).unwrap().as_bytes().to_vec());
            }
            let rtype = if delegations && depth == 1 && rng.gen_ratio(1, 5) && name[0] != b"*" { "NS" } else { "A" };
            owners.entry(name).or_default().insert(rtype);
        }
        RandomZone { apex, owners }
    }

    pub fn zone(&self) -> Zone {
        let apex: DomainName = text_of(&self.apex).parse().unwrap();
        let mut z = Zone::new(apex.clone());
        z.add(apex.clone(), RData::Ns(n("ns.example"))).unwrap();
        for (o, types) in &self.owners {
            let owner: DomainName = text_of(o).parse().unwrap();
            for t in types {
                let rd = match *t {
                    "NS" => RData::Ns(n("ns.elsewhere")),
                    _ => RData::A("192.0.2.1".into()),
                };
                z.add(owner.clone(), rd).unwrap();
            }
        }
        z
    }

    fn cuts(&self) -> Vec<&Labels> {
        self.owners.iter().filter(|(_, t)| t.contains("NS")).map(|(o, _)| o).collect()
    }

    /// Owners the chain must cover: the apex and everything not below a cut.
    pub fn authoritative(&self) -> Vec<Labels> {
        let cuts = self.cuts();
        let mut out: Vec<Labels> = vec![self.apex.clone()];
        out.extend(self.owners.keys().filter(|o| !cuts.iter().any(|c| is_strict_ancestor(c, o))).cloned());
        out.sort_by(oracle_cmp);
        out.dedup();
        out
    }

    pub fn empty_non_terminals(&self) -> Vec<Labels> {
        let auth = self.authoritative();
        let mut out = Vec::new();
        for o in &auth {
            for k in 1..o.len() {
                let a: Labels = o[k..].to_vec();
                if is_strict_ancestor(&self.apex, &a) && !auth.contains(&a) && !out.contains(&a) {
                    out.push(a);
                }
            }
        }
        out
    }

    /// Expected NSEC records: owner text to next-owner text, from a sorted vector.
    pub fn expected_nsec(&self) -> BTreeMap<String, String> {
        let sorted = self.authoritative();
        (0..sorted.len()).map(|i| (text_of(&sorted[i]), text_of(&sorted[(i + 1) % sorted.len()]))).collect()
    }

    /// Expected NSEC3 records: hashed owner label to next hashed label.
    pub fn expected_nsec3(&self, salt: &[u8], iterations: u16) -> BTreeMap<String, String> {
        let mut members = self.authoritative();
        members.extend(self.empty_non_terminals());
        let mut hashes: Vec<String> = members.iter().map(|m| oracle_nsec3(m, salt, iterations)).collect();
        hashes.sort();
        (0..hashes.len()).map(|i| (hashes[i].clone(), hashes[(i + 1) % hashes.len()].clone())).collect()
    }

    /// Every name the zone makes exist, as the walker should report them.
    pub fn existing_names(&self) -> BTreeSet<DomainName> {
        self.authoritative().iter().map(|l| text_of(l).parse().unwrap()).collect()
    }
}

/// NSEC records actually built, as owner text to next text.
pub fn built_nsec(z: &Zone) -> BTreeMap<String, String> {
    z.rrsets_of_type(RecordType::NSEC)
        .map(|s| match &s.rdata()[0] {
            RData::Nsec(d) => (s.owner().to_string().trim_end_matches('.').to_string(), d.next.to_string().trim_end_matches('.').to_string()),
            _ => unreachable!(),
        })
        .collect()
}

pub fn built_nsec3(z: &Zone) -> BTreeMap<String, String> {
    z.rrsets_of_type(RecordType::NSEC3)
        .map(|s| match &s.rdata()[0] {
            RData::Nsec3(d) => {
                let first = s.owner().first_label().unwrap();
                (String::from_utf8(first.to_vec()).unwrap(), d.next_hashed.to_string())
            }
            _ => unreachable!(),
        })
        .collect()
}

pub fn random_params(rng: &mut impl Rng) -> Nsec3Params {
    let salt: Vec<u8> = (0..rng.gen_range(0..3)).map(|_| rng.gen()).collect();
    Nsec3Params { algorithm: 1, iterations: rng.gen_range(0..3), salt }
}

/// A scenario serving `z` alone with one walker activity.
pub fn walk_scenario(z: Zone, spec: ChainSpec, budget: usize) -> Scenario {
    let apex = z.apex().clone();
    let topology = Arc::new(Topology::build(vec![ZoneConfig::new(z, spec)]).unwrap());
    Scenario::from_topology("walk", topology, vec![ActivityPlan::Walk { apex, budget, after: None }])
}
