//! NSEC zone walking through a resolver.
//!
//! From each known owner the walker asks for a name just past it in canonical
//! order. The NSEC record covering that name hands back the next owner. The
//! first probe is the owner's `\000` child; if the owner is a delegation the
//! child zone answers instead, so the walker falls back to the owner's
//! immediate sibling `<label>\000`, which sorts after the whole subtree.

use std::collections::BTreeSet;

use serde::Serialize;

use super::scenario::{client_query, QuerySpec};
use super::trace::Role;
use super::world::World;
use crate::crypto::HashedLabel;
use crate::name::DomainName;
use crate::record::{group_rrsets, RData, RecordType};
use crate::resolver::{ActivityId, Resolver};
use crate::zone::nsec_covers;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum WalkOutcome {
    /// The chain was followed back to the apex.
    Complete { apex: DomainName, names: BTreeSet<DomainName>, queries: usize },
    /// Only hashed owners came back.
    EnumerationBlocked { apex: DomainName, hashes: BTreeSet<HashedLabel>, queries: usize },
    /// The budget ran out, or a step produced no usable record.
    Incomplete { apex: DomainName, names: BTreeSet<DomainName>, queries: usize },
}

impl WalkOutcome {
    pub fn names(&self) -> BTreeSet<DomainName> {
        match self {
            WalkOutcome::Complete { names, .. } | WalkOutcome::Incomplete { names, .. } => names.clone(),
            WalkOutcome::EnumerationBlocked { .. } => BTreeSet::new(),
        }
    }

    pub fn queries(&self) -> usize {
        match self {
            WalkOutcome::Complete { queries, .. }
            | WalkOutcome::EnumerationBlocked { queries, .. }
            | WalkOutcome::Incomplete { queries, .. } => *queries,
        }
    }
}

fn child_probe(cur: &DomainName) -> Option<DomainName> {
    cur.child(b"\0").ok()
}

fn sibling_probe(cur: &DomainName) -> Option<DomainName> {
    let first = cur.first_label()?;
    let mut label = first.to_vec();
    label.push(0);
    cur.parent()?.child(&label).ok()
}

/// What one probe revealed about the target zone.
enum Seen {
    Next { owner: DomainName, next: DomainName },
    Hashed(Vec<HashedLabel>),
    Nothing,
}

fn inspect(apex: &DomainName, probe: &DomainName, records: &[crate::record::ResourceRecord]) -> Seen {
    let mut hashes = Vec::new();
    for s in group_rrsets(records) {
        let from_target = s.sigs.iter().any(|g| g.signer == *apex) && s.rrset.owner().is_subdomain_of(apex);
        if !from_target {
            continue;
        }
        for r in s.rrset.rdata() {
            match r {
                RData::Nsec(d) if nsec_covers(s.rrset.owner(), &d.next, probe) => {
                    return Seen::Next { owner: s.rrset.owner().clone(), next: d.next.clone() };
                }
                RData::Nsec3(d) => {
                    hashes.extend(HashedLabel::from_owner(s.rrset.owner()));
                    hashes.push(d.next_hashed);
                }
                _ => {}
            }
        }
    }
    if hashes.is_empty() {
        Seen::Nothing
    } else {
        Seen::Hashed(hashes)
    }
}

/// Hashed probes tried against an NSEC3 zone before giving up.
const NSEC3_PROBES: usize = 4;

pub async fn walk(world: &World, resolver: &Resolver, act: ActivityId, apex: &DomainName, budget: usize) -> WalkOutcome {
    let mut names = BTreeSet::new();
    let mut hashes = BTreeSet::new();
    let mut queries = 0;
    let mut cur = apex.clone();
    'outer: while queries < budget {
        for probe in [child_probe(&cur), sibling_probe(&cur)].into_iter().flatten() {
            if queries >= budget {
                break 'outer;
            }
            if !probe.is_subdomain_of(apex) {
                continue;
            }
            queries += 1;
            let spec = QuerySpec { qname: probe.clone(), qtype: RecordType::A, cd: false };
            let out = client_query(world, resolver, act, Role::Attacker, &spec).await;
            let Ok(v) = out.result else {
                continue;
            };
            let records: Vec<_> = v.response.answer.iter().chain(&v.response.authority).cloned().collect();
            match inspect(apex, &probe, &records) {
                Seen::Next { owner, next } => {
                    names.insert(owner);
                    names.insert(next.clone());
                    if next == *apex || next <= cur {
                        return WalkOutcome::Complete { apex: apex.clone(), names, queries };
                    }
                    cur = next;
                    continue 'outer;
                }
                Seen::Hashed(h) => {
                    hashes.extend(h);
                    if names.is_empty() {
                        return blocked(world, resolver, act, apex, hashes, queries, budget).await;
                    }
                }
                Seen::Nothing => {}
            }
        }
        break;
    }
    WalkOutcome::Incomplete { apex: apex.clone(), names, queries }
}

/// The zone uses NSEC3: collect a few more hashes, which is all a walker can get.
async fn blocked(
    world: &World,
    resolver: &Resolver,
    act: ActivityId,
    apex: &DomainName,
    mut hashes: BTreeSet<HashedLabel>,
    mut queries: usize,
    budget: usize,
) -> WalkOutcome {
    for i in 0..NSEC3_PROBES {
        if queries >= budget {
            break;
        }
        let Ok(probe) = apex.child(format!("probe{i}").as_bytes()) else {
            break;
        };
        queries += 1;
        let spec = QuerySpec { qname: probe.clone(), qtype: RecordType::A, cd: false };
        let out = client_query(world, resolver, act, Role::Attacker, &spec).await;
        if let Ok(v) = out.result {
            if let Seen::Hashed(h) = inspect(apex, &probe, &v.response.authority) {
                hashes.extend(h);
            }
        }
    }
    WalkOutcome::EnumerationBlocked { apex: apex.clone(), hashes, queries }
}
