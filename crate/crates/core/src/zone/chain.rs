use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::{ChainMode, Zone};
use crate::crypto::{HashedLabel, Nsec3Hasher, Nsec3Params};
use crate::name::DomainName;
use crate::record::{DenialFamily, NsecData, Nsec3Data, RData, RRSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("zone {0} already carries NSEC or NSEC3 records")]
    AlreadyHasDenial(DomainName),
    #[error("owner {0} has no NSEC/NSEC3 assignment")]
    Unassigned(DomainName),
    #[error("assignment names {0}, which owns nothing in the zone")]
    UnknownOwner(DomainName),
    #[error("NSEC3 hash collision between {0} and {1}")]
    HashCollision(DomainName, DomainName),
}

fn successor<T: Ord + Clone>(sorted: &BTreeSet<T>, x: &T) -> T {
    use std::ops::Bound::{Excluded, Unbounded};
    sorted
        .range((Excluded(x), Unbounded))
        .next()
        .or_else(|| sorted.iter().next())
        .cloned()
        .expect("non-empty set")
}

fn chain_members(z: &Zone) -> BTreeSet<DomainName> {
    let mut owners = z.authoritative_owners();
    owners.insert(z.apex().clone());
    owners
}

fn hash_all(
    names: impl IntoIterator<Item = DomainName>,
    params: &Nsec3Params,
    hasher: &dyn Nsec3Hasher,
) -> Result<BTreeMap<HashedLabel, DomainName>, ChainError> {
    let mut out = BTreeMap::new();
    for name in names {
        let h = hasher.hash(&name, params);
        if let Some(prev) = out.insert(h, name.clone()) {
            return Err(ChainError::HashCollision(prev, name));
        }
    }
    Ok(out)
}

/// One NSEC per authoritative owner, linked in canonical order and wrapping to the apex.
pub fn build_nsec_chain(z: &Zone) -> Result<Zone, ChainError> {
    if z.has_denial_records() {
        return Err(ChainError::AlreadyHasDenial(z.apex().clone()));
    }
    let members = chain_members(z);
    let mut out = z.clone();
    for owner in &members {
        let next = successor(&members, owner);
        let rd = RData::Nsec(NsecData { next, types: z.nsec_types(owner) });
        out.put_rrset(RRSet::single(owner.clone(), rd)).expect("owner in zone");
    }
    out.set_chain(ChainMode::NsecOnly);
    Ok(out)
}

pub fn build_nsec3_chain(z: &Zone, params: &Nsec3Params) -> Result<Zone, ChainError> {
    build_nsec3_chain_with(z, params, z.hasher().clone())
}

/// NSEC3 records for every authoritative owner and empty non-terminal, linked in hash order.
pub fn build_nsec3_chain_with(
    z: &Zone,
    params: &Nsec3Params,
    hasher: Arc<dyn Nsec3Hasher>,
) -> Result<Zone, ChainError> {
    if z.has_denial_records() {
        return Err(ChainError::AlreadyHasDenial(z.apex().clone()));
    }
    let mut members = chain_members(z);
    members.extend(z.empty_non_terminals());
    let hashed = hash_all(members, params, hasher.as_ref())?;
    let order: BTreeSet<HashedLabel> = hashed.keys().copied().collect();
    let mut out = z.clone();
    out.set_hasher(hasher);
    for (h, name) in &hashed {
        let rd = RData::Nsec3(Nsec3Data {
            params: params.clone(),
            next_hashed: successor(&order, h),
            types: z.nsec3_types(name),
        });
        out.put_rrset(RRSet::single(h.owner_name(z.apex()), rd)).expect("hashed owner in zone");
    }
    out.set_chain(ChainMode::Nsec3Only(params.clone()));
    Ok(out)
}

/// Per-owner family by `assignment`. Each record's successor is taken over the
/// full owner set in its own family's order, so an NSEC may point at an owner
/// that carries NSEC3, and the reverse.
pub fn build_mixed_chain(
    z: &Zone,
    assignment: &BTreeMap<DomainName, DenialFamily>,
    params: &Nsec3Params,
    hasher: Arc<dyn Nsec3Hasher>,
) -> Result<Zone, ChainError> {
    if z.has_denial_records() {
        return Err(ChainError::AlreadyHasDenial(z.apex().clone()));
    }
    let members = chain_members(z);
    if let Some(extra) = assignment.keys().find(|k| !members.contains(*k)) {
        return Err(ChainError::UnknownOwner(extra.clone()));
    }
    if let Some(missing) = members.iter().find(|m| !assignment.contains_key(*m)) {
        return Err(ChainError::Unassigned(missing.clone()));
    }
    let hashed = hash_all(members.iter().cloned(), params, hasher.as_ref())?;
    let by_name: BTreeMap<&DomainName, HashedLabel> = hashed.iter().map(|(h, n)| (n, *h)).collect();
    let order: BTreeSet<HashedLabel> = hashed.keys().copied().collect();
    let mut out = z.clone();
    out.set_hasher(hasher);
    for owner in &members {
        match assignment[owner] {
            DenialFamily::Nsec => {
                let rd = RData::Nsec(NsecData { next: successor(&members, owner), types: z.nsec_types(owner) });
                out.put_rrset(RRSet::single(owner.clone(), rd)).expect("owner in zone");
            }
            DenialFamily::Nsec3 => {
                let h = by_name[owner];
                let rd = RData::Nsec3(Nsec3Data {
                    params: params.clone(),
                    next_hashed: successor(&order, &h),
                    types: z.nsec3_types(owner),
                });
                out.put_rrset(RRSet::single(h.owner_name(z.apex()), rd)).expect("hashed owner in zone");
            }
        }
    }
    out.set_chain(ChainMode::Mixed { assignment: assignment.clone(), params: params.clone() });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Sha1Nsec3;
    use crate::record::RecordType;

    fn n(s: &str) -> DomainName {
        s.parse().unwrap()
    }

    fn zone(names: &[&str]) -> Zone {
        let mut z = Zone::new(n("example"));
        for s in names {
            z.add(n(s), RData::A("ip".into())).unwrap();
        }
        z
    }

    fn nsec_next(z: &Zone, owner: &str) -> DomainName {
        match &z.rrset(&n(owner), RecordType::NSEC).unwrap().rdata()[0] {
            RData::Nsec(d) => d.next.clone(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn nsec_chain_for_mixed_names() {
        let z = build_nsec_chain(&zone(&["example", "a.example", "b.example", "c.example"])).unwrap();
        assert_eq!(nsec_next(&z, "a.example"), n("b.example"));
        assert_eq!(nsec_next(&z, "b.example"), n("c.example"));
        assert_eq!(nsec_next(&z, "c.example"), n("example"));
        assert_eq!(nsec_next(&z, "example"), n("a.example"));
        assert_eq!(z.chain_mode(), Some(&ChainMode::NsecOnly));
    }

    #[test]
    fn single_owner_self_loops() {
        let z = build_nsec_chain(&zone(&["example"])).unwrap();
        assert_eq!(nsec_next(&z, "example"), n("example"));
        let z3 = build_nsec3_chain(&zone(&["example"]), &Nsec3Params::default()).unwrap();
        let recs: Vec<_> = z3.rrsets_of_type(RecordType::NSEC3).collect();
        assert_eq!(recs.len(), 1);
        let RData::Nsec3(d) = &recs[0].rdata()[0] else { unreachable!() };
        assert_eq!(HashedLabel::from_owner(recs[0].owner()), Some(d.next_hashed));
    }

    #[test]
    fn refuses_zone_with_denial() {
        let z = build_nsec_chain(&zone(&["example"])).unwrap();
        assert!(matches!(build_nsec_chain(&z), Err(ChainError::AlreadyHasDenial(_))));
    }

    #[test]
    fn mixed_assignment_must_cover_owners() {
        let z = zone(&["example", "a.example"]);
        let a: BTreeMap<_, _> = [(n("example"), DenialFamily::Nsec)].into();
        let e = build_mixed_chain(&z, &a, &Nsec3Params::default(), Arc::new(Sha1Nsec3)).unwrap_err();
        assert_eq!(e, ChainError::Unassigned(n("a.example")));
    }

    #[test]
    fn all_nsec_assignment_matches_nsec_builder() {
        let z = zone(&["example", "a.example", "x.y.example"]);
        let a: BTreeMap<_, _> = z.authoritative_owners().into_iter().map(|o| (o, DenialFamily::Nsec)).collect();
        let m = build_mixed_chain(&z, &a, &Nsec3Params::default(), Arc::new(Sha1Nsec3)).unwrap();
        let p = build_nsec_chain(&z).unwrap();
        assert_eq!(m.rrsets().collect::<Vec<_>>(), p.rrsets().collect::<Vec<_>>());
    }

    #[test]
    fn mixed_zone_reproduces_terminal_nsec3() {
        let z = zone(&["example", "a.example", "b.example", "c.example"]);
        let fam = |s| (n(s), if s == "b.example" { DenialFamily::Nsec3 } else { DenialFamily::Nsec });
        let a: BTreeMap<_, _> = ["example", "a.example", "b.example", "c.example"].into_iter().map(fam).collect();
        let p: Nsec3Params = "1:0:0021".parse().unwrap();
        let m = build_mixed_chain(&z, &a, &p, Arc::new(Sha1Nsec3)).unwrap();
        assert_eq!(nsec_next(&m, "a.example"), n("b.example"));
        assert_eq!(nsec_next(&m, "c.example"), n("example"));
        let recs: Vec<_> = m.rrsets_of_type(RecordType::NSEC3).collect();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].owner(), &n("js0bdh2c3ie3miamsfipu6223c2saaje.example"));
        let RData::Nsec3(d) = &recs[0].rdata()[0] else { unreachable!() };
        assert_eq!(d.next_hashed.to_string(), "2eukhg1dv906rqlih6rmqs4qce2agmuj");
    }
}
