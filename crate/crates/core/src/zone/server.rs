//! Stateless authoritative answers.

use super::{ChainMode, SignedZone};
use crate::crypto::HashedLabel;
use crate::name::DomainName;
use crate::record::{DenialFamily, Query, RData, RRSet, Rcode, RecordType, Response, SignedRRSet};

/// True if `q` lies strictly between `owner` and `next` in canonical order,
/// treating `next <= owner` as the wrap-around record.
pub fn nsec_covers(owner: &DomainName, next: &DomainName, q: &DomainName) -> bool {
    if owner < next {
        owner < q && q < next
    } else {
        q > owner || q < next
    }
}

pub fn nsec3_covers(owner: &HashedLabel, next: &HashedLabel, h: &HashedLabel) -> bool {
    owner.covers(next, h)
}

fn families(z: &SignedZone, preferred: Option<DenialFamily>) -> Vec<DenialFamily> {
    use DenialFamily::*;
    let base = match z.zone().chain_mode() {
        None => vec![],
        Some(ChainMode::NsecOnly) => vec![Nsec],
        Some(ChainMode::Nsec3Only(_)) => vec![Nsec3],
        Some(ChainMode::Mixed { .. }) if z.is_malicious() => vec![Nsec3, Nsec],
        Some(ChainMode::Mixed { .. }) => vec![Nsec, Nsec3],
    };
    match preferred {
        Some(p) if base.contains(&p) => {
            let mut v = vec![p];
            v.extend(base.into_iter().filter(|f| *f != p));
            v
        }
        _ => base,
    }
}

fn hash_of(z: &SignedZone, name: &DomainName) -> Option<HashedLabel> {
    let params = z.zone().chain_mode()?.nsec3_params()?;
    Some(z.zone().hasher().hash(name, params))
}

fn nsec3_owner_hash(s: &RRSet) -> Option<(HashedLabel, HashedLabel)> {
    let owner = HashedLabel::from_owner(s.owner())?;
    match s.rdata().first()? {
        RData::Nsec3(d) => Some((owner, d.next_hashed)),
        _ => None,
    }
}

fn signed(z: &SignedZone, s: &RRSet) -> SignedRRSet {
    z.signed_rrset(s.owner(), s.rtype()).expect("zone RRSet")
}

/// A record of `family` whose interval strictly covers `name`.
fn cover_in(z: &SignedZone, name: &DomainName, family: DenialFamily) -> Option<SignedRRSet> {
    match family {
        DenialFamily::Nsec => z
            .zone()
            .rrsets_of_type(RecordType::NSEC)
            .find(|s| match s.rdata().first() {
                Some(RData::Nsec(d)) => nsec_covers(s.owner(), &d.next, name),
                _ => false,
            })
            .map(|s| signed(z, s)),
        DenialFamily::Nsec3 => {
            let h = hash_of(z, name)?;
            z.zone()
                .rrsets_of_type(RecordType::NSEC3)
                .find(|s| nsec3_owner_hash(s).is_some_and(|(o, n)| nsec3_covers(&o, &n, &h)))
                .map(|s| signed(z, s))
        }
    }
}

fn cover(z: &SignedZone, name: &DomainName, preferred: Option<DenialFamily>) -> Option<(DenialFamily, SignedRRSet)> {
    families(z, preferred).into_iter().find_map(|f| cover_in(z, name, f).map(|s| (f, s)))
}

fn nsec3_match(z: &SignedZone, name: &DomainName) -> Option<SignedRRSet> {
    let h = hash_of(z, name)?;
    z.signed_rrset(&h.owner_name(z.apex()), RecordType::NSEC3)
}

/// Record asserting which types exist at `name` (or covering it, for an empty non-terminal under NSEC).
fn nodata_proof(z: &SignedZone, name: &DomainName) -> Vec<SignedRRSet> {
    for f in families(z, None) {
        let hit = match f {
            DenialFamily::Nsec => z.signed_rrset(name, RecordType::NSEC),
            DenialFamily::Nsec3 => nsec3_match(z, name),
        };
        if let Some(s) = hit {
            return vec![s];
        }
    }
    cover(z, name, None).map(|(_, s)| vec![s]).unwrap_or_default()
}

fn push_unique(out: &mut Vec<SignedRRSet>, s: SignedRRSet) {
    if !out.contains(&s) {
        out.push(s);
    }
}

fn in_zone_addresses(z: &SignedZone, targets: impl IntoIterator<Item = DomainName>) -> Vec<SignedRRSet> {
    let mut out = Vec::new();
    for t in targets {
        if t.is_subdomain_of(z.apex()) {
            if let Some(a) = z.zone().rrset(&t, RecordType::A) {
                let sigs = z.sigs(&t, RecordType::A).to_vec();
                push_unique(&mut out, SignedRRSet { rrset: a.clone(), sigs });
            }
        }
    }
    out
}

fn targets(s: &RRSet) -> impl Iterator<Item = DomainName> + '_ {
    s.rdata().iter().filter_map(|r| match r {
        RData::Ns(n) | RData::Mx(n) => Some(n.clone()),
        _ => None,
    })
}

fn referral(z: &SignedZone, cut: &DomainName) -> Response {
    let mut r = Response::empty(Rcode::NoError);
    let ns = z.zone().rrset(cut, RecordType::NS).expect("delegation has NS");
    r.authority.extend(ns.records());
    match z.signed_rrset(cut, RecordType::DS) {
        Some(ds) => r.authority.extend(ds.records()),
        None => r.authority.extend(nodata_proof(z, cut).iter().flat_map(SignedRRSet::records)),
    }
    r.additional.extend(in_zone_addresses(z, targets(ns)).iter().flat_map(SignedRRSet::records));
    r
}

fn closest_existing(z: &SignedZone, q: &DomainName) -> DomainName {
    q.ancestors()
        .skip(1)
        .take_while(|a| a.is_subdomain_of(z.apex()))
        .find(|a| z.zone().name_exists(a))
        .unwrap_or_else(|| z.apex().clone())
}

/// The server's whole behaviour: a pure function of zone and query.
pub fn answer_query(z: &SignedZone, q: &Query) -> Response {
    let zone = z.zone();
    let apex = zone.apex();
    if !q.qname.is_subdomain_of(apex) {
        return Response::empty(Rcode::Refused);
    }
    if let Some(cut) = zone.find_delegation(&q.qname) {
        if !(cut == q.qname && q.qtype == RecordType::DS) {
            return referral(z, &cut);
        }
    }
    let mut r = Response::empty(Rcode::NoError);
    if let Some(s) = z.signed_rrset(&q.qname, q.qtype) {
        r.answer.extend(s.records());
        r.additional.extend(in_zone_addresses(z, targets(&s.rrset)).iter().flat_map(SignedRRSet::records));
        return r;
    }
    if zone.name_exists(&q.qname) || q.qname == *apex {
        r.authority.extend(nodata_proof(z, &q.qname).iter().flat_map(SignedRRSet::records));
        return r;
    }

    let ce = closest_existing(z, &q.qname);
    let wildcard = ce.wildcard_child();
    let mut proof = Vec::new();
    let first = cover(z, &q.qname, None);
    let family = first.as_ref().map(|(f, _)| *f);
    if let Some((_, s)) = first {
        push_unique(&mut proof, s);
    }
    // An empty non-terminal wildcard still matches, and answers NODATA.
    if zone.name_exists(&wildcard) {
        match z.signed_rrset(&wildcard, q.qtype) {
            Some(s) => {
                let expanded = SignedRRSet { rrset: s.rrset.with_owner(q.qname.clone()), sigs: s.sigs };
                r.answer.extend(expanded.records());
            }
            None => {
                if family == Some(DenialFamily::Nsec3) {
                    if let Some(s) = nsec3_match(z, &ce) {
                        push_unique(&mut proof, s);
                    }
                }
                for s in nodata_proof(z, &wildcard) {
                    push_unique(&mut proof, s);
                }
            }
        }
        r.authority.extend(proof.iter().flat_map(SignedRRSet::records));
        return r;
    }

    r.rcode = Rcode::NxDomain;
    if family == Some(DenialFamily::Nsec3) {
        if let Some(s) = nsec3_match(z, &ce) {
            push_unique(&mut proof, s);
        }
    }
    if let Some((_, s)) = cover(z, &wildcard, family) {
        push_unique(&mut proof, s);
    }
    r.authority.extend(proof.iter().flat_map(SignedRRSet::records));
    r
}
