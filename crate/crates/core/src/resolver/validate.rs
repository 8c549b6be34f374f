//! Pure validation: RRSIGs, DS-to-DNSKEY links, whole chains and denial proofs.

use serde::Serialize;

use super::{MixedDenialPolicy, ResolverConfig};
use crate::crypto::{nsec3_hash, verify, HashedLabel};
use crate::name::DomainName;
use crate::record::{signed_data, DnskeyData, DsData, Query, RData, RRSet, RecordType, RrsigData, SignedRRSet};
use crate::zone::{dnskey_digest, nsec3_covers, nsec_covers};

/// `DS_0`: the root KSK digest the resolver is configured with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrustAnchor {
    pub zone: DomainName,
    pub ds: Vec<DsData>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SigVerdict {
    Ok,
    Bogus,
    UnsupportedAlgorithm,
}

/// The name that was actually signed: the owner itself, or the wildcard it was
/// expanded from when the RRSIG counts fewer labels. `None` if the count is too large.
pub fn signed_owner(owner: &DomainName, labels: u8) -> Option<DomainName> {
    let labels = labels as usize;
    let have = owner.rrsig_label_count();
    if labels > have {
        None
    } else if labels == have {
        Some(owner.clone())
    } else {
        Some(owner.suffix(labels).wildcard_child())
    }
}

pub fn validate_rrsig(rrset: &RRSet, sig: &RrsigData, key: &DnskeyData, cfg: &ResolverConfig) -> SigVerdict {
    if !cfg.supported_algorithms.contains(&sig.algorithm) {
        return SigVerdict::UnsupportedAlgorithm;
    }
    if sig.type_covered != rrset.rtype() || sig.algorithm != key.algorithm() || sig.key_tag != key.key_tag() {
        return SigVerdict::Bogus;
    }
    let Some(owner) = signed_owner(rrset.owner(), sig.labels) else {
        return SigVerdict::Bogus;
    };
    if verify(&sig.signature, &signed_data(sig, &rrset.with_owner(owner)), &key.key) {
        SigVerdict::Ok
    } else {
        SigVerdict::Bogus
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RrsetVerdict {
    Secure { sig: RrsigData, key: DnskeyData },
    Unsupported,
    Bogus,
}

/// Checks a signed RRSet against a zone's keys. Secure if any RRSIG from `zone`
/// verifies; Unsupported if every candidate RRSIG uses an algorithm outside
/// the supported set.
pub fn verify_rrset(s: &SignedRRSet, zone: &DomainName, keys: &[DnskeyData], cfg: &ResolverConfig) -> RrsetVerdict {
    if !s.rrset.owner().is_subdomain_of(zone) {
        return RrsetVerdict::Bogus;
    }
    let mut candidates = 0;
    let mut unsupported = 0;
    for sig in s.sigs.iter().filter(|g| g.signer == *zone) {
        candidates += 1;
        if !cfg.supported_algorithms.contains(&sig.algorithm) {
            unsupported += 1;
            continue;
        }
        for k in keys.iter().filter(|k| k.key_tag() == sig.key_tag && k.algorithm() == sig.algorithm) {
            if validate_rrsig(&s.rrset, sig, k, cfg) == SigVerdict::Ok {
                return RrsetVerdict::Secure { sig: sig.clone(), key: k.clone() };
            }
        }
    }
    if candidates > 0 && candidates == unsupported {
        RrsetVerdict::Unsupported
    } else {
        RrsetVerdict::Bogus
    }
}

/// Keys of one zone after its DNSKEY RRSet was linked to a trusted DS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ZoneKeys {
    pub zone: DomainName,
    pub ksk: DnskeyData,
    pub zsks: Vec<DnskeyData>,
    /// Digests the KSK was matched against.
    pub ds: Vec<DsData>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LinkFailure {
    NoMatchingKsk,
    UnsupportedAlgorithm,
    KskSelfSignature,
    ZskSignature,
}

/// One step of the chain: the DNSKEY RRSet must hold a KSK whose digest is in
/// `expected`, signed by that KSK, and also signed by one of its ZSKs.
pub fn check_link(
    zone: &DomainName,
    dnskeys: &SignedRRSet,
    expected: &[DsData],
    cfg: &ResolverConfig,
) -> Result<ZoneKeys, LinkFailure> {
    if dnskeys.rrset.owner() != zone || dnskeys.rrset.rtype() != RecordType::DNSKEY {
        return Err(LinkFailure::NoMatchingKsk);
    }
    let keys: Vec<DnskeyData> = dnskeys
        .rrset
        .rdata()
        .iter()
        .filter_map(|r| match r {
            RData::Dnskey(k) => Some(k.clone()),
            _ => None,
        })
        .collect();
    let linked: Vec<&DnskeyData> = keys
        .iter()
        .filter(|k| k.is_ksk())
        .filter(|k| expected.iter().any(|ds| ds.algorithm == k.algorithm() && ds.digest == dnskey_digest(zone, k)))
        .collect();
    if linked.is_empty() {
        return Err(LinkFailure::NoMatchingKsk);
    }
    let Some(ksk) = linked.iter().find(|k| cfg.supported_algorithms.contains(&k.algorithm())) else {
        return Err(LinkFailure::UnsupportedAlgorithm);
    };
    if !matches!(verify_rrset(dnskeys, zone, &[(*ksk).clone()], cfg), RrsetVerdict::Secure { .. }) {
        return Err(LinkFailure::KskSelfSignature);
    }
    let zsks: Vec<DnskeyData> = keys.iter().filter(|k| !k.is_ksk()).cloned().collect();
    if !matches!(verify_rrset(dnskeys, zone, &zsks, cfg), RrsetVerdict::Secure { .. }) {
        return Err(LinkFailure::ZskSignature);
    }
    Ok(ZoneKeys { zone: zone.clone(), ksk: (*ksk).clone(), zsks, ds: expected.to_vec() })
}

/// One level of a delegation path, root first.
#[derive(Debug, Clone)]
pub struct ChainLevel {
    pub zone: DomainName,
    pub dnskeys: SignedRRSet,
    /// The DS RRSet this zone publishes for the next level. Ignored on the last level.
    pub ds_to_child: Option<SignedRRSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainVerdict {
    Valid,
    Abort(usize),
}

pub fn verify_chain(anchor: &TrustAnchor, path: &[ChainLevel], cfg: &ResolverConfig) -> ChainVerdict {
    let mut expected = anchor.ds.clone();
    for (i, level) in path.iter().enumerate() {
        if i == 0 && level.zone != anchor.zone {
            return ChainVerdict::Abort(0);
        }
        let Ok(keys) = check_link(&level.zone, &level.dnskeys, &expected, cfg) else {
            return ChainVerdict::Abort(i);
        };
        if let Some(next) = path.get(i + 1) {
            let Some(ds) = &level.ds_to_child else {
                return ChainVerdict::Abort(i);
            };
            if ds.rrset.owner() != &next.zone
                || ds.rrset.rtype() != RecordType::DS
                || !matches!(verify_rrset(ds, &level.zone, &keys.zsks, cfg), RrsetVerdict::Secure { .. })
            {
                return ChainVerdict::Abort(i);
            }
            expected = ds_rdata(&ds.rrset);
        }
    }
    ChainVerdict::Valid
}

pub fn ds_rdata(s: &RRSet) -> Vec<DsData> {
    s.rdata()
        .iter()
        .filter_map(|r| match r {
            RData::Ds(d) => Some(d.clone()),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum DenialVerdict {
    ProvenNonexistent,
    ProvenNoData,
    Invalid(String),
}

enum Denial<'a> {
    Nsec { owner: &'a DomainName, next: &'a DomainName, types: &'a crate::record::TypeSet },
    Nsec3 { owner: HashedLabel, data: &'a crate::record::Nsec3Data },
}

fn denial_records(proof: &[SignedRRSet]) -> Vec<Denial<'_>> {
    let mut out = Vec::new();
    for s in proof {
        for r in s.rrset.rdata() {
            match r {
                RData::Nsec(d) => out.push(Denial::Nsec { owner: s.rrset.owner(), next: &d.next, types: &d.types }),
                RData::Nsec3(d) => {
                    if let Some(owner) = HashedLabel::from_owner(s.rrset.owner()) {
                        out.push(Denial::Nsec3 { owner, data: d });
                    }
                }
                _ => {}
            }
        }
    }
    out
}

fn covered(recs: &[Denial<'_>], name: &DomainName) -> bool {
    recs.iter().any(|r| match r {
        Denial::Nsec { owner, next, .. } => nsec_covers(owner, next, name),
        Denial::Nsec3 { owner, data } => nsec3_covers(owner, &data.next_hashed, &nsec3_hash(name, &data.params)),
    })
}

/// Types asserted at exactly `name`, if some record matches it.
fn matched<'a>(recs: &'a [Denial<'_>], name: &DomainName) -> Option<&'a crate::record::TypeSet> {
    recs.iter().find_map(|r| match r {
        Denial::Nsec { owner, types, .. } if *owner == name => Some(*types),
        Denial::Nsec3 { owner, data } if *owner == nsec3_hash(name, &data.params) => Some(&data.types),
        _ => None,
    })
}

/// An NSEC interval around `name` that ends below it: `name` is an empty non-terminal.
fn nsec_ent(recs: &[Denial<'_>], name: &DomainName) -> bool {
    recs.iter().any(|r| {
        matches!(r, Denial::Nsec { owner, next, .. }
            if nsec_covers(owner, next, name) && next.is_strict_subdomain_of(name))
    })
}

fn common_ancestor(a: &DomainName, b: &DomainName) -> DomainName {
    a.ancestors().find(|x| b.is_subdomain_of(x)).unwrap_or_else(DomainName::root)
}

/// Deepest name the proof shows to exist above `q`.
fn closest_encloser(recs: &[Denial<'_>], q: &DomainName, zone: &DomainName) -> DomainName {
    let mut best = zone.clone();
    for r in recs {
        if let Denial::Nsec { owner, next, .. } = r {
            if nsec_covers(owner, next, q) {
                for c in [common_ancestor(q, owner), common_ancestor(q, next)] {
                    if c.is_subdomain_of(&best) && c != *q {
                        best = c;
                    }
                }
            }
        }
    }
    for a in q.ancestors().skip(1).take_while(|a| a.is_strict_subdomain_of(&best)) {
        let hit = recs
            .iter()
            .any(|r| matches!(r, Denial::Nsec3 { owner, data } if *owner == nsec3_hash(&a, &data.params)));
        if hit {
            return a;
        }
    }
    best
}

/// True if the proof shows `name` itself has no records (used for wildcard answers).
pub fn proves_no_exact_match(name: &DomainName, proof: &[SignedRRSet]) -> bool {
    covered(&denial_records(proof), name)
}

/// Checks signatures first, then decides what the proof establishes for `q`.
pub fn validate_denial(q: &Query, proof: &[SignedRRSet], keys: &ZoneKeys, cfg: &ResolverConfig) -> DenialVerdict {
    let invalid = |why: &str| DenialVerdict::Invalid(why.into());
    if proof.is_empty() {
        return invalid("no denial records");
    }
    for s in proof {
        if s.family().is_none() {
            return invalid("non-denial record in proof");
        }
        match verify_rrset(s, &keys.zone, &keys.zsks, cfg) {
            RrsetVerdict::Secure { sig, .. } => {
                if sig.labels as usize != s.rrset.owner().rrsig_label_count() {
                    return invalid("RRSIG label count does not match its owner");
                }
            }
            _ => return invalid("denial record without a valid signature"),
        }
    }
    let mut families: Vec<_> = proof.iter().filter_map(SignedRRSet::family).collect();
    families.sort();
    families.dedup();
    if families.len() > 1 && cfg.mixed_denial_policy == MixedDenialPolicy::Servfail {
        return invalid("proof mixes NSEC and NSEC3");
    }

    let recs = denial_records(proof);
    if let Some(types) = matched(&recs, &q.qname) {
        return if types.contains(&q.qtype) { invalid("type exists") } else { DenialVerdict::ProvenNoData };
    }
    if nsec_ent(&recs, &q.qname) {
        return DenialVerdict::ProvenNoData;
    }
    if !covered(&recs, &q.qname) {
        return invalid("no record covers the query name");
    }
    let ce = closest_encloser(&recs, &q.qname, &keys.zone);
    let wildcard = ce.wildcard_child();
    if let Some(types) = matched(&recs, &wildcard) {
        return if types.contains(&q.qtype) { invalid("wildcard has the type") } else { DenialVerdict::ProvenNoData };
    }
    if nsec_ent(&recs, &wildcard) {
        return DenialVerdict::ProvenNoData;
    }
    if covered(&recs, &wildcard) {
        DenialVerdict::ProvenNonexistent
    } else {
        invalid("missing wildcard proof")
    }
}
