//! Zones, denial chains, signing and the authoritative server.

mod chain;
mod parser;
mod server;
mod sign;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use chain::{build_mixed_chain, build_nsec3_chain, build_nsec3_chain_with, build_nsec_chain, ChainError};
pub use parser::{load_zone, ZoneParseError, ZoneParseErrorKind};
pub use server::{answer_query, nsec3_covers, nsec_covers};
pub use sign::{dnskey_digest, ds_for, ds_set_for, sign_zone, sign_zone_multi, SignError, SignedZone};

use crate::crypto::{AlgorithmId, Nsec3Hasher, Nsec3Params, Sha1Nsec3};
use crate::name::DomainName;
use crate::record::{DenialFamily, RData, RRSet, RecordType, TypeSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ZoneError {
    #[error("{owner} is outside zone {apex}")]
    OutOfZone { owner: DomainName, apex: DomainName },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainMode {
    NsecOnly,
    Nsec3Only(Nsec3Params),
    Mixed { assignment: BTreeMap<DomainName, DenialFamily>, params: Nsec3Params },
}

impl ChainMode {
    pub fn nsec3_params(&self) -> Option<&Nsec3Params> {
        match self {
            ChainMode::NsecOnly => None,
            ChainMode::Nsec3Only(p) | ChainMode::Mixed { params: p, .. } => Some(p),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ChainMode::NsecOnly => "nsec",
            ChainMode::Nsec3Only(_) => "nsec3",
            ChainMode::Mixed { .. } => "mixed",
        }
    }
}

/// An RRSIG line read from a zone file. Kept for comparison with real signing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclaredRrsig {
    pub owner: DomainName,
    pub type_covered: RecordType,
    pub algorithm: AlgorithmId,
    pub labels: u8,
    pub signer: DomainName,
    pub key_tag: Option<String>,
}

/// A DNSKEY line read from a zone file. Its key material is a placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclaredDnskey {
    pub owner: DomainName,
    pub flags: u16,
    pub algorithm: AlgorithmId,
    pub key: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Declared {
    pub rrsigs: Vec<DeclaredRrsig>,
    pub dnskeys: Vec<DeclaredDnskey>,
}

#[derive(Clone)]
pub struct Zone {
    apex: DomainName,
    rrsets: BTreeMap<(DomainName, RecordType), RRSet>,
    declared: Declared,
    chain: Option<ChainMode>,
    hasher: Arc<dyn Nsec3Hasher>,
}

impl PartialEq for Zone {
    fn eq(&self, other: &Self) -> bool {
        self.apex == other.apex && self.rrsets == other.rrsets && self.chain == other.chain
    }
}

impl fmt::Debug for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Zone")
            .field("apex", &self.apex)
            .field("rrsets", &self.rrsets.len())
            .field("chain", &self.chain)
            .finish()
    }
}

impl Zone {
    pub fn new(apex: DomainName) -> Self {
        Zone {
            apex,
            rrsets: BTreeMap::new(),
            declared: Declared::default(),
            chain: None,
            hasher: Arc::new(Sha1Nsec3),
        }
    }

    pub fn apex(&self) -> &DomainName {
        &self.apex
    }

    pub fn declared(&self) -> &Declared {
        &self.declared
    }

    pub fn chain_mode(&self) -> Option<&ChainMode> {
        self.chain.as_ref()
    }

    pub fn hasher(&self) -> &Arc<dyn Nsec3Hasher> {
        &self.hasher
    }

    pub fn set_hasher(&mut self, hasher: Arc<dyn Nsec3Hasher>) {
        self.hasher = hasher;
    }

    pub fn add(&mut self, owner: DomainName, rdata: RData) -> Result<(), ZoneError> {
        if !owner.is_subdomain_of(&self.apex) {
            return Err(ZoneError::OutOfZone { owner, apex: self.apex.clone() });
        }
        let t = rdata.rtype();
        self.rrsets
            .entry((owner.clone(), t))
            .or_insert_with(|| RRSet::empty(owner, t))
            .push(rdata)
            .expect("keyed by type");
        Ok(())
    }

    pub fn put_rrset(&mut self, rrset: RRSet) -> Result<(), ZoneError> {
        if !rrset.owner().is_subdomain_of(&self.apex) {
            return Err(ZoneError::OutOfZone { owner: rrset.owner().clone(), apex: self.apex.clone() });
        }
        self.rrsets.insert((rrset.owner().clone(), rrset.rtype()), rrset);
        Ok(())
    }

    pub fn remove_rrset(&mut self, owner: &DomainName, t: RecordType) -> Option<RRSet> {
        self.rrsets.remove(&(owner.clone(), t))
    }

    pub fn rrset(&self, owner: &DomainName, t: RecordType) -> Option<&RRSet> {
        self.rrsets.get(&(owner.clone(), t))
    }

    pub fn rrsets(&self) -> impl Iterator<Item = &RRSet> {
        self.rrsets.values()
    }

    pub fn rrsets_of_type(&self, t: RecordType) -> impl Iterator<Item = &RRSet> {
        self.rrsets.values().filter(move |s| s.rtype() == t)
    }

    /// Owners of data, NS, DS or NSEC RRSets. NSEC3 owners are hashes, not names, and are left out.
    pub fn owner_names(&self) -> BTreeSet<DomainName> {
        self.rrsets
            .values()
            .filter(|s| s.rtype() != RecordType::NSEC3)
            .map(|s| s.owner().clone())
            .collect()
    }

    pub fn types_at(&self, owner: &DomainName) -> TypeSet {
        self.rrsets
            .range((owner.clone(), RecordType::A)..=(owner.clone(), RecordType::NSEC3))
            .map(|((_, t), _)| *t)
            .collect()
    }

    /// Delegation points: non-apex owners with an NS RRSet.
    pub fn delegations(&self) -> BTreeSet<DomainName> {
        self.rrsets_of_type(RecordType::NS)
            .map(|s| s.owner().clone())
            .filter(|o| *o != self.apex)
            .collect()
    }

    /// Deepest delegation point at or above `name`.
    pub fn find_delegation(&self, name: &DomainName) -> Option<DomainName> {
        let cuts = self.delegations();
        name.ancestors()
            .take_while(|a| a.is_strict_subdomain_of(&self.apex))
            .find(|a| cuts.contains(a))
    }

    /// False for names strictly below a delegation point (glue and occluded data).
    pub fn is_authoritative(&self, name: &DomainName) -> bool {
        match self.find_delegation(name) {
            None => true,
            Some(d) => d == *name,
        }
    }

    pub fn authoritative_owners(&self) -> BTreeSet<DomainName> {
        self.owner_names().into_iter().filter(|o| self.is_authoritative(o)).collect()
    }

    /// Names with no records of their own but with authoritative descendants.
    pub fn empty_non_terminals(&self) -> BTreeSet<DomainName> {
        let owners = self.authoritative_owners();
        let mut out = BTreeSet::new();
        for o in &owners {
            for a in o.ancestors().skip(1).take_while(|a| a.is_strict_subdomain_of(&self.apex)) {
                if !owners.contains(&a) {
                    out.insert(a);
                }
            }
        }
        out
    }

    /// A name exists if it owns records or is an empty non-terminal.
    pub fn name_exists(&self, name: &DomainName) -> bool {
        let owners = self.authoritative_owners();
        owners.contains(name) || owners.iter().any(|o| o.is_strict_subdomain_of(name) && name.is_subdomain_of(&self.apex))
    }

    pub fn wildcard_names(&self) -> BTreeSet<DomainName> {
        self.owner_names().into_iter().filter(DomainName::is_wildcard).collect()
    }

    pub fn has_denial_records(&self) -> bool {
        self.rrsets.keys().any(|(_, t)| t.is_denial())
    }

    /// Copy with every NSEC and NSEC3 RRSet removed and the chain mode cleared.
    pub fn without_denial(&self) -> Zone {
        let mut z = self.clone();
        z.rrsets.retain(|(_, t), _| !t.is_denial());
        z.chain = None;
        z
    }

    pub(crate) fn set_chain(&mut self, mode: ChainMode) {
        self.chain = Some(mode);
    }

    pub(crate) fn declared_mut(&mut self) -> &mut Declared {
        &mut self.declared
    }

    /// Type bitmap for `owner` in an NSEC record.
    pub(crate) fn nsec_types(&self, owner: &DomainName) -> TypeSet {
        let mut t = self.denial_types(owner);
        t.insert(RecordType::RRSIG);
        t.insert(RecordType::NSEC);
        t
    }

    /// Type bitmap for `owner` in an NSEC3 record. Empty for empty non-terminals.
    pub(crate) fn nsec3_types(&self, owner: &DomainName) -> TypeSet {
        let mut t = self.denial_types(owner);
        if t.iter().any(|x| *x != RecordType::NS) || (!t.is_empty() && *owner == self.apex) {
            t.insert(RecordType::RRSIG);
        }
        t
    }

    fn denial_types(&self, owner: &DomainName) -> TypeSet {
        let mut t: TypeSet = self.types_at(owner).into_iter().filter(|t| !t.is_denial()).collect();
        if *owner == self.apex {
            t.insert(RecordType::DNSKEY);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> DomainName {
        s.parse().unwrap()
    }

    #[test]
    fn delegation_and_ent_bookkeeping() {
        let mut z = Zone::new(n("example"));
        z.add(n("example"), RData::Ns(n("ns.example"))).unwrap();
        z.add(n("a.example"), RData::Ns(n("ns.a.example"))).unwrap();
        z.add(n("ns.a.example"), RData::A("ip".into())).unwrap();
        z.add(n("x.y.w.example"), RData::Mx(n("xx.example"))).unwrap();
        assert!(z.add(n("other"), RData::A("ip".into())).is_err());
        assert_eq!(z.delegations(), [n("a.example")].into());
        assert_eq!(z.find_delegation(&n("q.ns.a.example")), Some(n("a.example")));
        assert!(!z.is_authoritative(&n("ns.a.example")));
        assert!(z.is_authoritative(&n("a.example")));
        assert_eq!(z.empty_non_terminals(), [n("w.example"), n("y.w.example")].into());
        assert!(z.name_exists(&n("w.example")));
        assert!(!z.name_exists(&n("q.example")));
    }
}
