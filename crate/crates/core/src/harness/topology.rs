//! A set of signed zones wired together by delegations, plus the trust anchor.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::crypto::{AlgorithmId, HashedLabel, KeyFactory, KeyId, KeyPair, KeyRole, Nsec3Params};
use crate::name::DomainName;
use crate::record::{DenialFamily, RData, RRSet, RecordType};
use crate::resolver::TrustAnchor;
use crate::zone::{
    build_mixed_chain, build_nsec3_chain, build_nsec_chain, ds_set_for, sign_zone_multi, ChainError, ChainMode,
    SignError, SignedZone, Zone, ZoneError,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainSpec {
    Nsec,
    Nsec3(Nsec3Params),
    /// `None` takes the assignment from the NSEC/NSEC3 records written in the zone file.
    Mixed { assignment: Option<BTreeMap<DomainName, DenialFamily>>, params: Nsec3Params },
}

#[derive(Debug, Clone)]
pub struct ZoneConfig {
    pub zone: Zone,
    pub chain: ChainSpec,
    /// ZSKs are made for every algorithm, the KSK for the first.
    pub algorithms: Vec<AlgorithmId>,
    pub malicious: bool,
}

impl ZoneConfig {
    pub fn new(zone: Zone, chain: ChainSpec) -> Self {
        ZoneConfig { zone, chain, algorithms: vec![AlgorithmId::RSASHA256], malicious: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("no zones")]
    Empty,
    #[error("two zones share the apex {0}")]
    DuplicateZone(DomainName),
    #[error("zone {0} is not below the topmost zone")]
    Detached(DomainName),
    #[error("zone {0} lists no signing algorithm")]
    NoAlgorithm(DomainName),
    #[error("zone {zone}: declared NSEC3 owner {owner} matches no name")]
    UnmatchedHash { zone: DomainName, owner: DomainName },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error(transparent)]
    Zone(#[from] ZoneError),
}

#[derive(Debug, Clone)]
pub struct Topology {
    servers: BTreeMap<DomainName, SignedZone>,
    ns_hosts: BTreeMap<DomainName, DomainName>,
    anchor: TrustAnchor,
}

/// Reads which family each owner uses from the denial records written in a zone file.
pub fn declared_assignment(z: &Zone, params: &Nsec3Params) -> Result<BTreeMap<DomainName, DenialFamily>, TopologyError> {
    let mut names = z.authoritative_owners();
    names.insert(z.apex().clone());
    let by_hash: BTreeMap<HashedLabel, DomainName> =
        names.iter().map(|n| (z.hasher().hash(n, params), n.clone())).collect();
    let mut out = BTreeMap::new();
    for s in z.rrsets_of_type(RecordType::NSEC) {
        out.insert(s.owner().clone(), DenialFamily::Nsec);
    }
    for s in z.rrsets_of_type(RecordType::NSEC3) {
        let name = HashedLabel::from_owner(s.owner())
            .and_then(|h| by_hash.get(&h))
            .ok_or_else(|| TopologyError::UnmatchedHash { zone: z.apex().clone(), owner: s.owner().clone() })?;
        out.insert(name.clone(), DenialFamily::Nsec3);
    }
    Ok(out)
}

fn chain(z: &Zone, spec: &ChainSpec) -> Result<Zone, TopologyError> {
    let bare = z.without_denial();
    Ok(match spec {
        ChainSpec::Nsec => build_nsec_chain(&bare)?,
        ChainSpec::Nsec3(p) => build_nsec3_chain(&bare, p)?,
        ChainSpec::Mixed { assignment, params } => {
            let assignment = match assignment {
                Some(a) => a.clone(),
                None => declared_assignment(z, params)?,
            };
            build_mixed_chain(&bare, &assignment, params, bare.hasher().clone())?
        }
    })
}

impl Topology {
    /// Signs children before parents so each parent can carry real DS records.
    pub fn build(mut configs: Vec<ZoneConfig>) -> Result<Topology, TopologyError> {
        if configs.is_empty() {
            return Err(TopologyError::Empty);
        }
        configs.sort_by_key(|c| std::cmp::Reverse(c.zone.apex().label_count()));
        let top = configs.last().expect("non-empty").zone.apex().clone();
        let mut seen = BTreeSet::new();
        for c in &configs {
            if !seen.insert(c.zone.apex().clone()) {
                return Err(TopologyError::DuplicateZone(c.zone.apex().clone()));
            }
            if !c.zone.apex().is_subdomain_of(&top) {
                return Err(TopologyError::Detached(c.zone.apex().clone()));
            }
        }
        let mut factory = KeyFactory::default();
        let mut servers: BTreeMap<DomainName, SignedZone> = BTreeMap::new();
        for c in configs {
            let apex = c.zone.apex().clone();
            let mut zone = c.zone.clone();
            for cut in zone.delegations() {
                if let Some(child) = servers.get(&cut) {
                    let ds = RRSet::new(cut.clone(), RecordType::DS, ds_set_for(child).into_iter().map(RData::Ds))
                        .expect("DS rdata");
                    zone.put_rrset(ds)?;
                }
            }
            let zone = chain(&zone, &c.chain)?;
            let (first, rest) = c.algorithms.split_first().ok_or_else(|| TopologyError::NoAlgorithm(apex.clone()))?;
            let ksk = factory.generate(KeyRole::Ksk, *first);
            let zsks: Vec<KeyPair> =
                std::iter::once(first).chain(rest).map(|a| factory.generate(KeyRole::Zsk, *a)).collect();
            let zsk_refs: Vec<&KeyPair> = zsks.iter().collect();
            let mut signed = sign_zone_multi(&zone, &zsk_refs, &[&ksk])?;
            signed.set_malicious(c.malicious);
            servers.insert(apex, signed);
        }

        let mut ns_hosts = BTreeMap::new();
        for z in servers.values() {
            for ns in z.zone().rrsets_of_type(RecordType::NS) {
                if !servers.contains_key(ns.owner()) {
                    continue;
                }
                for r in ns.rdata() {
                    if let RData::Ns(host) = r {
                        ns_hosts.entry(host.clone()).or_insert_with(|| ns.owner().clone());
                    }
                }
            }
        }
        let root = &servers[&top];
        let anchor = TrustAnchor { zone: top.clone(), ds: ds_set_for(root) };
        Ok(Topology { servers, ns_hosts, anchor })
    }

    pub fn root(&self) -> &DomainName {
        &self.anchor.zone
    }

    pub fn anchor(&self) -> &TrustAnchor {
        &self.anchor
    }

    pub fn server(&self, apex: &DomainName) -> Option<&SignedZone> {
        self.servers.get(apex)
    }

    pub fn servers(&self) -> impl Iterator<Item = &SignedZone> {
        self.servers.values()
    }

    /// Zone served by the name server called `host`.
    pub fn server_for_host(&self, host: &DomainName) -> Option<&DomainName> {
        self.ns_hosts.get(host)
    }

    /// The zone with authority over `name`: the deepest served apex above it.
    pub fn authority_for(&self, name: &DomainName) -> Option<&SignedZone> {
        name.ancestors().find_map(|a| self.servers.get(&a))
    }

    pub fn key_owners(&self) -> BTreeMap<KeyId, DomainName> {
        self.servers
            .values()
            .flat_map(|z| z.key_ids().into_iter().map(move |k| (k, z.apex().clone())))
            .collect()
    }

    /// Names published on purpose: NS and MX targets anywhere, and zone apexes.
    pub fn public_names(&self) -> BTreeSet<DomainName> {
        let mut out: BTreeSet<DomainName> = self.servers.keys().cloned().collect();
        for z in self.servers.values() {
            for s in z.zone().rrsets() {
                for r in s.rdata() {
                    if let RData::Ns(n) | RData::Mx(n) = r {
                        out.insert(n.clone());
                    }
                }
            }
        }
        out
    }

    /// Secret names of every zone whose chain uses `family`, mapped to that zone.
    pub fn secret_names(&self, family: DenialFamily) -> BTreeMap<DomainName, DomainName> {
        let public = self.public_names();
        let mut out = BTreeMap::new();
        for z in self.servers.values() {
            let uses = match z.zone().chain_mode() {
                Some(ChainMode::NsecOnly) => family == DenialFamily::Nsec,
                Some(ChainMode::Nsec3Only(_)) => family == DenialFamily::Nsec3,
                Some(ChainMode::Mixed { .. }) | None => false,
            };
            if !uses {
                continue;
            }
            for o in z.zone().authoritative_owners() {
                if !public.contains(&o) {
                    out.insert(o, z.apex().clone());
                }
            }
        }
        out
    }

    /// Union of both families' secrets; these names cannot be invented by the adversary.
    pub fn all_secret_names(&self) -> BTreeSet<DomainName> {
        let public = self.public_names();
        self.servers
            .values()
            .flat_map(|z| z.zone().authoritative_owners())
            .filter(|o| !public.contains(o))
            .collect()
    }
}
