use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::Zone;
use crate::crypto::{hash, Digest, KeyId, KeyPair, KeyRole, SignEvent};
use crate::name::DomainName;
use crate::record::{signed_data, DnskeyData, DsData, RData, RRSet, RecordType, RrsigData, SignedRRSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignError {
    #[error("key {key} has role {actual:?}, expected {expected:?}")]
    WrongRole { key: KeyId, expected: KeyRole, actual: KeyRole },
    #[error("zone {0} needs at least one ZSK and one KSK")]
    MissingKeys(DomainName),
}

/// A zone with its DNSKEY RRSet installed and every authoritative RRSet signed.
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct SignedZone {
    zone: Zone,
    sigs: BTreeMap<(DomainName, RecordType), Vec<RrsigData>>,
    keys: Vec<DnskeyData>,
    sign_log: Vec<SignEvent>,
    malicious: bool,
}

pub fn sign_zone(z: &Zone, zsk: &KeyPair, ksk: &KeyPair) -> Result<SignedZone, SignError> {
    sign_zone_multi(z, &[zsk], &[ksk])
}

/// Signs every RRSet once per ZSK and the DNSKEY RRSet additionally once per KSK.
pub fn sign_zone_multi(z: &Zone, zsks: &[&KeyPair], ksks: &[&KeyPair]) -> Result<SignedZone, SignError> {
    for (set, expected) in [(zsks, KeyRole::Zsk), (ksks, KeyRole::Ksk)] {
        if let Some(k) = set.iter().find(|k| k.role() != expected) {
            return Err(SignError::WrongRole { key: k.id(), expected, actual: k.role() });
        }
    }
    if zsks.is_empty() || ksks.is_empty() {
        return Err(SignError::MissingKeys(z.apex().clone()));
    }
    let apex = z.apex().clone();
    let dnskey = |k: &KeyPair| DnskeyData {
        flags: if k.role() == KeyRole::Ksk { DnskeyData::KSK_FLAGS } else { DnskeyData::ZSK_FLAGS },
        protocol: 3,
        key: k.public(),
    };
    let keys: Vec<DnskeyData> = zsks.iter().chain(ksks).map(|k| dnskey(k)).collect();
    let mut zone = z.clone();
    zone.put_rrset(RRSet::new(apex.clone(), RecordType::DNSKEY, keys.iter().cloned().map(RData::Dnskey)).expect("DNSKEY"))
        .expect("apex in zone");

    let cuts = zone.delegations();
    let mut sigs = BTreeMap::new();
    let mut sign_log = Vec::new();
    for rrset in zone.rrsets() {
        let owner = rrset.owner();
        if !zone.is_authoritative(owner) || (cuts.contains(owner) && rrset.rtype() == RecordType::NS) {
            continue;
        }
        let mut signers: Vec<&KeyPair> = zsks.to_vec();
        if rrset.rtype() == RecordType::DNSKEY && *owner == apex {
            signers.extend(ksks);
        }
        let mut list = Vec::new();
        for k in signers {
            let mut sig = RrsigData {
                type_covered: rrset.rtype(),
                algorithm: k.algorithm(),
                labels: owner.rrsig_label_count() as u8,
                signer: apex.clone(),
                key_tag: dnskey(k).key_tag(),
                signature: crate::crypto::Signature::forged(0),
            };
            sig.signature = k.sign_logged(&signed_data(&sig, rrset), &mut sign_log);
            list.push(sig);
        }
        sigs.insert((owner.clone(), rrset.rtype()), list);
    }
    Ok(SignedZone { zone, sigs, keys, sign_log, malicious: false })
}

/// Digest binding a DNSKEY record to its owner, as carried in a DS.
pub fn dnskey_digest(owner: &DomainName, key: &DnskeyData) -> Digest {
    let mut bytes = owner.to_wire();
    RData::Dnskey(key.clone()).write_canonical(&mut bytes);
    hash(&bytes)
}

fn ds_of(owner: &DomainName, key: &DnskeyData) -> DsData {
    DsData { key_tag: key.key_tag(), algorithm: key.algorithm(), digest_type: 2, digest: dnskey_digest(owner, key) }
}

/// DS for the child's first KSK.
pub fn ds_for(child: &SignedZone) -> DsData {
    let ksk = child.ksks().next().expect("signed zones always have a KSK");
    ds_of(child.apex(), ksk)
}

/// One DS per child KSK.
pub fn ds_set_for(child: &SignedZone) -> Vec<DsData> {
    child.ksks().map(|k| ds_of(child.apex(), k)).collect()
}

impl SignedZone {
    pub fn zone(&self) -> &Zone {
        &self.zone
    }

    pub fn apex(&self) -> &DomainName {
        self.zone.apex()
    }

    pub fn sigs(&self, owner: &DomainName, t: RecordType) -> &[RrsigData] {
        self.sigs.get(&(owner.clone(), t)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn signed_rrset(&self, owner: &DomainName, t: RecordType) -> Option<SignedRRSet> {
        self.zone
            .rrset(owner, t)
            .map(|r| SignedRRSet { rrset: r.clone(), sigs: self.sigs(owner, t).to_vec() })
    }

    /// Every RRSet that was signed, with its signatures.
    pub fn signed_rrsets(&self) -> impl Iterator<Item = SignedRRSet> + '_ {
        self.sigs.iter().map(|((o, t), s)| SignedRRSet {
            rrset: self.zone.rrset(o, *t).expect("signed RRSet exists").clone(),
            sigs: s.clone(),
        })
    }

    pub fn dnskeys(&self) -> &[DnskeyData] {
        &self.keys
    }

    pub fn ksks(&self) -> impl Iterator<Item = &DnskeyData> {
        self.keys.iter().filter(|k| k.is_ksk())
    }

    pub fn zsks(&self) -> impl Iterator<Item = &DnskeyData> {
        self.keys.iter().filter(|k| !k.is_ksk())
    }

    pub fn key_ids(&self) -> BTreeSet<KeyId> {
        self.keys.iter().map(|k| k.key.key).collect()
    }

    pub fn sign_log(&self) -> &[SignEvent] {
        &self.sign_log
    }

    pub fn is_malicious(&self) -> bool {
        self.malicious
    }

    /// Lets a mixed zone's server pick the wrapping NSEC3 for names between
    /// its owners wherever one covers them.
    pub fn set_malicious(&mut self, on: bool) {
        self.malicious = on;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{verify, AlgorithmId, KeyFactory};

    fn n(s: &str) -> DomainName {
        s.parse().unwrap()
    }

    #[test]
    fn empty_zone_gets_only_dnskey() {
        let mut f = KeyFactory::default();
        let zsk = f.generate(KeyRole::Zsk, AlgorithmId::RSASHA256);
        let ksk = f.generate(KeyRole::Ksk, AlgorithmId::RSASHA256);
        let s = sign_zone(&Zone::new(n("example")), &zsk, &ksk).unwrap();
        let all: Vec<_> = s.signed_rrsets().collect();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].rrset.rtype(), RecordType::DNSKEY);
        assert_eq!(all[0].sigs.len(), 2);
        for sig in &all[0].sigs {
            let key = if sig.signature.signer() == Some(zsk.id()) { zsk.public() } else { ksk.public() };
            assert!(verify(&sig.signature, &signed_data(sig, &all[0].rrset), &key));
        }
    }

    #[test]
    fn role_mismatch_rejected() {
        let mut f = KeyFactory::default();
        let a = f.generate(KeyRole::Zsk, AlgorithmId::RSASHA256);
        let b = f.generate(KeyRole::Zsk, AlgorithmId::RSASHA256);
        assert!(matches!(sign_zone(&Zone::new(n("example")), &a, &b), Err(SignError::WrongRole { .. })));
    }

    #[test]
    fn ds_is_deterministic() {
        let mut f = KeyFactory::default();
        let zsk = f.generate(KeyRole::Zsk, AlgorithmId::RSASHA256);
        let ksk = f.generate(KeyRole::Ksk, AlgorithmId::RSASHA256);
        let s = sign_zone(&Zone::new(n("example")), &zsk, &ksk).unwrap();
        assert_eq!(ds_for(&s), ds_for(&s));
        assert_eq!(ds_for(&s).digest, dnskey_digest(&n("example"), s.ksks().next().unwrap()));
    }
}
