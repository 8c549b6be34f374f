//! Resource records, RRSets and DNS messages.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::crypto::{AlgorithmId, Digest, HashedLabel, Nsec3Params, PublicKey, Signature};
use crate::name::DomainName;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("unknown record type {0:?}")]
    UnknownType(String),
    #[error("{got} record cannot join a {want} RRSet")]
    TypeMismatch { want: RecordType, got: RecordType },
    #[error("record owned by {got} cannot join the RRSet at {want}")]
    OwnerMismatch { want: DomainName, got: DomainName },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordType {
    A,
    NS,
    MX,
    DNSKEY,
    DS,
    RRSIG,
    NSEC,
    NSEC3,
}

impl RecordType {
    pub const ALL: [RecordType; 8] = [
        RecordType::A,
        RecordType::NS,
        RecordType::MX,
        RecordType::DNSKEY,
        RecordType::DS,
        RecordType::RRSIG,
        RecordType::NSEC,
        RecordType::NSEC3,
    ];

    /// IANA type code, used only inside canonical byte strings.
    pub fn code(self) -> u16 {
        match self {
            RecordType::A => 1,
            RecordType::NS => 2,
            RecordType::MX => 15,
            RecordType::DS => 43,
            RecordType::RRSIG => 46,
            RecordType::NSEC => 47,
            RecordType::DNSKEY => 48,
            RecordType::NSEC3 => 50,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RecordType::A => "A",
            RecordType::NS => "NS",
            RecordType::MX => "MX",
            RecordType::DNSKEY => "DNSKEY",
            RecordType::DS => "DS",
            RecordType::RRSIG => "RRSIG",
            RecordType::NSEC => "NSEC",
            RecordType::NSEC3 => "NSEC3",
        }
    }

    pub fn is_denial(self) -> bool {
        matches!(self, RecordType::NSEC | RecordType::NSEC3)
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RecordType {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecordType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| RecordError::UnknownType(s.into()))
    }
}

impl Serialize for RecordType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for RecordType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub type TypeSet = BTreeSet<RecordType>;

/// Which denial family a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DenialFamily {
    #[serde(rename = "NSEC")]
    Nsec,
    #[serde(rename = "NSEC3")]
    Nsec3,
}

impl fmt::Display for DenialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenialFamily::Nsec => "NSEC",
            DenialFamily::Nsec3 => "NSEC3",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DnskeyData {
    pub flags: u16,
    pub protocol: u8,
    pub key: PublicKey,
}

impl DnskeyData {
    pub const ZSK_FLAGS: u16 = 256;
    pub const KSK_FLAGS: u16 = 257;

    pub fn algorithm(&self) -> AlgorithmId {
        self.key.algorithm
    }

    pub fn is_ksk(&self) -> bool {
        self.flags & 1 == 1
    }

    pub fn key_tag(&self) -> u16 {
        (self.key.key.0 & 0xffff) as u16
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DsData {
    pub key_tag: u16,
    pub algorithm: AlgorithmId,
    pub digest_type: u8,
    pub digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RrsigData {
    pub type_covered: RecordType,
    pub algorithm: AlgorithmId,
    pub labels: u8,
    pub signer: DomainName,
    pub key_tag: u16,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NsecData {
    pub next: DomainName,
    pub types: TypeSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nsec3Data {
    pub params: Nsec3Params,
    pub next_hashed: HashedLabel,
    pub types: TypeSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RData {
    /// Addresses stay symbolic.
    A(String),
    Ns(DomainName),
    Mx(DomainName),
    Dnskey(DnskeyData),
    Ds(DsData),
    Rrsig(RrsigData),
    Nsec(NsecData),
    Nsec3(Nsec3Data),
}

impl RData {
    pub fn rtype(&self) -> RecordType {
        match self {
            RData::A(_) => RecordType::A,
            RData::Ns(_) => RecordType::NS,
            RData::Mx(_) => RecordType::MX,
            RData::Dnskey(_) => RecordType::DNSKEY,
            RData::Ds(_) => RecordType::DS,
            RData::Rrsig(_) => RecordType::RRSIG,
            RData::Nsec(_) => RecordType::NSEC,
            RData::Nsec3(_) => RecordType::NSEC3,
        }
    }

    /// Deterministic encoding used for signing and DS digests.
    pub fn write_canonical(&self, out: &mut Vec<u8>) {
        fn types(out: &mut Vec<u8>, t: &TypeSet) {
            out.push(t.len() as u8);
            for ty in t {
                out.extend_from_slice(&ty.code().to_be_bytes());
            }
        }
        out.extend_from_slice(&self.rtype().code().to_be_bytes());
        match self {
            RData::A(addr) => {
                out.extend_from_slice(&(addr.len() as u16).to_be_bytes());
                out.extend_from_slice(addr.as_bytes());
            }
            RData::Ns(n) | RData::Mx(n) => out.extend(n.to_wire()),
            RData::Dnskey(k) => {
                out.extend_from_slice(&k.flags.to_be_bytes());
                out.push(k.protocol);
                out.push(k.key.algorithm.0);
                out.extend_from_slice(&k.key.key.0.to_be_bytes());
            }
            RData::Ds(d) => {
                out.extend_from_slice(&d.key_tag.to_be_bytes());
                out.push(d.algorithm.0);
                out.push(d.digest_type);
                out.extend_from_slice(d.digest.as_bytes());
            }
            RData::Rrsig(s) => {
                out.extend_from_slice(&s.type_covered.code().to_be_bytes());
                out.push(s.algorithm.0);
                out.push(s.labels);
                out.extend(s.signer.to_wire());
                out.extend_from_slice(&s.key_tag.to_be_bytes());
                out.extend(serde_json::to_vec(&s.signature).expect("signature serializes"));
            }
            RData::Nsec(n) => {
                out.extend(n.next.to_wire());
                types(out, &n.types);
            }
            RData::Nsec3(n) => {
                out.push(n.params.algorithm);
                out.extend_from_slice(&n.params.iterations.to_be_bytes());
                out.push(n.params.salt.len() as u8);
                out.extend_from_slice(&n.params.salt);
                out.extend_from_slice(n.next_hashed.as_bytes());
                types(out, &n.types);
            }
        }
    }
}

fn fmt_types(f: &mut fmt::Formatter<'_>, t: &TypeSet) -> fmt::Result {
    for ty in t {
        write!(f, " {ty}")?;
    }
    Ok(())
}

impl fmt::Display for RData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RData::A(a) => write!(f, "A {a}"),
            RData::Ns(n) => write!(f, "NS {n}"),
            RData::Mx(n) => write!(f, "MX {n}"),
            RData::Dnskey(k) => write!(f, "DNSKEY {} {} {} {}", k.flags, k.protocol, k.key.algorithm, k.key.key),
            RData::Ds(d) => write!(f, "DS {} {} {} {}", d.key_tag, d.algorithm, d.digest_type, d.digest),
            RData::Rrsig(s) => {
                let by = match s.signature.signer() {
                    Some(k) => k.to_string(),
                    None => "forged".into(),
                };
                write!(f, "RRSIG {} {} {} {} {} sig:{by}", s.type_covered, s.algorithm, s.labels, s.key_tag, s.signer)
            }
            RData::Nsec(n) => {
                write!(f, "NSEC {}", n.next)?;
                fmt_types(f, &n.types)
            }
            RData::Nsec3(n) => {
                write!(f, "NSEC3 {} {}", n.params, n.next_hashed)?;
                fmt_types(f, &n.types)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourceRecord {
    pub owner: DomainName,
    pub rdata: RData,
}

impl ResourceRecord {
    pub fn new(owner: DomainName, rdata: RData) -> Self {
        ResourceRecord { owner, rdata }
    }

    pub fn rtype(&self) -> RecordType {
        self.rdata.rtype()
    }
}

impl fmt::Display for ResourceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.owner, self.rdata)
    }
}

impl Serialize for ResourceRecord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// All records of one (owner, type). Records are kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RRSet {
    owner: DomainName,
    rtype: RecordType,
    rdata: Vec<RData>,
}

impl RRSet {
    pub fn empty(owner: DomainName, rtype: RecordType) -> Self {
        RRSet { owner, rtype, rdata: Vec::new() }
    }

    pub fn new(owner: DomainName, rtype: RecordType, rdata: impl IntoIterator<Item = RData>) -> Result<Self, RecordError> {
        let mut s = RRSet::empty(owner, rtype);
        for r in rdata {
            s.push(r)?;
        }
        Ok(s)
    }

    pub fn single(owner: DomainName, rdata: RData) -> Self {
        RRSet { owner, rtype: rdata.rtype(), rdata: vec![rdata] }
    }

    pub fn push(&mut self, r: RData) -> Result<(), RecordError> {
        if r.rtype() != self.rtype {
            return Err(RecordError::TypeMismatch { want: self.rtype, got: r.rtype() });
        }
        if let Err(pos) = self.rdata.binary_search(&r) {
            self.rdata.insert(pos, r);
        }
        Ok(())
    }

    pub fn owner(&self) -> &DomainName {
        &self.owner
    }

    pub fn rtype(&self) -> RecordType {
        self.rtype
    }

    pub fn rdata(&self) -> &[RData] {
        &self.rdata
    }

    pub fn len(&self) -> usize {
        self.rdata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rdata.is_empty()
    }

    pub fn with_owner(&self, owner: DomainName) -> RRSet {
        RRSet { owner, rtype: self.rtype, rdata: self.rdata.clone() }
    }

    /// Replaces the payload. Used by the adversary's record mutations.
    pub fn with_rdata(&self, rdata: Vec<RData>) -> Result<RRSet, RecordError> {
        RRSet::new(self.owner.clone(), self.rtype, rdata)
    }

    pub fn records(&self) -> impl Iterator<Item = ResourceRecord> + '_ {
        self.rdata.iter().map(|r| ResourceRecord::new(self.owner.clone(), r.clone()))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = self.owner.to_wire();
        out.extend_from_slice(&self.rtype.code().to_be_bytes());
        for r in &self.rdata {
            let mut one = Vec::new();
            r.write_canonical(&mut one);
            out.extend_from_slice(&(one.len() as u32).to_be_bytes());
            out.extend(one);
        }
        out
    }
}

impl fmt::Display for RRSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.rdata.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{} {}", self.owner, r)?;
        }
        if self.rdata.is_empty() {
            write!(f, "{} {} (empty)", self.owner, self.rtype)?;
        }
        Ok(())
    }
}

impl Serialize for RRSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Bytes covered by an RRSIG: its own fields (minus the signature) followed by
/// the RRSet in canonical form, with `owner` as the name that was signed.
pub fn signed_data(sig: &RrsigData, rrset: &RRSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&sig.type_covered.code().to_be_bytes());
    out.push(sig.algorithm.0);
    out.push(sig.labels);
    out.extend(sig.signer.to_wire());
    out.extend_from_slice(&sig.key_tag.to_be_bytes());
    out.extend(rrset.canonical_bytes());
    out
}

/// An RRSet together with the RRSIGs that travel with it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignedRRSet {
    pub rrset: RRSet,
    pub sigs: Vec<RrsigData>,
}

impl SignedRRSet {
    pub fn unsigned(rrset: RRSet) -> Self {
        SignedRRSet { rrset, sigs: Vec::new() }
    }

    pub fn records(&self) -> impl Iterator<Item = ResourceRecord> + '_ {
        self.rrset.records().chain(
            self.sigs.iter().map(|s| ResourceRecord::new(self.rrset.owner().clone(), RData::Rrsig(s.clone()))),
        )
    }

    pub fn family(&self) -> Option<DenialFamily> {
        match self.rrset.rtype() {
            RecordType::NSEC => Some(DenialFamily::Nsec),
            RecordType::NSEC3 => Some(DenialFamily::Nsec3),
            _ => None,
        }
    }
}

impl Serialize for SignedRRSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.records().map(|r| r.to_string()))
    }
}

/// Regroups a message section into RRSets, attaching RRSIGs to the RRSet they
/// cover. Order of first appearance is kept. RRSIGs with nothing to cover are
/// returned as their own RRSet.
pub fn group_rrsets(section: &[ResourceRecord]) -> Vec<SignedRRSet> {
    let mut out: Vec<SignedRRSet> = Vec::new();
    let find = |out: &mut Vec<SignedRRSet>, owner: &DomainName, t: RecordType| {
        out.iter().position(|s| s.rrset.owner() == owner && s.rrset.rtype() == t)
    };
    for rr in section.iter().filter(|r| r.rtype() != RecordType::RRSIG) {
        match find(&mut out, &rr.owner, rr.rtype()) {
            Some(i) => out[i].rrset.push(rr.rdata.clone()).expect("same type"),
            None => out.push(SignedRRSet::unsigned(RRSet::single(rr.owner.clone(), rr.rdata.clone()))),
        }
    }
    for rr in section {
        if let RData::Rrsig(s) = &rr.rdata {
            match find(&mut out, &rr.owner, s.type_covered) {
                Some(i) => out[i].sigs.push(s.clone()),
                None => match find(&mut out, &rr.owner, RecordType::RRSIG) {
                    Some(i) => out[i].rrset.push(rr.rdata.clone()).expect("same type"),
                    None => out.push(SignedRRSet::unsigned(RRSet::single(rr.owner.clone(), rr.rdata.clone()))),
                },
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Query {
    pub qname: DomainName,
    pub qtype: RecordType,
    pub cd: bool,
    pub do_bit: bool,
    pub qid: QueryId,
}

impl Query {
    pub fn new(qname: DomainName, qtype: RecordType, qid: QueryId) -> Self {
        Query { qname, qtype, cd: false, do_bit: true, qid }
    }

    pub fn with_cd(mut self, cd: bool) -> Self {
        self.cd = cd;
        self
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.qname, self.qtype)?;
        if self.cd {
            f.write_str(" +cd")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Rcode {
    NoError,
    NxDomain,
    ServFail,
    Refused,
}

impl fmt::Display for Rcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rcode::NoError => "NOERROR",
            Rcode::NxDomain => "NXDOMAIN",
            Rcode::ServFail => "SERVFAIL",
            Rcode::Refused => "REFUSED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Response {
    pub rcode: Rcode,
    pub answer: Vec<ResourceRecord>,
    pub authority: Vec<ResourceRecord>,
    pub additional: Vec<ResourceRecord>,
    pub ad: bool,
}

impl Response {
    pub fn empty(rcode: Rcode) -> Self {
        Response { rcode, answer: Vec::new(), authority: Vec::new(), additional: Vec::new(), ad: false }
    }

    pub fn all_records(&self) -> impl Iterator<Item = &ResourceRecord> {
        self.answer.iter().chain(&self.authority).chain(&self.additional)
    }

    /// Digest of the whole message, used to correlate trace events.
    pub fn digest(&self) -> Digest {
        crate::crypto::hash(serde_json::to_string(self).expect("response serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{KeyFactory, KeyRole};

    fn n(s: &str) -> DomainName {
        s.parse().unwrap()
    }

    #[test]
    fn unknown_types_rejected() {
        assert_eq!("mx".parse::<RecordType>().unwrap(), RecordType::MX);
        assert!(matches!("SOA".parse::<RecordType>(), Err(RecordError::UnknownType(_))));
        assert!(matches!("DNEKEY".parse::<RecordType>(), Err(RecordError::UnknownType(_))));
    }

    #[test]
    fn rrset_rejects_other_types_and_dedups() {
        let mut s = RRSet::empty(n("a.example"), RecordType::A);
        s.push(RData::A("10.0.0.2".into())).unwrap();
        s.push(RData::A("10.0.0.1".into())).unwrap();
        s.push(RData::A("10.0.0.1".into())).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.push(RData::Ns(n("ns.example"))).is_err());
    }

    #[test]
    fn grouping_attaches_signatures() {
        let k = KeyFactory::default().generate(KeyRole::Zsk, AlgorithmId::RSASHA256);
        let sig = RrsigData {
            type_covered: RecordType::MX,
            algorithm: AlgorithmId::RSASHA256,
            labels: 1,
            signer: n("example"),
            key_tag: 1,
            signature: k.sign(b"x"),
        };
        let section = vec![
            ResourceRecord::new(n("example"), RData::Rrsig(sig.clone())),
            ResourceRecord::new(n("example"), RData::Mx(n("xx.example"))),
            ResourceRecord::new(n("xx.example"), RData::A("ip".into())),
        ];
        let g = group_rrsets(&section);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].rrset.rtype(), RecordType::MX);
        assert_eq!(g[0].sigs, vec![sig]);
        assert!(g[1].sigs.is_empty());
        let back: Vec<_> = g[0].records().collect();
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn canonical_bytes_ignore_insertion_order() {
        let a = RRSet::new(n("x.example"), RecordType::A, [RData::A("1".into()), RData::A("2".into())]).unwrap();
        let b = RRSet::new(n("x.example"), RecordType::A, [RData::A("2".into()), RData::A("1".into())]).unwrap();
        assert_eq!(a.canonical_bytes(), b.canonical_bytes());
        let c = a.with_owner(n("y.example"));
        assert_ne!(a.canonical_bytes(), c.canonical_bytes());
    }
}
