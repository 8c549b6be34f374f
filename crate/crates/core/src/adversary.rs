//! Dolev-Yao adversary: message terms, the knowledge set, and attacker scripts.
//!
//! Messages are decomposed into [`Term`]s. The knowledge set holds every atom
//! the adversary has seen in clear; a term is derivable when each of its atoms
//! is known, public, fresh, or built with the adversary's own keys.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{AlgorithmId, Digest, HashedLabel, KeyFactory, KeyId, KeyPair, KeyRole, PublicKey, Signature};
use crate::name::DomainName;
use crate::record::{
    group_rrsets, signed_data, DnskeyData, DsData, NsecData, Query, QueryId, RData, RRSet, RecordType, ResourceRecord,
    Response, RrsigData, SignedRRSet,
};
use crate::zone::dnskey_digest;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Name(DomainName),
    Hashed(HashedLabel),
    Digest(Digest),
    Key(PublicKey),
    Sig(Signature),
    /// Public constants: type names, numbers, addresses.
    Const(String),
    Tuple(Vec<Term>),
}

fn c(s: impl ToString) -> Term {
    Term::Const(s.to_string())
}

impl Term {
    fn atoms<'a>(&'a self, out: &mut Vec<&'a Term>) {
        match self {
            Term::Tuple(ts) => ts.iter().for_each(|t| t.atoms(out)),
            atom => out.push(atom),
        }
    }
}

fn types_term(t: &crate::record::TypeSet) -> Term {
    Term::Tuple(t.iter().map(c).collect())
}

pub fn rdata_term(r: &RData) -> Term {
    match r {
        RData::A(a) => c(a),
        RData::Ns(n) | RData::Mx(n) => Term::Name(n.clone()),
        RData::Dnskey(k) => Term::Tuple(vec![c(k.flags), c(k.protocol), Term::Key(k.key)]),
        RData::Ds(d) => Term::Tuple(vec![c(d.key_tag), c(d.algorithm), c(d.digest_type), Term::Digest(d.digest)]),
        RData::Rrsig(s) => Term::Tuple(vec![
            c(s.type_covered),
            c(s.algorithm),
            c(s.labels),
            Term::Name(s.signer.clone()),
            c(s.key_tag),
            Term::Sig(s.signature),
        ]),
        RData::Nsec(n) => Term::Tuple(vec![Term::Name(n.next.clone()), types_term(&n.types)]),
        RData::Nsec3(n) => Term::Tuple(vec![c(&n.params), Term::Hashed(n.next_hashed), types_term(&n.types)]),
    }
}

fn owner_term(owner: &DomainName, t: RecordType) -> Term {
    if t == RecordType::NSEC3 {
        if let (Some(h), Some(parent)) = (HashedLabel::from_owner(owner), owner.parent()) {
            return Term::Tuple(vec![Term::Hashed(h), Term::Name(parent)]);
        }
    }
    Term::Name(owner.clone())
}

pub fn record_term(rr: &ResourceRecord) -> Term {
    let t = match &rr.rdata {
        RData::Rrsig(s) => s.type_covered,
        other => other.rtype(),
    };
    Term::Tuple(vec![owner_term(&rr.owner, t), c(rr.rtype()), rdata_term(&rr.rdata)])
}

pub fn response_term(r: &Response) -> Term {
    Term::Tuple(
        std::iter::once(c(r.rcode))
            .chain(r.all_records().map(record_term))
            .collect(),
    )
}

pub fn query_term(q: &Query) -> Term {
    Term::Tuple(vec![Term::Name(q.qname.clone()), c(q.qtype), c(q.cd)])
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DerivabilityError {
    #[error("adversary does not know {0:?}")]
    Unknown(Term),
}

/// What the adversary has seen, plus what it can build on its own.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeSet {
    atoms: BTreeSet<Term>,
    names: BTreeSet<DomainName>,
    /// Names the adversary cannot invent; all others are treated as fresh constants.
    secret: BTreeSet<DomainName>,
    own_keys: BTreeSet<KeyId>,
    computed: BTreeSet<Digest>,
}

impl KnowledgeSet {
    pub fn new(secret: BTreeSet<DomainName>) -> Self {
        KnowledgeSet { secret, ..Default::default() }
    }

    /// Adds every atom of `t`. Returns the names that were not known before.
    pub fn observe(&mut self, t: &Term) -> Vec<DomainName> {
        let mut atoms = Vec::new();
        t.atoms(&mut atoms);
        let mut fresh = Vec::new();
        for a in atoms {
            if let Term::Name(n) = a {
                if self.names.insert(n.clone()) {
                    fresh.push(n.clone());
                }
            }
            self.atoms.insert(a.clone());
        }
        fresh
    }

    /// `K(d)`: `d` or one of its descendants was seen in clear.
    pub fn knows(&self, d: &DomainName) -> bool {
        self.names.iter().any(|n| n.is_subdomain_of(d))
    }

    pub fn known_names(&self) -> &BTreeSet<DomainName> {
        &self.names
    }

    pub fn add_own_key(&mut self, k: KeyId) {
        self.own_keys.insert(k);
    }

    /// Records a digest the adversary computed from terms it can derive.
    pub fn add_computed(&mut self, d: Digest) {
        self.computed.insert(d);
    }

    fn atom_derivable(&self, a: &Term) -> bool {
        if self.atoms.contains(a) {
            return true;
        }
        match a {
            Term::Const(_) => true,
            Term::Name(n) => !self.secret.contains(n),
            Term::Key(pk) => self.own_keys.contains(&pk.key),
            Term::Sig(s) => match s.signer() {
                None => true,
                Some(k) => self.own_keys.contains(&k),
            },
            Term::Digest(d) => self.computed.contains(d),
            Term::Hashed(_) => false,
            Term::Tuple(_) => unreachable!("atoms only"),
        }
    }

    pub fn derivable(&self, t: &Term) -> Result<(), DerivabilityError> {
        let mut atoms = Vec::new();
        t.atoms(&mut atoms);
        match atoms.into_iter().find(|a| !self.atom_derivable(a)) {
            Some(a) => Err(DerivabilityError::Unknown(a.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackerScript {
    #[default]
    Passive,
    /// Rewrites the first RRSIG algorithm of dual-signed answers for `victim`.
    Downgrade { victim: DomainName, target_algorithm: AlgorithmId },
    /// Answers CD=1 DNSKEY queries sent to `victim`'s server with a fresh, unsigned key set.
    Ruc { victim: DomainName },
    /// Tampers with a random share of responses using everything it knows.
    Forger { tamper_percent: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperKind {
    ChangeRdata,
    ForgeSignature,
    StripSignatures,
    FakeKeys,
    FakeDs,
    OwnSignature,
    StretchDenial,
    DropRecord,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryAction {
    AlgRewrite { server: DomainName, owner: DomainName, rtype: RecordType, from: AlgorithmId, to: AlgorithmId },
    FakeDnskey { server: DomainName, owner: DomainName, keys: Vec<KeyId> },
    Tamper { server: DomainName, tamper: TamperKind, detail: String },
    /// A modification the adversary could not derive; the original was delivered.
    Rejected { server: DomainName, reason: String },
}

pub struct Adversary {
    knowledge: KnowledgeSet,
    script: AttackerScript,
    keys: KeyFactory,
    own: Vec<KeyPair>,
    seen: Vec<(QueryId, Response)>,
    nonce: u64,
}

impl std::fmt::Debug for Adversary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Adversary").field("script", &self.script).field("names", &self.knowledge.names.len()).finish()
    }
}

/// Adversary key ids start far above any honest id.
const ADVERSARY_KEY_BASE: u64 = 1 << 32;

impl Adversary {
    pub fn new(script: AttackerScript, secret: BTreeSet<DomainName>) -> Self {
        Adversary {
            knowledge: KnowledgeSet::new(secret),
            script,
            keys: KeyFactory::starting_at(ADVERSARY_KEY_BASE),
            own: Vec::new(),
            seen: Vec::new(),
            nonce: 0,
        }
    }

    pub fn script(&self) -> &AttackerScript {
        &self.script
    }

    pub fn knowledge(&self) -> &KnowledgeSet {
        &self.knowledge
    }

    pub fn observe_query(&mut self, q: &Query) -> Vec<DomainName> {
        self.knowledge.observe(&query_term(q))
    }

    pub fn observe_response(&mut self, qid: QueryId, r: &Response) -> Vec<DomainName> {
        self.seen.push((qid, r.clone()));
        self.knowledge.observe(&response_term(r))
    }

    /// `inject`: succeeds only for messages built from derivable terms.
    pub fn inject(&self, r: &Response) -> Result<(), DerivabilityError> {
        self.knowledge.derivable(&response_term(r))
    }

    fn fresh_key(&mut self, role: KeyRole, alg: AlgorithmId) -> usize {
        let k = self.keys.generate(role, alg);
        self.knowledge.add_own_key(k.id());
        self.own.push(k);
        self.own.len() - 1
    }

    fn own_dnskey(&self, i: usize) -> DnskeyData {
        let k = &self.own[i];
        let flags = if k.role() == KeyRole::Ksk { DnskeyData::KSK_FLAGS } else { DnskeyData::ZSK_FLAGS };
        DnskeyData { flags, protocol: 3, key: k.public() }
    }

    fn own_sign(&self, i: usize, rrset: &RRSet, signer: &DomainName) -> RrsigData {
        let k = &self.own[i];
        let mut sig = RrsigData {
            type_covered: rrset.rtype(),
            algorithm: k.algorithm(),
            labels: rrset.owner().rrsig_label_count() as u8,
            signer: signer.clone(),
            key_tag: self.own_dnskey(i).key_tag(),
            signature: Signature::forged(0),
        };
        sig.signature = k.sign(&signed_data(&sig, rrset));
        sig
    }

    /// Interception point before a query reaches `server`. May answer in its place.
    pub fn on_query(&mut self, server: &DomainName, q: &Query) -> Option<(Response, AdversaryAction)> {
        let AttackerScript::Ruc { victim } = &self.script else {
            return None;
        };
        if q.qname != *victim || *server != *victim || q.qtype != RecordType::DNSKEY || !q.cd {
            return None;
        }
        let victim = victim.clone();
        let alg = AlgorithmId::RSASHA256;
        let ksk = self.fresh_key(KeyRole::Ksk, alg);
        let zsk = self.fresh_key(KeyRole::Zsk, alg);
        let rrset = RRSet::new(
            victim.clone(),
            RecordType::DNSKEY,
            [RData::Dnskey(self.own_dnskey(ksk)), RData::Dnskey(self.own_dnskey(zsk))],
        )
        .expect("DNSKEY rdata");
        let mut r = Response::empty(crate::record::Rcode::NoError);
        r.answer.extend(rrset.records());
        let action = AdversaryAction::FakeDnskey {
            server: server.clone(),
            owner: victim,
            keys: vec![self.own[ksk].id(), self.own[zsk].id()],
        };
        Some((r, action))
    }

    /// Interception point for a response in flight from `server`.
    pub fn on_response(
        &mut self,
        server: &DomainName,
        q: &Query,
        r: &Response,
        rng: &mut ChaCha8Rng,
    ) -> Option<(Response, AdversaryAction)> {
        match self.script.clone() {
            AttackerScript::Passive | AttackerScript::Ruc { .. } => None,
            AttackerScript::Downgrade { victim, target_algorithm } => {
                if q.qname != victim || matches!(q.qtype, RecordType::DNSKEY | RecordType::DS) {
                    return None;
                }
                downgrade(server, r, target_algorithm)
            }
            AttackerScript::Forger { tamper_percent } => {
                if rng.gen_range(0..100u8) >= tamper_percent {
                    return None;
                }
                self.tamper(server, r, rng)
            }
        }
    }

    fn tamper(&mut self, server: &DomainName, r: &Response, rng: &mut ChaCha8Rng) -> Option<(Response, AdversaryAction)> {
        use TamperKind::*;
        let kinds = [ChangeRdata, ForgeSignature, StripSignatures, FakeKeys, FakeDs, OwnSignature, StretchDenial, DropRecord, Replay];
        let start = rng.gen_range(0..kinds.len());
        for i in 0..kinds.len() {
            let kind = kinds[(start + i) % kinds.len()];
            if let Some((out, detail)) = self.try_tamper(kind, server, r, rng) {
                return Some((out, AdversaryAction::Tamper { server: server.clone(), tamper: kind, detail }));
            }
        }
        None
    }

    fn try_tamper(
        &mut self,
        kind: TamperKind,
        server: &DomainName,
        r: &Response,
        rng: &mut ChaCha8Rng,
    ) -> Option<(Response, String)> {
        use TamperKind::*;
        let mut sections = [group_rrsets(&r.answer), group_rrsets(&r.authority), group_rrsets(&r.additional)];
        let rebuild = |sections: &[Vec<SignedRRSet>; 3], rcode| {
            let mut out = Response::empty(rcode);
            out.answer = sections[0].iter().flat_map(SignedRRSet::records).collect();
            out.authority = sections[1].iter().flat_map(SignedRRSet::records).collect();
            out.additional = sections[2].iter().flat_map(SignedRRSet::records).collect();
            out
        };
        let pick = |sections: &[Vec<SignedRRSet>; 3], pred: &dyn Fn(&SignedRRSet) -> bool| {
            sections
                .iter()
                .enumerate()
                .flat_map(|(si, sec)| sec.iter().enumerate().filter(|(_, s)| pred(s)).map(move |(i, _)| (si, i)))
                .next()
        };
        match kind {
            ChangeRdata => {
                let (si, i) = pick(&sections, &|s| {
                    matches!(s.rrset.rtype(), RecordType::A | RecordType::NS | RecordType::MX | RecordType::DS)
                })?;
                let s = &mut sections[si][i];
                let evil = DomainName::from_labels([&b"ns"[..], b"attacker"]).expect("valid name");
                let new: Vec<RData> = s
                    .rrset
                    .rdata()
                    .iter()
                    .map(|d| match d {
                        RData::A(_) => RData::A("6.6.6.6".into()),
                        RData::Ns(_) => RData::Ns(evil.clone()),
                        RData::Mx(_) => RData::Mx(evil.clone()),
                        RData::Ds(d) => RData::Ds(DsData { key_tag: d.key_tag.wrapping_add(1), ..d.clone() }),
                        other => other.clone(),
                    })
                    .collect();
                let detail = format!("rdata of {} {}", s.rrset.owner(), s.rrset.rtype());
                s.rrset = s.rrset.with_rdata(new).ok()?;
                Some((rebuild(&sections, r.rcode), detail))
            }
            ForgeSignature => {
                let (si, i) = pick(&sections, &|s| !s.sigs.is_empty())?;
                self.nonce += 1;
                let nonce = self.nonce;
                let s = &mut sections[si][i];
                for sig in &mut s.sigs {
                    sig.signature = Signature::forged(nonce);
                }
                let detail = format!("forged RRSIG over {} {}", s.rrset.owner(), s.rrset.rtype());
                Some((rebuild(&sections, r.rcode), detail))
            }
            StripSignatures => {
                let (si, i) = pick(&sections, &|s| !s.sigs.is_empty())?;
                let s = &mut sections[si][i];
                s.sigs.clear();
                let detail = format!("stripped RRSIGs of {} {}", s.rrset.owner(), s.rrset.rtype());
                Some((rebuild(&sections, r.rcode), detail))
            }
            FakeKeys => {
                let (si, i) = pick(&sections, &|s| s.rrset.rtype() == RecordType::DNSKEY)?;
                let owner = sections[si][i].rrset.owner().clone();
                let ksk = self.fresh_key(KeyRole::Ksk, AlgorithmId::RSASHA256);
                let zsk = self.fresh_key(KeyRole::Zsk, AlgorithmId::RSASHA256);
                let rrset = RRSet::new(
                    owner.clone(),
                    RecordType::DNSKEY,
                    [RData::Dnskey(self.own_dnskey(ksk)), RData::Dnskey(self.own_dnskey(zsk))],
                )
                .ok()?;
                let sigs = vec![self.own_sign(zsk, &rrset, &owner), self.own_sign(ksk, &rrset, &owner)];
                sections[si][i] = SignedRRSet { rrset, sigs };
                Some((rebuild(&sections, r.rcode), format!("self-signed DNSKEY for {owner}")))
            }
            FakeDs => {
                let (si, i) = pick(&sections, &|s| s.rrset.rtype() == RecordType::DS)?;
                let owner = sections[si][i].rrset.owner().clone();
                let ksk = self.fresh_key(KeyRole::Ksk, AlgorithmId::RSASHA256);
                let zsk = self.fresh_key(KeyRole::Zsk, AlgorithmId::RSASHA256);
                let key = self.own_dnskey(ksk);
                let digest = dnskey_digest(&owner, &key);
                self.knowledge.add_computed(digest);
                let ds = DsData { key_tag: key.key_tag(), algorithm: key.algorithm(), digest_type: 2, digest };
                let rrset = RRSet::single(owner.clone(), RData::Ds(ds));
                let sigs = vec![self.own_sign(zsk, &rrset, server)];
                sections[si][i] = SignedRRSet { rrset, sigs };
                Some((rebuild(&sections, r.rcode), format!("DS for {owner} pointing at an adversary key")))
            }
            OwnSignature => {
                let (si, i) = pick(&sections, &|s| !s.rrset.is_empty() && s.rrset.rtype() != RecordType::RRSIG)?;
                let zsk = self.fresh_key(KeyRole::Zsk, AlgorithmId::RSASHA256);
                let s = &mut sections[si][i];
                let sig = self.own_sign(zsk, &s.rrset, server);
                s.sigs = vec![sig];
                let detail = format!("re-signed {} {} with an adversary key", s.rrset.owner(), s.rrset.rtype());
                Some((rebuild(&sections, r.rcode), detail))
            }
            StretchDenial => {
                let (si, i) = pick(&sections, &|s| s.rrset.rtype() == RecordType::NSEC)?;
                let s = &mut sections[si][i];
                let apex = s.sigs.first().map(|g| g.signer.clone()).unwrap_or_else(|| server.clone());
                let new: Vec<RData> = s
                    .rrset
                    .rdata()
                    .iter()
                    .map(|d| match d {
                        RData::Nsec(n) => RData::Nsec(NsecData { next: apex.clone(), types: n.types.clone() }),
                        other => other.clone(),
                    })
                    .collect();
                let detail = format!("NSEC at {} stretched to {apex}", s.rrset.owner());
                s.rrset = s.rrset.with_rdata(new).ok()?;
                Some((rebuild(&sections, r.rcode), detail))
            }
            DropRecord => {
                let (si, i) = pick(&sections, &|s| s.rrset.rtype().is_denial())?;
                let s = sections[si].remove(i);
                Some((rebuild(&sections, r.rcode), format!("dropped {} {}", s.rrset.owner(), s.rrset.rtype())))
            }
            Replay => {
                if self.seen.is_empty() {
                    return None;
                }
                let (qid, old) = self.seen[rng.gen_range(0..self.seen.len())].clone();
                if old == *r {
                    return None;
                }
                Some((old, format!("replayed the response to {}", qid.0)))
            }
        }
    }
}

/// Listing-style downgrade: the first RRSIG of a dual-algorithm answer gets `to` as its algorithm.
fn downgrade(server: &DomainName, r: &Response, to: AlgorithmId) -> Option<(Response, AdversaryAction)> {
    let mut answer = group_rrsets(&r.answer);
    let s = answer.iter_mut().find(|s| {
        let algs: BTreeSet<_> = s.sigs.iter().map(|g| g.algorithm).collect();
        algs.len() >= 2
    })?;
    let first = s.sigs.first_mut()?;
    let from = first.algorithm;
    first.algorithm = to;
    let action = AdversaryAction::AlgRewrite {
        server: server.clone(),
        owner: s.rrset.owner().clone(),
        rtype: s.rrset.rtype(),
        from,
        to,
    };
    let mut out = r.clone();
    out.answer = answer.iter().flat_map(SignedRRSet::records).collect();
    Some((out, action))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn n(s: &str) -> DomainName {
        s.parse().unwrap()
    }

    #[test]
    fn nsec_next_name_becomes_known() {
        let mut k = KnowledgeSet::new([n("b.example")].into());
        assert!(!k.knows(&n("b.example")));
        let rr = ResourceRecord::new(
            n("a.example"),
            RData::Nsec(NsecData { next: n("b.example"), types: [RecordType::A].into() }),
        );
        let fresh = k.observe(&record_term(&rr));
        assert!(fresh.contains(&n("b.example")));
        assert!(k.knows(&n("b.example")));
        assert!(k.knows(&n("example")), "ancestors of a known name are known");
        assert!(!k.knows(&n("c.example")));
    }

    #[test]
    fn hashed_owner_reveals_no_name() {
        let mut k = KnowledgeSet::new([n("b.example")].into());
        let h = crate::crypto::nsec3_hash(&n("b.example"), &Default::default());
        let rr = ResourceRecord::new(
            h.owner_name(&n("example")),
            RData::Nsec3(crate::record::Nsec3Data { params: Default::default(), next_hashed: h, types: Default::default() }),
        );
        k.observe(&record_term(&rr));
        assert!(!k.knows(&n("b.example")));
        assert!(k.derivable(&Term::Hashed(h)).is_ok());
    }

    #[test]
    fn signatures_and_keys() {
        let mut f = KeyFactory::default();
        let honest = f.generate(KeyRole::Zsk, AlgorithmId::RSASHA256);
        let sig = honest.sign(b"m");
        let k = KnowledgeSet::new(BTreeSet::new());
        assert!(k.derivable(&Term::Sig(sig)).is_err(), "cannot sign with an unseen honest key");
        assert!(k.derivable(&Term::Sig(Signature::forged(3))).is_ok());
        assert!(k.derivable(&Term::Key(honest.public())).is_err());
        let mut k2 = k.clone();
        k2.observe(&Term::Sig(sig));
        assert!(k2.derivable(&Term::Sig(sig)).is_ok(), "replay of an observed signature");
    }

    #[test]
    fn secret_names_must_be_learned() {
        let k = KnowledgeSet::new([n("b.example")].into());
        assert!(k.derivable(&Term::Name(n("b.example"))).is_err());
        assert!(k.derivable(&Term::Name(n("ns.attacker"))).is_ok());
    }

    #[test]
    fn downgrade_idle_without_dual_signatures() {
        let mut adv = Adversary::new(
            AttackerScript::Downgrade { victim: n("a.example"), target_algorithm: AlgorithmId::ED448 },
            BTreeSet::new(),
        );
        let q = Query::new(n("a.example"), RecordType::A, QueryId(1));
        let r = Response::empty(crate::record::Rcode::NoError);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(adv.on_response(&n("example"), &q, &r, &mut rng).is_none());
    }

    #[test]
    fn ruc_needs_cd() {
        let mut adv = Adversary::new(AttackerScript::Ruc { victim: n("a.example") }, BTreeSet::new());
        let q = Query::new(n("a.example"), RecordType::DNSKEY, QueryId(1));
        assert!(adv.on_query(&n("a.example"), &q).is_none());
        let (r, _) = adv.on_query(&n("a.example"), &q.clone().with_cd(true)).unwrap();
        assert!(r.answer.iter().all(|rr| rr.rtype() == RecordType::DNSKEY), "no RRSIG");
        assert!(adv.inject(&r).is_ok());
    }
}
