//! Symbolic signatures and digests, plus the RFC 5155 NSEC3 hash.
//!
//! A [`Signature`] is a term, not a bit string: it records the digest of the
//! signed bytes, the signing key and the algorithm. Only [`KeyPair::sign`]
//! can build a verifying term, so forgery is impossible by construction.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use data_encoding::BASE32HEX_NOPAD;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha1::Sha1;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::name::DomainName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlgorithmId(pub u8);

impl AlgorithmId {
    pub const RSASHA1: AlgorithmId = AlgorithmId(5);
    pub const RSASHA256: AlgorithmId = AlgorithmId(8);
    pub const ECDSAP256SHA256: AlgorithmId = AlgorithmId(13);
    pub const ED25519: AlgorithmId = AlgorithmId(15);
    pub const ED448: AlgorithmId = AlgorithmId(16);
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyId(pub u64);

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KeyRole {
    Zsk,
    Ksk,
}

/// `pk(k)`: safe to publish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey {
    pub key: KeyId,
    pub algorithm: AlgorithmId,
}

/// The secret half. Deliberately neither `Clone` nor `Serialize`.
pub struct PrivateKey(KeyId);

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Debug)]
pub struct KeyPair {
    role: KeyRole,
    private: PrivateKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn id(&self) -> KeyId {
        self.private.0
    }

    pub fn role(&self) -> KeyRole {
        self.role
    }

    pub fn algorithm(&self) -> AlgorithmId {
        self.public.algorithm
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(SigTerm::Genuine { digest: hash(msg), key: self.private.0, algorithm: self.public.algorithm })
    }

    /// Signs and appends the event to `log`.
    pub fn sign_logged(&self, msg: &[u8], log: &mut Vec<SignEvent>) -> Signature {
        let sig = self.sign(msg);
        log.push(SignEvent { key: self.id(), digest: hash(msg) });
        sig
    }
}

/// Hands out fresh key identities. One factory per scenario keeps ids deterministic.
#[derive(Debug, Default)]
pub struct KeyFactory {
    next: u64,
}

impl KeyFactory {
    pub fn starting_at(next: u64) -> Self {
        KeyFactory { next }
    }

    pub fn generate(&mut self, role: KeyRole, algorithm: AlgorithmId) -> KeyPair {
        self.next += 1;
        let id = KeyId(self.next);
        KeyPair { role, private: PrivateKey(id), public: PublicKey { key: id, algorithm } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest([u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

pub fn hash(input: &[u8]) -> Digest {
    Digest(Sha256::digest(input).into())
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
enum SigTerm {
    Genuine { digest: Digest, key: KeyId, algorithm: AlgorithmId },
    Forged { nonce: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Signature(SigTerm);

impl Signature {
    /// A term the adversary can always build. It never verifies.
    pub fn forged(nonce: u64) -> Self {
        Signature(SigTerm::Forged { nonce })
    }

    /// Key that produced a genuine term. Public in the symbolic model.
    pub fn signer(&self) -> Option<KeyId> {
        match self.0 {
            SigTerm::Genuine { key, .. } => Some(key),
            SigTerm::Forged { .. } => None,
        }
    }

    /// `getmsg`: the digest a genuine signature commits to.
    pub fn message_digest(&self) -> Option<Digest> {
        match self.0 {
            SigTerm::Genuine { digest, .. } => Some(digest),
            SigTerm::Forged { .. } => None,
        }
    }
}

pub fn verify(sig: &Signature, msg: &[u8], pk: &PublicKey) -> bool {
    match sig.0 {
        SigTerm::Genuine { digest, key, algorithm } => {
            key == pk.key && algorithm == pk.algorithm && digest == hash(msg)
        }
        SigTerm::Forged { .. } => false,
    }
}

/// An authority used a private key on a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SignEvent {
    pub key: KeyId,
    pub digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Nsec3ParamsError {
    #[error("expected ALG:ITERATIONS:SALT, got {0:?}")]
    Shape(String),
    #[error("bad number in {0:?}")]
    Number(String),
    #[error("bad salt hex in {0:?}")]
    Salt(String),
    #[error("bad hashed label {0:?}")]
    HashedLabel(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nsec3Params {
    pub algorithm: u8,
    pub iterations: u16,
    pub salt: Vec<u8>,
}

impl Default for Nsec3Params {
    fn default() -> Self {
        Nsec3Params { algorithm: 1, iterations: 0, salt: Vec::new() }
    }
}

impl fmt::Display for Nsec3Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:", self.algorithm, self.iterations)?;
        if self.salt.is_empty() {
            f.write_str("-")
        } else {
            self.salt.iter().try_for_each(|b| write!(f, "{b:02x}"))
        }
    }
}

impl FromStr for Nsec3Params {
    type Err = Nsec3ParamsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<_> = s.split(':').collect();
        let [alg, iter, salt] = parts[..] else {
            return Err(Nsec3ParamsError::Shape(s.into()));
        };
        let algorithm = alg.parse().map_err(|_| Nsec3ParamsError::Number(s.into()))?;
        let iterations = iter.parse().map_err(|_| Nsec3ParamsError::Number(s.into()))?;
        let salt = if salt == "-" || salt.is_empty() {
            Vec::new()
        } else {
            data_encoding::HEXLOWER_PERMISSIVE
                .decode(salt.as_bytes())
                .map_err(|_| Nsec3ParamsError::Salt(s.into()))?
        };
        Ok(Nsec3Params { algorithm, iterations, salt })
    }
}

impl Serialize for Nsec3Params {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Nsec3Params {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A 160-bit NSEC3 owner hash. Byte order and base32hex text order agree.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashedLabel([u8; 20]);

impl HashedLabel {
    pub fn from_bytes(b: [u8; 20]) -> Self {
        HashedLabel(b)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    /// `<hash>.<apex>`
    pub fn owner_name(&self, apex: &DomainName) -> DomainName {
        apex.child(self.to_string().as_bytes()).expect("32-char label")
    }

    /// Inverse of [`HashedLabel::owner_name`] if the first label decodes.
    pub fn from_owner(owner: &DomainName) -> Option<Self> {
        let l = owner.first_label()?;
        std::str::from_utf8(l).ok()?.parse().ok()
    }

    /// True if `x` lies strictly inside the interval from `self` to `next`,
    /// wrapping past the top of the hash space when `next <= self`.
    pub fn covers(&self, next: &HashedLabel, x: &HashedLabel) -> bool {
        if self < next {
            self < x && x < next
        } else {
            x > self || x < next
        }
    }
}

impl fmt::Display for HashedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&BASE32HEX_NOPAD.encode(&self.0).to_ascii_lowercase())
    }
}

impl fmt::Debug for HashedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashedLabel({self})")
    }
}

impl FromStr for HashedLabel {
    type Err = Nsec3ParamsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = BASE32HEX_NOPAD
            .decode(s.to_ascii_uppercase().as_bytes())
            .map_err(|_| Nsec3ParamsError::HashedLabel(s.into()))?;
        let arr: [u8; 20] = raw.try_into().map_err(|_| Nsec3ParamsError::HashedLabel(s.into()))?;
        Ok(HashedLabel(arr))
    }
}

impl Serialize for HashedLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HashedLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub trait Nsec3Hasher: fmt::Debug + Send + Sync {
    fn hash(&self, name: &DomainName, params: &Nsec3Params) -> HashedLabel;
}

/// RFC 5155 iterated SHA-1 over the canonical wire name.
#[derive(Debug, Default, Clone, Copy)]
pub struct Sha1Nsec3;

impl Nsec3Hasher for Sha1Nsec3 {
    fn hash(&self, name: &DomainName, params: &Nsec3Params) -> HashedLabel {
        let mut h = Sha1::new();
        h.update(name.to_wire());
        h.update(&params.salt);
        let mut out: [u8; 20] = h.finalize().into();
        for _ in 0..params.iterations {
            let mut h = Sha1::new();
            h.update(out);
            h.update(&params.salt);
            out = h.finalize().into();
        }
        HashedLabel(out)
    }
}

/// Test oracle: fixed hashes for chosen names, SHA-1 for everything else.
#[derive(Debug, Default, Clone)]
pub struct TableHasher {
    table: BTreeMap<DomainName, HashedLabel>,
}

impl TableHasher {
    pub fn new(table: BTreeMap<DomainName, HashedLabel>) -> Self {
        TableHasher { table }
    }
}

impl Nsec3Hasher for TableHasher {
    fn hash(&self, name: &DomainName, params: &Nsec3Params) -> HashedLabel {
        self.table.get(name).copied().unwrap_or_else(|| Sha1Nsec3.hash(name, params))
    }
}

pub fn nsec3_hash(name: &DomainName, params: &Nsec3Params) -> HashedLabel {
    Sha1Nsec3.hash(name, params)
}
