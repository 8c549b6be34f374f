//! The resolver cache: one entry per key, a lock per key, and a version counter
//! per key that survives removal.
//!
//! Every data operation takes the caller's [`ActivityId`] and fails with a
//! [`ContractViolation`] unless that activity holds the key's lock.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Condvar, Mutex, MutexGuard};

use serde::Serialize;
use thiserror::Error;

use crate::name::DomainName;
use crate::record::{DenialFamily, Rcode, RecordType, SignedRRSet};

/// Identity of a concurrent activity (a client resolution, a walker, a test writer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct ActivityId(pub usize);

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Which slice of the cache a lookup sees. `Shared` is the single unified
/// cache; `Checked` and `Unchecked` split it by validation state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum View {
    Shared,
    Checked,
    Unchecked,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CacheKey {
    /// The server whose answers this partition holds.
    pub partition: DomainName,
    pub owner: DomainName,
    pub rtype: RecordType,
    pub view: View,
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} {}@{:?}", self.partition, self.owner, self.rtype, self.view)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CachedData {
    /// `proof` holds the denial records that came with a wildcard expansion.
    Positive { rrset: SignedRRSet, proof: Vec<SignedRRSet> },
    Negative { rcode: Rcode, proof: Vec<SignedRRSet> },
}

impl CachedData {
    /// Families of the denial records held by a negative entry.
    pub fn denial_families(&self) -> Vec<DenialFamily> {
        match self {
            CachedData::Positive { .. } => Vec::new(),
            CachedData::Negative { proof, .. } => {
                let mut f: Vec<_> = proof.iter().filter_map(SignedRRSet::family).collect();
                f.sort();
                f.dedup();
                f
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EntryStatus {
    Active,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CacheEntry {
    pub data: CachedData,
    pub origin: DomainName,
    pub validated: bool,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum ContractViolation {
    #[error("{by} used {key} without holding its lock")]
    LockNotHeld { key: CacheKey, by: ActivityId },
    #[error("{by} released {key}, which it does not hold")]
    DoubleRelease { key: CacheKey, by: ActivityId },
    #[error("{by} tried to re-acquire {key}")]
    Reentrant { key: CacheKey, by: ActivityId },
    #[error("entry from {origin} cannot live in partition {}", key.partition)]
    WrongPartition { key: CacheKey, origin: DomainName },
}

#[derive(Debug, Default)]
struct State {
    entries: BTreeMap<CacheKey, CacheEntry>,
    versions: BTreeMap<CacheKey, u64>,
    locks: BTreeMap<CacheKey, ActivityId>,
}

/// Thread-safe; the simulator drives it from one thread but nothing depends on that.
#[derive(Debug, Default)]
pub struct Cache {
    state: Mutex<State>,
    freed: Condvar,
}

impl Cache {
    pub fn new() -> Self {
        Cache::default()
    }

    fn state(&self) -> MutexGuard<'_, State> {
        self.state.lock().expect("cache mutex poisoned")
    }

    fn check_holder(s: &State, key: &CacheKey, by: ActivityId) -> Result<(), ContractViolation> {
        match s.locks.get(key) {
            Some(h) if *h == by => Ok(()),
            _ => Err(ContractViolation::LockNotHeld { key: key.clone(), by }),
        }
    }

    /// Takes the lock if it is free. `Ok(false)` means another activity holds it.
    pub fn try_acquire(&self, key: &CacheKey, by: ActivityId) -> Result<bool, ContractViolation> {
        let mut s = self.state();
        match s.locks.get(key) {
            Some(h) if *h == by => Err(ContractViolation::Reentrant { key: key.clone(), by }),
            Some(_) => Ok(false),
            None => {
                s.locks.insert(key.clone(), by);
                Ok(true)
            }
        }
    }

    /// Blocks the calling thread until the lock is free.
    pub fn acquire_blocking(&self, key: &CacheKey, by: ActivityId) -> Result<(), ContractViolation> {
        let mut s = self.state();
        loop {
            match s.locks.get(key) {
                Some(h) if *h == by => return Err(ContractViolation::Reentrant { key: key.clone(), by }),
                Some(_) => s = self.freed.wait(s).expect("cache mutex poisoned"),
                None => {
                    s.locks.insert(key.clone(), by);
                    return Ok(());
                }
            }
        }
    }

    pub fn release(&self, key: &CacheKey, by: ActivityId) -> Result<(), ContractViolation> {
        let mut s = self.state();
        match s.locks.get(key) {
            Some(h) if *h == by => {
                s.locks.remove(key);
                drop(s);
                self.freed.notify_all();
                Ok(())
            }
            _ => Err(ContractViolation::DoubleRelease { key: key.clone(), by }),
        }
    }

    pub fn holder(&self, key: &CacheKey) -> Option<ActivityId> {
        self.state().locks.get(key).copied()
    }

    pub fn locks_held(&self) -> usize {
        self.state().locks.len()
    }

    pub fn lookup(&self, key: &CacheKey, by: ActivityId) -> Result<Option<CacheEntry>, ContractViolation> {
        let s = self.state();
        Self::check_holder(&s, key, by)?;
        Ok(s.entries.get(key).cloned())
    }

    /// Replaces whatever is at `key` and returns the new version.
    pub fn insert(
        &self,
        key: &CacheKey,
        by: ActivityId,
        data: CachedData,
        origin: DomainName,
        validated: bool,
    ) -> Result<u64, ContractViolation> {
        let mut s = self.state();
        Self::check_holder(&s, key, by)?;
        if origin != key.partition {
            return Err(ContractViolation::WrongPartition { key: key.clone(), origin });
        }
        let v = s.versions.entry(key.clone()).or_insert(0);
        *v += 1;
        let version = *v;
        s.entries.insert(key.clone(), CacheEntry { data, origin, validated, version });
        Ok(version)
    }

    /// Removes the entry. Returns the version that was removed, if any.
    pub fn expire(&self, key: &CacheKey, by: ActivityId) -> Result<Option<u64>, ContractViolation> {
        let mut s = self.state();
        Self::check_holder(&s, key, by)?;
        Ok(s.entries.remove(key).map(|e| e.version))
    }

    /// Snapshot of every entry, in key order.
    pub fn entries(&self) -> Vec<(CacheKey, CacheEntry)> {
        self.state().entries.iter().map(|(k, e)| (k.clone(), e.clone())).collect()
    }

    /// Writes are applied in place under the lock, so nothing is ever pending.
    pub fn pending_mutations(&self) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{RData, RRSet};

    fn key() -> CacheKey {
        CacheKey {
            partition: "example".parse().unwrap(),
            owner: "a.example".parse().unwrap(),
            rtype: RecordType::A,
            view: View::Shared,
        }
    }

    fn data(addr: &str) -> CachedData {
        CachedData::Positive {
            rrset: SignedRRSet::unsigned(RRSet::single("a.example".parse().unwrap(), RData::A(addr.into()))),
            proof: Vec::new(),
        }
    }

    #[test]
    fn insert_then_lookup_in_one_scope() {
        let c = Cache::new();
        let t = ActivityId(0);
        assert!(c.try_acquire(&key(), t).unwrap());
        let v = c.insert(&key(), t, data("1"), "example".parse().unwrap(), true).unwrap();
        assert_eq!(v, 1);
        assert_eq!(c.lookup(&key(), t).unwrap().unwrap().version, 1);
        c.release(&key(), t).unwrap();
        assert_eq!(c.locks_held(), 0);
    }

    #[test]
    fn version_survives_expiry() {
        let c = Cache::new();
        let t = ActivityId(0);
        c.try_acquire(&key(), t).unwrap();
        c.insert(&key(), t, data("1"), "example".parse().unwrap(), true).unwrap();
        assert_eq!(c.expire(&key(), t).unwrap(), Some(1));
        assert_eq!(c.lookup(&key(), t).unwrap(), None);
        assert_eq!(c.insert(&key(), t, data("2"), "example".parse().unwrap(), true).unwrap(), 2);
    }

    #[test]
    fn contract_is_enforced() {
        let c = Cache::new();
        let (t0, t1) = (ActivityId(0), ActivityId(1));
        assert!(matches!(c.lookup(&key(), t0), Err(ContractViolation::LockNotHeld { .. })));
        assert!(c.try_acquire(&key(), t0).unwrap());
        assert!(!c.try_acquire(&key(), t1).unwrap());
        assert!(matches!(c.try_acquire(&key(), t0), Err(ContractViolation::Reentrant { .. })));
        assert!(matches!(
            c.insert(&key(), t0, data("1"), "other".parse().unwrap(), true),
            Err(ContractViolation::WrongPartition { .. })
        ));
        c.release(&key(), t0).unwrap();
        assert!(matches!(c.release(&key(), t0), Err(ContractViolation::DoubleRelease { .. })));
    }

    #[test]
    fn distinct_keys_lock_independently() {
        let c = Cache::new();
        let mut k2 = key();
        k2.rtype = RecordType::MX;
        assert!(c.try_acquire(&key(), ActivityId(0)).unwrap());
        assert!(c.try_acquire(&k2, ActivityId(1)).unwrap());
        assert_eq!(c.locks_held(), 2);
    }

    #[test]
    fn blocking_acquire_waits_for_release() {
        use std::sync::Arc;
        let c = Arc::new(Cache::new());
        c.acquire_blocking(&key(), ActivityId(0)).unwrap();
        let c2 = Arc::clone(&c);
        let h = std::thread::spawn(move || {
            c2.acquire_blocking(&key(), ActivityId(1)).unwrap();
            c2.holder(&key())
        });
        std::thread::sleep(std::time::Duration::from_millis(20));
        assert_eq!(c.holder(&key()), Some(ActivityId(0)));
        c.release(&key(), ActivityId(0)).unwrap();
        assert_eq!(h.join().unwrap(), Some(ActivityId(1)));
    }
}
