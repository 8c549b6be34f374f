//! Linearizability of the cache against a sequential map.
//!
//! Two writers run short operation sequences on the shared cache under the
//! deterministic scheduler. Each operation takes the key's lock, yields
//! between its steps, and releases. The history of invocations and returns is
//! then searched for a sequential order that respects real time and that a
//! plain map reproduces result for result.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::scheduler::{self, yield_now, Task};
use crate::name::DomainName;
use crate::record::{RData, RRSet, RecordType, SignedRRSet};
use crate::resolver::{ActivityId, Cache, CacheKey, CachedData, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Op {
    Get(u8),
    /// The resolver's pattern: look up, insert on a miss.
    PutIfAbsent(u8, u64),
    Put(u8, u64),
    Remove(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Ret {
    Value(Option<u64>),
    Inserted(bool),
    Done,
}

#[derive(Debug, Clone, Serialize)]
pub struct Call {
    pub thread: usize,
    pub op: Op,
    pub ret: Ret,
    pub invoked: usize,
    pub returned: usize,
}

/// The sequential specification.
pub fn apply(map: &mut BTreeMap<u8, u64>, op: Op) -> Ret {
    match op {
        Op::Get(k) => Ret::Value(map.get(&k).copied()),
        Op::PutIfAbsent(k, v) => Ret::Inserted(match map.entry(k) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(v);
                true
            }
        }),
        Op::Put(k, v) => {
            map.insert(k, v);
            Ret::Done
        }
        Op::Remove(k) => Ret::Value(map.remove(&k)),
    }
}

/// Searches for a legal sequential order of `calls` (per-thread program order kept).
pub fn is_linearizable(calls: &[Call]) -> bool {
    let threads = calls.iter().map(|c| c.thread + 1).max().unwrap_or(0);
    let per: Vec<Vec<&Call>> = (0..threads)
        .map(|t| {
            let mut v: Vec<&Call> = calls.iter().filter(|c| c.thread == t).collect();
            v.sort_by_key(|c| c.invoked);
            v
        })
        .collect();
    fn go(per: &[Vec<&Call>], pos: &mut Vec<usize>, map: &BTreeMap<u8, u64>) -> bool {
        if pos.iter().zip(per).all(|(p, v)| *p == v.len()) {
            return true;
        }
        for t in 0..per.len() {
            let Some(c) = per[t].get(pos[t]) else { continue };
            // Some pending call finished before this one started: it must go first.
            let blocked = (0..per.len())
                .filter(|&u| u != t)
                .any(|u| per[u].get(pos[u]).is_some_and(|d| d.returned < c.invoked));
            if blocked {
                continue;
            }
            let mut next = map.clone();
            if apply(&mut next, c.op) != c.ret {
                continue;
            }
            pos[t] += 1;
            if go(per, pos, &next) {
                return true;
            }
            pos[t] -= 1;
        }
        false
    }
    go(&per, &mut vec![0; threads], &BTreeMap::new())
}

fn key(k: u8) -> CacheKey {
    let owner = DomainName::root().child(format!("k{k}").as_bytes()).expect("short label");
    CacheKey { partition: DomainName::root(), owner, rtype: RecordType::A, view: View::Shared }
}

fn data(v: u64) -> CachedData {
    let rrset = RRSet::single(DomainName::root(), RData::A(v.to_string()));
    CachedData::Positive { rrset: SignedRRSet::unsigned(rrset), proof: Vec::new() }
}

fn value(d: &CachedData) -> u64 {
    match d {
        CachedData::Positive { rrset, .. } => match rrset.rrset.rdata().first() {
            Some(RData::A(s)) => s.parse().expect("written by this module"),
            _ => unreachable!("only A data is written"),
        },
        CachedData::Negative { .. } => unreachable!("only positive data is written"),
    }
}

/// How operations use the lock. `Split` drops it between lookup and write, which
/// is the bug the checker should catch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locking {
    Scoped,
    Split,
}

struct Harness<'a> {
    cache: &'a Cache,
    clock: &'a Cell<usize>,
    history: &'a RefCell<Vec<Call>>,
    locking: Locking,
}

impl Harness<'_> {
    fn tick(&self) -> usize {
        let t = self.clock.get();
        self.clock.set(t + 1);
        t
    }

    async fn lock(&self, k: &CacheKey, by: ActivityId) {
        yield_now().await;
        while !self.cache.try_acquire(k, by).expect("not reentrant") {
            yield_now().await;
        }
    }

    async fn unlock(&self, k: &CacheKey, by: ActivityId) {
        self.cache.release(k, by).expect("held");
        yield_now().await;
    }

    async fn call(&self, thread: usize, op: Op) {
        let by = ActivityId(thread);
        let invoked = self.tick();
        let k = match op {
            Op::Get(k) | Op::PutIfAbsent(k, _) | Op::Put(k, _) | Op::Remove(k) => key(k),
        };
        self.lock(&k, by).await;
        let ret = match op {
            Op::Get(_) => Ret::Value(self.cache.lookup(&k, by).expect("held").map(|e| value(&e.data))),
            Op::PutIfAbsent(_, v) => {
                let present = self.cache.lookup(&k, by).expect("held").is_some();
                if self.locking == Locking::Split {
                    self.unlock(&k, by).await;
                    self.lock(&k, by).await;
                } else {
                    yield_now().await;
                }
                if !present {
                    self.cache.insert(&k, by, data(v), DomainName::root(), false).expect("held");
                }
                Ret::Inserted(!present)
            }
            Op::Put(_, v) => {
                yield_now().await;
                self.cache.insert(&k, by, data(v), DomainName::root(), false).expect("held");
                Ret::Done
            }
            Op::Remove(_) => {
                yield_now().await;
                Ret::Value(self.cache.lookup(&k, by).expect("held").map(|e| value(&e.data)).inspect(|_| {
                    self.cache.expire(&k, by).expect("held");
                }))
            }
        };
        self.unlock(&k, by).await;
        let returned = self.tick();
        self.history.borrow_mut().push(Call { thread, op, ret, invoked, returned });
    }
}

pub const OPS_PER_WRITER: usize = 4;
pub const KEYS: u8 = 2;

fn random_op(rng: &mut ChaCha8Rng, thread: usize, i: usize) -> Op {
    let k = rng.gen_range(0..KEYS);
    let v = (thread * 100 + i) as u64;
    match rng.gen_range(0..4) {
        0 => Op::Get(k),
        1 => Op::PutIfAbsent(k, v),
        2 => Op::Put(k, v),
        _ => Op::Remove(k),
    }
}

/// One two-writer run; the seed picks the operations and the interleaving.
pub fn history(seed: u64, locking: Locking) -> Vec<Call> {
    let rng = RefCell::new(ChaCha8Rng::seed_from_u64(seed));
    let plans: Vec<Vec<Op>> =
        (0..2).map(|t| (0..OPS_PER_WRITER).map(|i| random_op(&mut rng.borrow_mut(), t, i)).collect()).collect();
    let cache = Cache::new();
    let clock = Cell::new(0);
    let log = RefCell::new(Vec::new());
    let h = Harness { cache: &cache, clock: &clock, history: &log, locking };
    let tasks: Vec<Task<'_>> = plans
        .iter()
        .enumerate()
        .map(|(t, ops)| {
            let h = &h;
            Box::pin(async move {
                for op in ops {
                    h.call(t, *op).await;
                }
            }) as Task<'_>
        })
        .collect();
    scheduler::run(tasks, &rng, |_| true, |_| {}, || false).expect("two writers cannot deadlock on one lock each");
    log.into_inner()
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearizabilityReport {
    pub runs: u64,
    pub violations: u64,
    pub first_violation: Option<u64>,
}

pub fn check(seeds: std::ops::Range<u64>, locking: Locking) -> LinearizabilityReport {
    let mut report = LinearizabilityReport { runs: 0, violations: 0, first_violation: None };
    for seed in seeds {
        report.runs += 1;
        if !is_linearizable(&history(seed, locking)) {
            report.violations += 1;
            report.first_violation.get_or_insert(seed);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(thread: usize, op: Op, ret: Ret, invoked: usize, returned: usize) -> Call {
        Call { thread, op, ret, invoked, returned }
    }

    #[test]
    fn overlapping_calls_may_take_either_order() {
        let h = [call(0, Op::Put(0, 1), Ret::Done, 0, 3), call(1, Op::Get(0), Ret::Value(None), 1, 2)];
        assert!(is_linearizable(&h));
    }

    #[test]
    fn real_time_order_is_respected() {
        let h = [call(0, Op::Put(0, 1), Ret::Done, 0, 1), call(1, Op::Get(0), Ret::Value(None), 2, 3)];
        assert!(!is_linearizable(&h));
    }

    #[test]
    fn scoped_locking_is_linearizable() {
        assert_eq!(check(0..300, Locking::Scoped).violations, 0);
    }

    #[test]
    fn split_locking_is_caught() {
        assert!(check(0..300, Locking::Split).violations > 0);
    }
}
