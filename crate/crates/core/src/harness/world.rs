//! Shared simulation state: topology, cache, network, adversary and the trace.
//!
//! Every operation an activity performs on the world is an `async fn` that
//! yields to the scheduler around its effect, so the scheduler decides the
//! interleaving of lock, cache and channel steps.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::scheduler::yield_now;
use super::topology::Topology;
use super::trace::{Event, Role, ScopeId, Trace};
use crate::adversary::{Adversary, AdversaryAction, AttackerScript};
use crate::name::DomainName;
use crate::record::{Query, QueryId, Response};
use crate::resolver::{ActivityId, Cache, CacheEntry, CacheKey, CachedData, ContractViolation, EntryStatus};
use crate::zone::answer_query;

/// How a lookup decides whether a present entry is still valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expiry {
    #[default]
    Never,
    /// Each hit is expired with this probability, drawn from the scheduler RNG.
    Nondeterministic { percent: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Honest,
    /// Resolver-to-server traffic passes through the adversary.
    #[default]
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldOptions {
    pub expiry: Expiry,
    pub cache_enabled: bool,
    pub channel: ChannelMode,
    pub step_budget: usize,
    /// Cleanup bound: events a lock holder may emit between acquire and release.
    pub delta: usize,
}

impl Default for WorldOptions {
    fn default() -> Self {
        WorldOptions {
            expiry: Expiry::Never,
            cache_enabled: true,
            channel: ChannelMode::Adversarial,
            step_budget: 10_000,
            delta: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Wait {
    Lock(CacheKey),
    Activity(ActivityId),
}

pub struct World {
    pub topology: Arc<Topology>,
    pub cache: Arc<Cache>,
    pub options: WorldOptions,
    trace: RefCell<Vec<Event>>,
    rng: RefCell<ChaCha8Rng>,
    adversary: RefCell<Adversary>,
    next_qid: Cell<u64>,
    next_scope: Cell<u64>,
    waiting: RefCell<BTreeMap<ActivityId, Wait>>,
    done: RefCell<BTreeSet<ActivityId>>,
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World").field("options", &self.options).field("events", &self.trace.borrow().len()).finish()
    }
}

impl World {
    pub fn new(topology: Arc<Topology>, options: WorldOptions, script: AttackerScript, rng: ChaCha8Rng) -> Self {
        let secret = topology.all_secret_names();
        let w = World {
            topology,
            cache: Arc::new(Cache::new()),
            options,
            trace: RefCell::new(Vec::new()),
            rng: RefCell::new(rng),
            adversary: RefCell::new(Adversary::new(script, secret)),
            next_qid: Cell::new(0),
            next_scope: Cell::new(0),
            waiting: RefCell::new(BTreeMap::new()),
            done: RefCell::new(BTreeSet::new()),
        };
        w.record_setup();
        w
    }

    /// Key material and the signing log come first so later events can refer back to them.
    fn record_setup(&self) {
        for z in self.topology.servers() {
            for k in z.dnskeys() {
                self.record(Event::ZoneKey {
                    zone: z.apex().clone(),
                    key: k.key.key,
                    role: if k.is_ksk() { crate::crypto::KeyRole::Ksk } else { crate::crypto::KeyRole::Zsk },
                    algorithm: k.algorithm(),
                });
            }
            for s in z.sign_log() {
                self.record(Event::Sign { zone: z.apex().clone(), key: s.key, digest: s.digest });
            }
        }
    }

    pub fn rng(&self) -> &RefCell<ChaCha8Rng> {
        &self.rng
    }

    pub fn record(&self, e: Event) {
        self.trace.borrow_mut().push(e);
    }

    pub fn events_len(&self) -> usize {
        self.trace.borrow().len()
    }

    pub fn over_budget(&self) -> bool {
        self.events_len() > self.options.step_budget
    }

    pub fn take_trace(&self) -> Trace {
        Trace { events: std::mem::take(&mut *self.trace.borrow_mut()) }
    }

    pub fn fresh_qid(&self) -> QueryId {
        let q = self.next_qid.get() + 1;
        self.next_qid.set(q);
        QueryId(q)
    }

    fn fresh_scope(&self) -> ScopeId {
        let s = self.next_scope.get() + 1;
        self.next_scope.set(s);
        ScopeId(s)
    }

    pub fn adversary_script(&self) -> AttackerScript {
        self.adversary.borrow().script().clone()
    }

    pub fn adversary_knows(&self, d: &DomainName) -> bool {
        self.adversary.borrow().knowledge().knows(d)
    }

    /// Scheduler readiness: not blocked on a held lock or an unfinished activity.
    pub fn is_ready(&self, act: ActivityId) -> bool {
        match self.waiting.borrow().get(&act) {
            None => true,
            Some(Wait::Lock(k)) => self.cache.holder(k).is_none(),
            Some(Wait::Activity(dep)) => self.done.borrow().contains(dep),
        }
    }

    pub fn mark_done(&self, act: ActivityId) {
        self.done.borrow_mut().insert(act);
        self.record(Event::ActivityDone { activity: act });
    }

    /// Suspends `act` until `dep` has finished.
    pub async fn wait_for(&self, act: ActivityId, dep: ActivityId) {
        if !self.done.borrow().contains(&dep) {
            self.waiting.borrow_mut().insert(act, Wait::Activity(dep));
            yield_now().await;
            self.waiting.borrow_mut().remove(&act);
        }
    }

    pub async fn lock(&self, act: ActivityId, key: &CacheKey) -> Result<ScopeId, ContractViolation> {
        yield_now().await;
        while !self.cache.try_acquire(key, act)? {
            self.record(Event::LockWait { activity: act, key: key.clone() });
            self.waiting.borrow_mut().insert(act, Wait::Lock(key.clone()));
            yield_now().await;
            self.waiting.borrow_mut().remove(&act);
        }
        let scope = self.fresh_scope();
        self.record(Event::LockAcquire { activity: act, key: key.clone(), scope });
        Ok(scope)
    }

    pub async fn release(&self, act: ActivityId, key: &CacheKey, scope: ScopeId) -> Result<(), ContractViolation> {
        self.cache.release(key, act)?;
        self.record(Event::LockRelease { activity: act, key: key.clone(), scope });
        yield_now().await;
        Ok(())
    }

    /// Lookup with the nondeterministic validity check. An expired entry is
    /// removed and reported as a miss.
    pub fn lookup(&self, act: ActivityId, key: &CacheKey, scope: ScopeId) -> Result<Option<CacheEntry>, ContractViolation> {
        let found = self.cache.lookup(key, act)?;
        self.record(Event::CacheLookup {
            activity: act,
            key: key.clone(),
            scope,
            found: found.as_ref().map(|e| e.version),
        });
        let Some(e) = found else {
            return Ok(None);
        };
        let status = match self.options.expiry {
            Expiry::Never => EntryStatus::Active,
            Expiry::Nondeterministic { percent } => {
                if self.rng.borrow_mut().gen_range(0..100u8) < percent {
                    EntryStatus::Expired
                } else {
                    EntryStatus::Active
                }
            }
        };
        self.record(Event::CacheStatus { activity: act, key: key.clone(), scope, version: e.version, status });
        if status == EntryStatus::Expired {
            self.cache.expire(key, act)?;
            self.record(Event::CacheExpire { activity: act, key: key.clone(), scope, version: e.version });
            return Ok(None);
        }
        self.record(Event::CacheRead {
            activity: act,
            key: key.clone(),
            scope,
            version: e.version,
            origin: e.origin.clone(),
            validated: e.validated,
            data: e.data.clone(),
        });
        Ok(Some(e))
    }

    pub fn insert(
        &self,
        act: ActivityId,
        key: &CacheKey,
        scope: ScopeId,
        data: CachedData,
        validated: bool,
    ) -> Result<u64, ContractViolation> {
        let origin = key.partition.clone();
        let version = self.cache.insert(key, act, data.clone(), origin.clone(), validated)?;
        self.record(Event::CacheInsert { activity: act, key: key.clone(), scope, version, origin, validated, data });
        Ok(version)
    }

    fn observe(&self, grown: Vec<DomainName>) {
        if !grown.is_empty() {
            self.record(Event::KnowledgeGrow { names: grown });
        }
    }

    /// A client-side message seen by the attacker because the attacker sent it.
    pub fn attacker_sees_query(&self, q: &Query) {
        let grown = self.adversary.borrow_mut().observe_query(q);
        self.observe(grown);
    }

    pub fn attacker_sees_response(&self, qid: QueryId, r: &Response) {
        let grown = self.adversary.borrow_mut().observe_response(qid, r);
        self.observe(grown);
    }

    /// One query to the server for `server` and the response the resolver ends up with.
    pub async fn exchange(&self, act: ActivityId, server: &DomainName, q: &Query, scope: Option<ScopeId>) -> Response {
        yield_now().await;
        self.record(Event::ResolverQuery {
            activity: act,
            qid: q.qid,
            server: server.clone(),
            qname: q.qname.clone(),
            qtype: q.qtype,
            cd: q.cd,
            scope,
        });
        let zone = self.topology.server(server).expect("resolver only contacts known servers");
        let (delivered, tampered) = match self.options.channel {
            ChannelMode::Honest => {
                let r = answer_query(zone, q);
                self.record_response(server, q.qid, &r);
                (r, false)
            }
            ChannelMode::Adversarial => self.through_adversary(server, zone, q),
        };
        self.record(Event::Delivered {
            activity: act,
            qid: q.qid,
            server: server.clone(),
            rcode: delivered.rcode,
            tampered,
        });
        yield_now().await;
        delivered
    }

    fn record_response(&self, server: &DomainName, qid: QueryId, r: &Response) {
        self.record(Event::ServerResponse {
            server: server.clone(),
            qid,
            rcode: r.rcode,
            records: r.all_records().cloned().collect(),
        });
    }

    fn through_adversary(&self, server: &DomainName, zone: &crate::zone::SignedZone, q: &Query) -> (Response, bool) {
        let mut adv = self.adversary.borrow_mut();
        let grown = adv.observe_query(q);
        self.observe(grown);
        if let Some((r, action)) = adv.on_query(server, q) {
            return match adv.inject(&r) {
                Ok(()) => {
                    self.record(Event::Adversary { qid: q.qid, action });
                    (r, true)
                }
                Err(e) => {
                    let reason = e.to_string();
                    self.record(Event::Adversary {
                        qid: q.qid,
                        action: AdversaryAction::Rejected { server: server.clone(), reason },
                    });
                    drop(adv);
                    self.honest_through(server, zone, q)
                }
            };
        }
        drop(adv);
        self.honest_through(server, zone, q)
    }

    fn honest_through(&self, server: &DomainName, zone: &crate::zone::SignedZone, q: &Query) -> (Response, bool) {
        let honest = answer_query(zone, q);
        self.record_response(server, q.qid, &honest);
        let mut adv = self.adversary.borrow_mut();
        let grown = adv.observe_response(q.qid, &honest);
        self.observe(grown);
        let tampered = adv.on_response(server, q, &honest, &mut self.rng.borrow_mut());
        match tampered {
            None => (honest, false),
            Some((r, action)) => match adv.inject(&r) {
                Ok(()) => {
                    self.record(Event::Adversary { qid: q.qid, action });
                    (r, true)
                }
                Err(e) => {
                    self.record(Event::Adversary {
                        qid: q.qid,
                        action: AdversaryAction::Rejected { server: server.clone(), reason: e.to_string() },
                    });
                    (honest, false)
                }
            },
        }
    }

    pub fn client_query_event(&self, act: ActivityId, role: Role, q: &Query) {
        self.record(Event::ClientQuery {
            activity: act,
            role,
            qid: q.qid,
            qname: q.qname.clone(),
            qtype: q.qtype,
            cd: q.cd,
        });
    }
}
