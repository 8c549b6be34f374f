//! Trace events. One global order; every property is a predicate over it.

use std::io::{self, Write};

use serde::Serialize;

use crate::adversary::AdversaryAction;
use crate::crypto::{AlgorithmId, Digest, KeyId, KeyRole};
use crate::name::DomainName;
use crate::record::{DnskeyData, QueryId, RRSet, Rcode, RecordType, ResourceRecord, RrsigData};
use crate::resolver::{ActivityId, CacheKey, CachedData, EntryStatus, SecurityState, ZoneKeys};

/// Identifies one acquire..release interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct ScopeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Client,
    Attacker,
}

/// An RRSet the resolver accepted, with the signature and key that vouched for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AcceptedRRSet {
    pub zone: DomainName,
    pub rrset: RRSet,
    pub sig: Option<RrsigData>,
    pub key: Option<DnskeyData>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AcceptedDenial {
    pub zone: DomainName,
    pub rcode: Rcode,
    pub records: Vec<AcceptedRRSet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    ZoneKey {
        zone: DomainName,
        key: KeyId,
        role: KeyRole,
        algorithm: AlgorithmId,
    },
    Sign {
        zone: DomainName,
        key: KeyId,
        digest: Digest,
    },
    ClientQuery {
        activity: ActivityId,
        role: Role,
        qid: QueryId,
        qname: DomainName,
        qtype: RecordType,
        cd: bool,
    },
    ResolverQuery {
        activity: ActivityId,
        qid: QueryId,
        server: DomainName,
        qname: DomainName,
        qtype: RecordType,
        cd: bool,
        scope: Option<ScopeId>,
    },
    ServerResponse {
        server: DomainName,
        qid: QueryId,
        rcode: Rcode,
        records: Vec<ResourceRecord>,
    },
    Adversary {
        qid: QueryId,
        action: AdversaryAction,
    },
    KnowledgeGrow {
        names: Vec<DomainName>,
    },
    Delivered {
        activity: ActivityId,
        qid: QueryId,
        server: DomainName,
        rcode: Rcode,
        tampered: bool,
    },
    LockWait {
        activity: ActivityId,
        key: CacheKey,
    },
    LockAcquire {
        activity: ActivityId,
        key: CacheKey,
        scope: ScopeId,
    },
    LockRelease {
        activity: ActivityId,
        key: CacheKey,
        scope: ScopeId,
    },
    CacheLookup {
        activity: ActivityId,
        key: CacheKey,
        scope: ScopeId,
        found: Option<u64>,
    },
    CacheStatus {
        activity: ActivityId,
        key: CacheKey,
        scope: ScopeId,
        version: u64,
        status: EntryStatus,
    },
    CacheRead {
        activity: ActivityId,
        key: CacheKey,
        scope: ScopeId,
        version: u64,
        origin: DomainName,
        validated: bool,
        data: CachedData,
    },
    CacheExpire {
        activity: ActivityId,
        key: CacheKey,
        scope: ScopeId,
        version: u64,
    },
    CacheInsert {
        activity: ActivityId,
        key: CacheKey,
        scope: ScopeId,
        version: u64,
        origin: DomainName,
        validated: bool,
        data: CachedData,
    },
    Accept {
        activity: ActivityId,
        qid: QueryId,
        qname: DomainName,
        qtype: RecordType,
        security: SecurityState,
        from_cache: bool,
        rrsets: Vec<AcceptedRRSet>,
        denial: Option<AcceptedDenial>,
        chain: Vec<ZoneKeys>,
    },
    ClientResult {
        activity: ActivityId,
        qid: QueryId,
        rcode: Rcode,
        security: Option<SecurityState>,
        ede: Option<String>,
        answer: Vec<ResourceRecord>,
        authority: Vec<ResourceRecord>,
        error: Option<String>,
    },
    ActivityDone {
        activity: ActivityId,
    },
    Aborted {
        reason: String,
    },
}

impl Event {
    /// The activity that produced the event, for events that belong to one.
    pub fn activity(&self) -> Option<ActivityId> {
        use Event::*;
        match self {
            ClientQuery { activity, .. }
            | ResolverQuery { activity, .. }
            | Delivered { activity, .. }
            | LockWait { activity, .. }
            | LockAcquire { activity, .. }
            | LockRelease { activity, .. }
            | CacheLookup { activity, .. }
            | CacheStatus { activity, .. }
            | CacheRead { activity, .. }
            | CacheExpire { activity, .. }
            | CacheInsert { activity, .. }
            | Accept { activity, .. }
            | ClientResult { activity, .. }
            | ActivityDone { activity } => Some(*activity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Trace {
    pub events: Vec<Event>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    /// One JSON object per line, fields in declaration order.
    pub fn write_json_lines(&self, mut out: impl Write) -> io::Result<()> {
        for (i, e) in self.events.iter().enumerate() {
            let line = serde_json::to_string(&(i, e)).map_err(io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_json_lines(&self) -> String {
        let mut buf = Vec::new();
        self.write_json_lines(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}
