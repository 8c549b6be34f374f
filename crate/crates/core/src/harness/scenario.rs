//! Scenario files and the runner that turns one scenario and one seed into a trace.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use super::scheduler::{self, SchedulerError, Task};
use super::topology::{ChainSpec, Topology, TopologyError, ZoneConfig};
use super::trace::{Event, Role, Trace};
use super::walker::{walk, WalkOutcome};
use super::world::{ChannelMode, Expiry, World, WorldOptions};
use crate::adversary::AttackerScript;
use crate::crypto::{AlgorithmId, Nsec3Params};
use crate::name::DomainName;
use crate::record::{DenialFamily, Query, RecordType};
use crate::resolver::{ActivityId, CacheEntry, CacheKey, ResolutionError, Resolver, ResolverConfig, ValidatedResponse};
use crate::zone::{load_zone, ZoneParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Nsec,
    Nsec3,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpiryKind {
    #[default]
    Never,
    Nondeterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Holds,
    Falsified,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneEntry {
    /// Relative to the scenario file.
    pub file: PathBuf,
    pub chain: ChainKind,
    #[serde(default)]
    pub nsec3: Option<Nsec3Params>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<AlgorithmId>,
    #[serde(default)]
    pub malicious: bool,
    /// Mixed chains only. Missing: read from the denial records in the file.
    #[serde(default)]
    pub assignment: Option<BTreeMap<DomainName, DenialFamily>>,
}

fn default_algorithms() -> Vec<AlgorithmId> {
    vec![AlgorithmId::RSASHA256]
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkEntry {
    #[serde(default)]
    pub channel: ChannelMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityEntry {
    #[serde(default = "default_role")]
    pub role: Role,
    #[serde(default)]
    pub queries: Vec<String>,
    /// Issue this many queries drawn from `queries` instead of the list in order.
    #[serde(default)]
    pub random: Option<usize>,
    /// Index of an activity that must finish first.
    #[serde(default)]
    pub after: Option<usize>,
    /// Walk the NSEC chain of this zone.
    #[serde(default)]
    pub walk: Option<DomainName>,
    #[serde(default)]
    pub budget: Option<usize>,
}

fn default_role() -> Role {
    Role::Client
}

fn default_seeds() -> u64 {
    500
}

fn default_budget() -> usize {
    10_000
}

fn default_delta() -> usize {
    16
}

fn default_true() -> bool {
    true
}

fn default_percent() -> u8 {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_budget")]
    pub step_budget: usize,
    #[serde(default = "default_delta")]
    pub delta: usize,
    #[serde(default = "default_true")]
    pub cache: bool,
    #[serde(default)]
    pub expiry: ExpiryKind,
    #[serde(default = "default_percent")]
    pub expire_percent: u8,
    #[serde(rename = "zone")]
    pub zones: Vec<ZoneEntry>,
    #[serde(default)]
    pub resolver: ResolverConfig,
    #[serde(default)]
    pub network: NetworkEntry,
    #[serde(default)]
    pub attacker: AttackerScript,
    #[serde(rename = "activity", default)]
    pub activities: Vec<ActivityEntry>,
    /// Expected verdict per property id.
    #[serde(default)]
    pub expect: BTreeMap<String, Expectation>,
}

impl ScenarioFile {
    /// A file with every optional field at its default.
    pub fn named(name: &str) -> ScenarioFile {
        ScenarioFile {
            name: name.into(),
            seeds: default_seeds(),
            step_budget: default_budget(),
            delta: default_delta(),
            cache: true,
            expiry: ExpiryKind::Never,
            expire_percent: default_percent(),
            zones: Vec::new(),
            resolver: ResolverConfig::default(),
            network: NetworkEntry::default(),
            attacker: AttackerScript::default(),
            activities: Vec::new(),
            expect: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Zone { path: PathBuf, source: ZoneParseError },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("bad query {0:?}: expected NAME TYPE [+cd]")]
    Query(String),
    #[error("{0}")]
    Invalid(String),
}

/// One question an activity asks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub qname: DomainName,
    pub qtype: RecordType,
    pub cd: bool,
}

impl std::str::FromStr for QuerySpec {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ScenarioError::Query(s.into());
        let parts: Vec<&str> = s.split_whitespace().collect();
        let (name, ty, flags) = match parts.as_slice() {
            [n, t, rest @ ..] => (n, t, rest),
            _ => return Err(bad()),
        };
        let cd = match flags {
            [] => false,
            ["+cd"] => true,
            _ => return Err(bad()),
        };
        Ok(QuerySpec { qname: name.parse().map_err(|_| bad())?, qtype: ty.parse().map_err(|_| bad())?, cd })
    }
}

#[derive(Debug, Clone)]
pub enum ActivityPlan {
    Client { role: Role, queries: Vec<QuerySpec>, random: Option<usize>, after: Option<usize> },
    Walk { apex: DomainName, budget: usize, after: Option<usize> },
}

/// A loaded, validated scenario. Cheap to run many times.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub topology: Arc<Topology>,
    pub plans: Vec<ActivityPlan>,
    expect: BTreeMap<u8, Expectation>,
}

/// Everything one run produced.
#[derive(Debug)]
pub struct RunResult {
    pub seed: u64,
    pub trace: Trace,
    pub error: Option<SchedulerError>,
    pub cache: Vec<(CacheKey, CacheEntry)>,
    pub locks_held: usize,
    pub pending: usize,
    pub results: Vec<ClientOutcome>,
    pub walks: Vec<WalkOutcome>,
}

#[derive(Debug, Clone)]
pub struct ClientOutcome {
    pub activity: ActivityId,
    pub query: Query,
    pub result: Result<ValidatedResponse, ResolutionError>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        Scenario::parse(&text, path)
    }

    /// `path` names the file for diagnostics and anchors relative zone paths.
    pub fn parse(text: &str, path: &Path) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Schema { path: path.into(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut configs = Vec::new();
        for z in &file.zones {
            let zpath = base.join(&z.file);
            let text = fs::read_to_string(&zpath).map_err(|source| ScenarioError::Io { path: zpath.clone(), source })?;
            let zone = load_zone(&text).map_err(|source| ScenarioError::Zone { path: zpath.clone(), source })?;
            let params = || z.nsec3.clone().unwrap_or_default();
            let chain = match z.chain {
                ChainKind::Nsec => ChainSpec::Nsec,
                ChainKind::Nsec3 => ChainSpec::Nsec3(params()),
                ChainKind::Mixed => ChainSpec::Mixed { assignment: z.assignment.clone(), params: params() },
            };
            configs.push(ZoneConfig { zone, chain, algorithms: z.algorithms.clone(), malicious: z.malicious });
        }
        let topology = Arc::new(Topology::build(configs)?);
        let n = file.activities.len();
        let mut plans = Vec::new();
        for (i, a) in file.activities.iter().enumerate() {
            if let Some(dep) = a.after {
                if dep >= i {
                    return Err(ScenarioError::Invalid(format!("activity {i} waits for {dep}, which does not come before it")));
                }
            }
            let plan = match &a.walk {
                Some(apex) => {
                    if !a.queries.is_empty() {
                        return Err(ScenarioError::Invalid(format!("activity {i} both walks and queries")));
                    }
                    ActivityPlan::Walk { apex: apex.clone(), budget: a.budget.unwrap_or(64), after: a.after }
                }
                None => {
                    let queries = a.queries.iter().map(|q| q.parse()).collect::<Result<Vec<QuerySpec>, _>>()?;
                    if queries.is_empty() {
                        return Err(ScenarioError::Invalid(format!("activity {i} has nothing to do")));
                    }
                    ActivityPlan::Client { role: a.role, queries, random: a.random, after: a.after }
                }
            };
            plans.push(plan);
        }
        if n == 0 {
            return Err(ScenarioError::Invalid("no activities".into()));
        }
        let mut expect = BTreeMap::new();
        for (k, v) in &file.expect {
            match k.parse::<u8>() {
                Ok(id) if (1..=19).contains(&id) => {
                    expect.insert(id, *v);
                }
                _ => return Err(ScenarioError::Invalid(format!("expect names {k:?}, not a property id 1-19"))),
            }
        }
        Ok(Scenario { file, topology, plans, expect })
    }

    /// A scenario over an already built topology, with default settings.
    pub fn from_topology(name: &str, topology: Arc<Topology>, plans: Vec<ActivityPlan>) -> Scenario {
        Scenario { file: ScenarioFile::named(name), topology, plans, expect: BTreeMap::new() }
    }

    pub fn with_plans(&self, plans: Vec<ActivityPlan>) -> Scenario {
        Scenario { plans, ..self.clone() }
    }

    /// Apex of the first walking activity, if any.
    pub fn walk_target(&self) -> Option<&DomainName> {
        self.plans.iter().find_map(|p| match p {
            ActivityPlan::Walk { apex, .. } => Some(apex),
            ActivityPlan::Client { .. } => None,
        })
    }

    /// Declared verdicts by property id.
    pub fn expectations(&self) -> &BTreeMap<u8, Expectation> {
        &self.expect
    }

    pub fn options(&self) -> WorldOptions {
        WorldOptions {
            expiry: match self.file.expiry {
                ExpiryKind::Never => Expiry::Never,
                ExpiryKind::Nondeterministic => Expiry::Nondeterministic { percent: self.file.expire_percent },
            },
            cache_enabled: self.file.cache,
            channel: self.file.network.channel,
            step_budget: self.file.step_budget,
            delta: self.file.delta,
        }
    }

    pub fn with_resolver(&self, config: ResolverConfig) -> Scenario {
        let mut s = self.clone();
        s.file.resolver = config;
        s
    }

    pub fn run(&self, seed: u64) -> RunResult {
        let world = World::new(
            Arc::clone(&self.topology),
            self.options(),
            self.file.attacker.clone(),
            ChaCha8Rng::seed_from_u64(seed),
        );
        let resolver = Resolver::new(self.file.resolver.clone(), self.topology.anchor().clone());
        let results = RefCell::new(Vec::new());
        let walks = RefCell::new(Vec::new());
        let plans: Vec<ActivityPlan> = self
            .plans
            .iter()
            .map(|p| match p {
                ActivityPlan::Client { role, queries, random: Some(k), after } => {
                    let mut rng = world.rng().borrow_mut();
                    let picked = (0..*k).map(|_| queries.choose(&mut *rng).expect("non-empty").clone()).collect();
                    ActivityPlan::Client { role: *role, queries: picked, random: None, after: *after }
                }
                other => other.clone(),
            })
            .collect();
        let tasks: Vec<Task<'_>> = plans
            .iter()
            .enumerate()
            .map(|(i, plan)| {
                let (world, resolver, results, walks) = (&world, &resolver, &results, &walks);
                Box::pin(async move {
                    let act = ActivityId(i);
                    match plan {
                        ActivityPlan::Client { role, queries, after, .. } => {
                            if let Some(dep) = after {
                                world.wait_for(act, ActivityId(*dep)).await;
                            }
                            for spec in queries {
                                let out = client_query(world, resolver, act, *role, spec).await;
                                results.borrow_mut().push(out);
                            }
                        }
                        ActivityPlan::Walk { apex, budget, after } => {
                            if let Some(dep) = after {
                                world.wait_for(act, ActivityId(*dep)).await;
                            }
                            let w = walk(world, resolver, act, apex, *budget).await;
                            walks.borrow_mut().push(w);
                        }
                    }
                }) as Task<'_>
            })
            .collect();
        let outcome = scheduler::run(
            tasks,
            world.rng(),
            |i| world.is_ready(ActivityId(i)),
            |i| world.mark_done(ActivityId(i)),
            || world.over_budget(),
        );
        let error = outcome.err();
        if let Some(e) = &error {
            world.record(Event::Aborted { reason: e.to_string() });
        }
        RunResult {
            seed,
            trace: world.take_trace(),
            error,
            cache: world.cache.entries(),
            locks_held: world.cache.locks_held(),
            pending: world.cache.pending_mutations(),
            results: results.into_inner(),
            walks: walks.into_inner(),
        }
    }
}

/// One client question through the resolver, with its trace bracket.
pub async fn client_query(
    world: &World,
    resolver: &Resolver,
    act: ActivityId,
    role: Role,
    spec: &QuerySpec,
) -> ClientOutcome {
    let q = Query::new(spec.qname.clone(), spec.qtype, world.fresh_qid()).with_cd(spec.cd);
    world.client_query_event(act, role, &q);
    if role == Role::Attacker {
        world.attacker_sees_query(&q);
    }
    let result = resolver.resolve(world, act, &q).await;
    let ev = match &result {
        Ok(v) => Event::ClientResult {
            activity: act,
            qid: q.qid,
            rcode: v.response.rcode,
            security: Some(v.security),
            ede: v.ede.clone(),
            answer: v.response.answer.clone(),
            authority: v.response.authority.clone(),
            error: None,
        },
        Err(e) => Event::ClientResult {
            activity: act,
            qid: q.qid,
            rcode: crate::record::Rcode::ServFail,
            security: None,
            ede: None,
            answer: Vec::new(),
            authority: Vec::new(),
            error: Some(e.to_string()),
        },
    };
    world.record(ev);
    if role == Role::Attacker {
        if let Ok(v) = &result {
            world.attacker_sees_response(q.qid, &v.response);
        }
    }
    ClientOutcome { activity: act, query: q, result }
}
