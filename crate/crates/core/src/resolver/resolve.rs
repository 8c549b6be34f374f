//! Iterative resolution from the trust anchor down, with validation at every
//! level and the cache consulted under per-key locks.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use super::validate::{check_link, ds_rdata, proves_no_exact_match, validate_denial, verify_rrset};
use super::{
    ActivityId, CacheKey, CachedData, DenialVerdict, DowngradePolicy, LinkFailure, MixedDenialPolicy,
    ResolutionError, ResolverConfig, RrsetVerdict, SecurityState, TrustAnchor, ValidatedResponse, View, ZoneKeys,
};
use crate::harness::trace::{AcceptedDenial, AcceptedRRSet, Event};
use crate::harness::world::World;
use crate::name::DomainName;
use crate::record::{
    group_rrsets, DenialFamily, DnskeyData, DsData, Query, RRSet, Rcode, RecordType, Response, SignedRRSet,
};

/// What a response (or a cached entry) amounts to for the question asked.
#[derive(Debug, Clone)]
enum Classified {
    Answer { rrset: SignedRRSet, proof: Vec<SignedRRSet> },
    Denial { rcode: Rcode, proof: Vec<SignedRRSet> },
    Referral { cut: DomainName, ns: RRSet, ds: Option<SignedRRSet>, ds_proof: Vec<SignedRRSet> },
    Other(Rcode),
}

fn denial_sets(section: &[crate::record::ResourceRecord]) -> Vec<SignedRRSet> {
    group_rrsets(section).into_iter().filter(|s| s.family().is_some()).collect()
}

fn classify(q: &Query, server: &DomainName, r: &Response) -> Classified {
    if matches!(r.rcode, Rcode::ServFail | Rcode::Refused) {
        return Classified::Other(r.rcode);
    }
    if !r.answer.is_empty() {
        let hit = group_rrsets(&r.answer)
            .into_iter()
            .find(|s| *s.rrset.owner() == q.qname && s.rrset.rtype() == q.qtype);
        return match hit {
            Some(rrset) => Classified::Answer { rrset, proof: denial_sets(&r.authority) },
            None => Classified::Other(Rcode::ServFail),
        };
    }
    let authority = group_rrsets(&r.authority);
    if r.rcode == Rcode::NoError {
        if let Some(ns) = authority.iter().find(|s| s.rrset.rtype() == RecordType::NS && s.rrset.owner() != server) {
            let cut = ns.rrset.owner().clone();
            let ds = authority.iter().find(|s| s.rrset.rtype() == RecordType::DS && *s.rrset.owner() == cut).cloned();
            let ds_proof = authority.iter().filter(|s| s.family().is_some()).cloned().collect();
            return Classified::Referral { cut, ns: ns.rrset.clone(), ds, ds_proof };
        }
    }
    Classified::Denial { rcode: r.rcode, proof: authority.into_iter().filter(|s| s.family().is_some()).collect() }
}

fn from_cache(data: &CachedData) -> Classified {
    match data {
        CachedData::Positive { rrset, proof } => Classified::Answer { rrset: rrset.clone(), proof: proof.clone() },
        CachedData::Negative { rcode, proof } => Classified::Denial { rcode: *rcode, proof: proof.clone() },
    }
}

/// Per-level validation state: the keys of the current zone, or none below an insecure cut.
#[derive(Debug, Clone)]
enum Trust {
    Expect(Vec<DsData>),
    Insecure,
}

enum Verdict {
    Secure { rrsets: Vec<AcceptedRRSet>, denial: Option<AcceptedDenial> },
    Insecure,
    Bogus(String),
}

/// The result of one server step.
enum Step {
    Done(ValidatedResponse),
    Descend { server: DomainName, trust: Trust },
}

/// A validating resolver. Shared by every client activity in a world.
#[derive(Debug)]
pub struct Resolver {
    config: ResolverConfig,
    anchor: TrustAnchor,
    /// Denial families already accepted per zone; the Servfail mixed policy refuses to mix them.
    accepted_families: RefCell<BTreeMap<DomainName, BTreeSet<DenialFamily>>>,
}

struct Ctx<'a> {
    w: &'a World,
    act: ActivityId,
    q: &'a Query,
    view: View,
    chain: Vec<ZoneKeys>,
    notes: Vec<String>,
}

fn servfail(ede: impl Into<String>, notes: Vec<String>) -> ValidatedResponse {
    ValidatedResponse {
        response: Response::empty(Rcode::ServFail),
        security: SecurityState::Bogus,
        ede: Some(ede.into()),
        proof: notes,
    }
}

fn all_keys(k: &ZoneKeys) -> Vec<DnskeyData> {
    std::iter::once(k.ksk.clone()).chain(k.zsks.iter().cloned()).collect()
}

fn accepted(zone: &DomainName, s: &SignedRRSet, v: &RrsetVerdict) -> AcceptedRRSet {
    let (sig, key) = match v {
        RrsetVerdict::Secure { sig, key } => (Some(sig.clone()), Some(key.clone())),
        _ => (None, None),
    };
    AcceptedRRSet { zone: zone.clone(), rrset: s.rrset.clone(), sig, key }
}

impl Resolver {
    pub fn new(config: ResolverConfig, anchor: TrustAnchor) -> Self {
        Resolver { config, anchor, accepted_families: RefCell::new(BTreeMap::new()) }
    }

    pub fn config(&self) -> &ResolverConfig {
        &self.config
    }

    pub fn anchor(&self) -> &TrustAnchor {
        &self.anchor
    }

    fn key(&self, server: &DomainName, owner: &DomainName, rtype: RecordType, view: View) -> CacheKey {
        CacheKey { partition: server.clone(), owner: owner.clone(), rtype, view }
    }

    /// Resolves `q` on behalf of `act`, starting at the anchor zone.
    pub async fn resolve(&self, w: &World, act: ActivityId, q: &Query) -> Result<ValidatedResponse, ResolutionError> {
        let validating = !q.cd;
        let mut cx = Ctx { w, act, q, view: self.config.view(validating), chain: Vec::new(), notes: Vec::new() };
        let mut server = self.anchor.zone.clone();
        let mut trust = if validating { Trust::Expect(self.anchor.ds.clone()) } else { Trust::Insecure };
        for _ in 0..self.config.depth_bound {
            let keys = match &trust {
                Trust::Insecure => None,
                Trust::Expect(ds) => match self.zone_keys(&mut cx, &server, ds).await? {
                    Ok(k) => {
                        cx.notes.push(format!("keys of {server} linked"));
                        cx.chain.push(k.clone());
                        Some(k)
                    }
                    Err(LinkFailure::UnsupportedAlgorithm) if self.config.downgrade_policy == DowngradePolicy::Permissive => {
                        cx.notes.push(format!("keys of {server} use no supported algorithm; insecure"));
                        None
                    }
                    Err(f) => {
                        let ede = match f {
                            LinkFailure::UnsupportedAlgorithm => "unsupported DNSKEY algorithm".to_string(),
                            other => format!("DNSKEY of {server} does not link to its DS: {other:?}"),
                        };
                        return Ok(servfail(ede, cx.notes));
                    }
                },
            };
            if let Some((next, next_trust)) = self.cached_referral(&mut cx, &server, keys.as_ref()).await? {
                server = next;
                trust = next_trust;
                continue;
            }
            match self.ask(&mut cx, &server, keys.as_ref()).await? {
                Step::Done(v) => return Ok(v),
                Step::Descend { server: next, trust: next_trust } => {
                    server = next;
                    trust = next_trust;
                }
            }
        }
        Err(ResolutionError::DepthExceeded(self.config.depth_bound))
    }

    /// The DNSKEY RRSet of `server`, linked to `expected`. Cached entries are re-checked.
    async fn zone_keys(
        &self,
        cx: &mut Ctx<'_>,
        server: &DomainName,
        expected: &[DsData],
    ) -> Result<Result<ZoneKeys, LinkFailure>, ResolutionError> {
        let w = cx.w;
        let key = self.key(server, server, RecordType::DNSKEY, cx.view);
        let scope = if w.options.cache_enabled {
            let scope = w.lock(cx.act, &key).await?;
            if let Some(e) = w.lookup(cx.act, &key, scope)? {
                let out = match &e.data {
                    CachedData::Positive { rrset, .. } => check_link(server, rrset, expected, &self.config),
                    CachedData::Negative { .. } => Err(LinkFailure::NoMatchingKsk),
                };
                w.release(cx.act, &key, scope).await?;
                return Ok(out);
            }
            Some(scope)
        } else {
            None
        };
        let q = Query::new(server.clone(), RecordType::DNSKEY, w.fresh_qid());
        let r = w.exchange(cx.act, server, &q, scope).await;
        let out = match classify(&q, server, &r) {
            Classified::Answer { rrset, .. } => check_link(server, &rrset, expected, &self.config).map(|k| (k, rrset)),
            _ => Err(LinkFailure::NoMatchingKsk),
        };
        if let Some(scope) = scope {
            if let Ok((_, rrset)) = &out {
                let data = CachedData::Positive { rrset: rrset.clone(), proof: Vec::new() };
                w.insert(cx.act, &key, scope, data, true)?;
            }
            w.release(cx.act, &key, scope).await?;
        }
        Ok(out.map(|(k, _)| k))
    }

    /// A delegation below `server` already in the cache, deepest first.
    async fn cached_referral(
        &self,
        cx: &mut Ctx<'_>,
        server: &DomainName,
        keys: Option<&ZoneKeys>,
    ) -> Result<Option<(DomainName, Trust)>, ResolutionError> {
        let w = cx.w;
        if !w.options.cache_enabled {
            return Ok(None);
        }
        let candidates: Vec<DomainName> = cx
            .q
            .qname
            .ancestors()
            .take_while(|a| a.is_strict_subdomain_of(server))
            .filter(|a| !(cx.q.qtype == RecordType::DS && *a == cx.q.qname))
            .collect();
        for cut in candidates {
            let key = self.key(server, &cut, RecordType::NS, cx.view);
            let scope = w.lock(cx.act, &key).await?;
            let hit = w.lookup(cx.act, &key, scope)?;
            w.release(cx.act, &key, scope).await?;
            let Some(CachedData::Positive { rrset: ns, .. }) = hit.map(|e| e.data) else {
                continue;
            };
            let Some(next) = self.next_server(cx, &cut, &ns.rrset)? else {
                continue;
            };
            let trust = match keys {
                None => Trust::Insecure,
                Some(k) => {
                    let dkey = self.key(server, &cut, RecordType::DS, cx.view);
                    let scope = w.lock(cx.act, &dkey).await?;
                    let ds = w.lookup(cx.act, &dkey, scope)?;
                    w.release(cx.act, &dkey, scope).await?;
                    let Some(ds) = ds else {
                        continue;
                    };
                    let (ds, proof) = match ds.data {
                        CachedData::Positive { rrset, .. } => (Some(rrset), Vec::new()),
                        CachedData::Negative { proof, .. } => (None, proof),
                    };
                    match self.delegation_trust(cx, k, &cut, ds.as_ref(), &proof) {
                        Ok(t) => t,
                        Err(_) => continue,
                    }
                }
            };
            cx.notes.push(format!("cached referral {server} -> {cut}"));
            return Ok(Some((next, trust)));
        }
        Ok(None)
    }

    /// Server for the zone at `cut`, found through the NS host registry.
    fn next_server(&self, cx: &Ctx<'_>, cut: &DomainName, ns: &RRSet) -> Result<Option<DomainName>, ResolutionError> {
        let hosts: Vec<&DomainName> = ns
            .rdata()
            .iter()
            .filter_map(|r| match r {
                crate::record::RData::Ns(h) => Some(h),
                _ => None,
            })
            .collect();
        let Some(first) = hosts.first() else {
            return Ok(None);
        };
        for h in &hosts {
            if let Some(apex) = cx.w.topology.server_for_host(h) {
                return Ok((apex == cut).then(|| apex.clone()));
            }
        }
        Err(ResolutionError::Unreachable((*first).clone()))
    }

    /// Trust for the child zone from its DS RRSet, or from a proof that it has none.
    fn delegation_trust(
        &self,
        cx: &mut Ctx<'_>,
        keys: &ZoneKeys,
        cut: &DomainName,
        ds: Option<&SignedRRSet>,
        proof: &[SignedRRSet],
    ) -> Result<Trust, String> {
        match ds {
            Some(ds) => match verify_rrset(ds, &keys.zone, &keys.zsks, &self.config) {
                RrsetVerdict::Secure { .. } => Ok(Trust::Expect(ds_rdata(&ds.rrset))),
                RrsetVerdict::Unsupported if self.config.downgrade_policy == DowngradePolicy::Permissive => {
                    cx.notes.push(format!("DS of {cut} uses no supported algorithm; insecure"));
                    Ok(Trust::Insecure)
                }
                RrsetVerdict::Unsupported => Err(format!("DS of {cut}: unsupported algorithm")),
                RrsetVerdict::Bogus => Err(format!("DS of {cut} does not verify")),
            },
            None => {
                let q = Query::new(cut.clone(), RecordType::DS, cx.q.qid);
                match validate_denial(&q, proof, keys, &self.config) {
                    DenialVerdict::ProvenNoData => {
                        cx.notes.push(format!("{cut} proven unsigned"));
                        Ok(Trust::Insecure)
                    }
                    other => Err(format!("delegation to {cut} without DS or proof: {other:?}")),
                }
            }
        }
    }

    /// Looks up or fetches the question at `server`, under the question key's lock.
    async fn ask(&self, cx: &mut Ctx<'_>, server: &DomainName, keys: Option<&ZoneKeys>) -> Result<Step, ResolutionError> {
        let w = cx.w;
        let q = cx.q;
        let key = self.key(server, &q.qname, q.qtype, cx.view);
        let scope = if w.options.cache_enabled { Some(w.lock(cx.act, &key).await?) } else { None };
        if let Some(scope) = scope {
            // The parent's copy of a child's NS set shares the question key of
            // an NS query at the cut. It is a referral, not an answer.
            if let Some(e) = w.lookup(cx.act, &key, scope)?.filter(|e| !is_referral_entry(&e.data, server)) {
                let c = from_cache(&e.data);
                let verdict = self.judge(cx, server, keys, &c);
                w.release(cx.act, &key, scope).await?;
                return Ok(Step::Done(self.finish(cx, server, c, verdict, true)));
            }
        }
        let upstream = Query::new(q.qname.clone(), q.qtype, w.fresh_qid()).with_cd(q.cd);
        let r = w.exchange(cx.act, server, &upstream, scope).await;
        let c = classify(q, server, &r);
        if let Classified::Referral { cut, ns, ds, ds_proof } = c {
            if let Some(scope) = scope {
                w.release(cx.act, &key, scope).await?;
            }
            return self.descend(cx, server, keys, cut, ns, ds, ds_proof).await;
        }
        let verdict = self.judge(cx, server, keys, &c);
        if let Some(scope) = scope {
            let data = match &c {
                Classified::Answer { rrset, proof } => Some(CachedData::Positive { rrset: rrset.clone(), proof: proof.clone() }),
                Classified::Denial { rcode, proof } => Some(CachedData::Negative { rcode: *rcode, proof: proof.clone() }),
                _ => None,
            };
            if let (Some(data), false) = (data, matches!(verdict, Verdict::Bogus(_))) {
                w.insert(cx.act, &key, scope, data, matches!(verdict, Verdict::Secure { .. }))?;
            }
            w.release(cx.act, &key, scope).await?;
        }
        Ok(Step::Done(self.finish(cx, server, c, verdict, false)))
    }

    #[allow(clippy::too_many_arguments)]
    async fn descend(
        &self,
        cx: &mut Ctx<'_>,
        server: &DomainName,
        keys: Option<&ZoneKeys>,
        cut: DomainName,
        ns: RRSet,
        ds: Option<SignedRRSet>,
        ds_proof: Vec<SignedRRSet>,
    ) -> Result<Step, ResolutionError> {
        let w = cx.w;
        if !(cut.is_strict_subdomain_of(server) && cx.q.qname.is_subdomain_of(&cut)) {
            return Ok(Step::Done(servfail(format!("referral from {server} to {cut} is out of bailiwick"), cx.notes.clone())));
        }
        let Some(next) = self.next_server(cx, &cut, &ns)? else {
            return Ok(Step::Done(servfail(format!("no server for {cut}"), cx.notes.clone())));
        };
        let trust = match keys {
            None => Trust::Insecure,
            Some(k) => match self.delegation_trust(cx, k, &cut, ds.as_ref(), &ds_proof) {
                Ok(t) => t,
                Err(why) => return Ok(Step::Done(servfail(why, cx.notes.clone()))),
            },
        };
        let secure = matches!(trust, Trust::Expect(_)) && keys.is_some();
        if w.options.cache_enabled {
            let nkey = self.key(server, &cut, RecordType::NS, cx.view);
            let scope = w.lock(cx.act, &nkey).await?;
            if w.lookup(cx.act, &nkey, scope)?.is_none() {
                let data = CachedData::Positive { rrset: SignedRRSet::unsigned(ns), proof: Vec::new() };
                w.insert(cx.act, &nkey, scope, data, secure)?;
            }
            w.release(cx.act, &nkey, scope).await?;
            let data = match ds {
                Some(ds) => Some(CachedData::Positive { rrset: ds, proof: Vec::new() }),
                None if !ds_proof.is_empty() => Some(CachedData::Negative { rcode: Rcode::NoError, proof: ds_proof }),
                None => None,
            };
            if let Some(data) = data {
                let dkey = self.key(server, &cut, RecordType::DS, cx.view);
                let scope = w.lock(cx.act, &dkey).await?;
                if w.lookup(cx.act, &dkey, scope)?.is_none() {
                    w.insert(cx.act, &dkey, scope, data, keys.is_some())?;
                }
                w.release(cx.act, &dkey, scope).await?;
            }
        }
        cx.notes.push(format!("referral {server} -> {cut}"));
        Ok(Step::Descend { server: next, trust })
    }

    /// Validation of an answer or denial from `server`.
    fn judge(&self, cx: &mut Ctx<'_>, server: &DomainName, keys: Option<&ZoneKeys>, c: &Classified) -> Verdict {
        let Some(keys) = keys else {
            return Verdict::Insecure;
        };
        let permissive = self.config.downgrade_policy == DowngradePolicy::Permissive;
        match c {
            Classified::Answer { rrset, proof } => {
                let v = verify_rrset(rrset, server, &all_keys(keys), &self.config);
                match &v {
                    RrsetVerdict::Secure { sig, .. } => {
                        let mut rrsets = vec![accepted(server, rrset, &v)];
                        if (sig.labels as usize) < rrset.rrset.owner().rrsig_label_count() {
                            let mut verified = Vec::new();
                            for p in proof {
                                let pv = verify_rrset(p, server, &keys.zsks, &self.config);
                                if matches!(pv, RrsetVerdict::Secure { .. }) {
                                    rrsets.push(accepted(server, p, &pv));
                                    verified.push(p.clone());
                                }
                            }
                            if !proves_no_exact_match(&cx.q.qname, &verified) {
                                return Verdict::Bogus("wildcard answer without proof of no exact match".into());
                            }
                        }
                        cx.notes.push(format!("{} {} verified", rrset.rrset.owner(), rrset.rrset.rtype()));
                        Verdict::Secure { rrsets, denial: None }
                    }
                    RrsetVerdict::Unsupported if permissive => {
                        cx.notes.push(format!("{} signed with unsupported algorithms only; insecure", rrset.rrset.owner()));
                        Verdict::Insecure
                    }
                    RrsetVerdict::Unsupported => Verdict::Bogus("unsupported signature algorithm".into()),
                    RrsetVerdict::Bogus => Verdict::Bogus(format!("{} {} does not verify", rrset.rrset.owner(), rrset.rrset.rtype())),
                }
            }
            Classified::Denial { rcode, proof } => {
                let unsupported = !proof.is_empty()
                    && proof
                        .iter()
                        .all(|p| verify_rrset(p, server, &keys.zsks, &self.config) == RrsetVerdict::Unsupported);
                if unsupported {
                    return if permissive {
                        Verdict::Insecure
                    } else {
                        Verdict::Bogus("unsupported signature algorithm".into())
                    };
                }
                let verdict = validate_denial(cx.q, proof, keys, &self.config);
                let ok = matches!(
                    (rcode, &verdict),
                    (Rcode::NxDomain, DenialVerdict::ProvenNonexistent) | (Rcode::NoError, DenialVerdict::ProvenNoData)
                );
                if !ok {
                    return Verdict::Bogus(format!("denial for {} rejected: {verdict:?}", cx.q.qname));
                }
                let families: BTreeSet<DenialFamily> = proof.iter().filter_map(SignedRRSet::family).collect();
                if self.config.mixed_denial_policy == MixedDenialPolicy::Servfail {
                    let seen = self.accepted_families.borrow();
                    if seen.get(server).is_some_and(|prev| prev.iter().any(|f| !families.contains(f))) {
                        return Verdict::Bogus(format!("{server} already proved denials with the other record family"));
                    }
                }
                self.accepted_families.borrow_mut().entry(server.clone()).or_default().extend(families);
                let records: Vec<AcceptedRRSet> = proof
                    .iter()
                    .map(|p| accepted(server, p, &verify_rrset(p, server, &keys.zsks, &self.config)))
                    .collect();
                cx.notes.push(format!("denial for {} {} verified", cx.q.qname, cx.q.qtype));
                Verdict::Secure { rrsets: Vec::new(), denial: Some(AcceptedDenial { zone: server.clone(), rcode: *rcode, records }) }
            }
            Classified::Referral { .. } | Classified::Other(_) => Verdict::Bogus("unexpected response".into()),
        }
    }

    fn finish(&self, cx: &mut Ctx<'_>, server: &DomainName, c: Classified, verdict: Verdict, cached: bool) -> ValidatedResponse {
        let (security, rrsets, denial) = match verdict {
            Verdict::Bogus(why) => {
                cx.notes.push(format!("bogus at {server}: {why}"));
                return servfail(why, std::mem::take(&mut cx.notes));
            }
            Verdict::Insecure => (SecurityState::Insecure, Vec::new(), None),
            Verdict::Secure { rrsets, denial } => (SecurityState::Secure, rrsets, denial),
        };
        let mut response = match c {
            Classified::Answer { rrset, proof } => {
                let mut r = Response::empty(Rcode::NoError);
                r.answer.extend(rrset.records());
                r.authority.extend(proof.iter().flat_map(SignedRRSet::records));
                r
            }
            Classified::Denial { rcode, proof } => {
                let mut r = Response::empty(rcode);
                r.authority.extend(proof.iter().flat_map(SignedRRSet::records));
                r
            }
            Classified::Other(rcode) => {
                return servfail(format!("{server} answered {rcode}"), std::mem::take(&mut cx.notes));
            }
            Classified::Referral { .. } => unreachable!("referrals descend"),
        };
        response.ad = security == SecurityState::Secure;
        let rrsets = if security == SecurityState::Insecure {
            group_rrsets(&response.answer)
                .iter()
                .map(|s| AcceptedRRSet { zone: server.clone(), rrset: s.rrset.clone(), sig: None, key: None })
                .collect()
        } else {
            rrsets
        };
        cx.w.record(Event::Accept {
            activity: cx.act,
            qid: cx.q.qid,
            qname: cx.q.qname.clone(),
            qtype: cx.q.qtype,
            security,
            from_cache: cached,
            rrsets,
            denial,
            chain: cx.chain.clone(),
        });
        ValidatedResponse { response, security, ede: None, proof: std::mem::take(&mut cx.notes) }
    }
}

fn is_referral_entry(data: &CachedData, server: &DomainName) -> bool {
    matches!(data, CachedData::Positive { rrset, .. }
        if rrset.rrset.rtype() == RecordType::NS && rrset.rrset.owner().is_strict_subdomain_of(server))
}
