//! The validating resolver: configuration, cache, validation and the
//! iterative resolution loop.

pub mod cache;
mod resolve;
pub mod validate;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{ActivityId, Cache, CacheEntry, CacheKey, CachedData, ContractViolation, EntryStatus, View};
pub use resolve::Resolver;
pub use validate::{
    check_link, signed_owner, validate_denial, validate_rrsig, verify_chain, verify_rrset, ChainLevel, ChainVerdict,
    DenialVerdict, LinkFailure, RrsetVerdict, SigVerdict, TrustAnchor, ZoneKeys,
};

use crate::crypto::AlgorithmId;
use crate::name::DomainName;
use crate::record::Response;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DowngradePolicy {
    #[default]
    Strict,
    Permissive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePartitioning {
    #[default]
    Unified,
    ByValidationState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedDenialPolicy {
    #[default]
    Accept,
    Servfail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolverConfig {
    pub supported_algorithms: BTreeSet<AlgorithmId>,
    pub downgrade_policy: DowngradePolicy,
    pub cache_partitioning: CachePartitioning,
    pub mixed_denial_policy: MixedDenialPolicy,
    /// Maximum number of servers visited for one question.
    pub depth_bound: usize,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        ResolverConfig {
            supported_algorithms: [AlgorithmId::RSASHA256, AlgorithmId::ECDSAP256SHA256].into(),
            downgrade_policy: DowngradePolicy::Strict,
            cache_partitioning: CachePartitioning::Unified,
            mixed_denial_policy: MixedDenialPolicy::Accept,
            depth_bound: 8,
        }
    }
}

impl ResolverConfig {
    /// Cache view used for a lookup with or without validation.
    pub fn view(&self, validating: bool) -> View {
        match (self.cache_partitioning, validating) {
            (CachePartitioning::Unified, _) => View::Shared,
            (CachePartitioning::ByValidationState, true) => View::Checked,
            (CachePartitioning::ByValidationState, false) => View::Unchecked,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SecurityState {
    Secure,
    Insecure,
    Bogus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidatedResponse {
    pub response: Response,
    pub security: SecurityState,
    /// Extended error annotation for SERVFAIL answers.
    pub ede: Option<String>,
    /// Validation steps taken, in order.
    pub proof: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum ResolutionError {
    #[error("query depth bound {0} exceeded")]
    DepthExceeded(usize),
    #[error("no server known for name server {0}")]
    Unreachable(DomainName),
    #[error(transparent)]
    Contract(#[from] ContractViolation),
}
