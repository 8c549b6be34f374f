//! Executable model of DNSSEC.
//!
//! Zones are signed with symbolic keys, served by stateless authoritative
//! servers and resolved by a validating resolver whose cache is shared by
//! concurrent activities. A seeded cooperative scheduler interleaves those
//! activities with a Dolev-Yao network adversary, and a catalog of trace
//! properties is checked over the resulting event logs.

pub mod crypto;
pub mod name;
pub mod record;
pub mod zone;
pub mod adversary;
pub mod harness;
pub mod resolver;
