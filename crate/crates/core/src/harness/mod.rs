//! Scenario construction, the deterministic scheduler, traces and the property catalog.
pub mod linearizability;
pub mod properties;
pub mod replay;
pub mod report;
pub mod scenario;
pub mod scheduler;
pub mod topology;
pub mod trace;
pub mod walker;
pub mod world;
