//! Deterministic simulator for cost-aware cloud data analytics platforms:
//! tiered storage lifecycles, spot-market provisioning, elastic scaling of
//! a queued worker pool, and role-based access control — with scenario
//! files, CSV reports, and a cost model for yearly projections.

pub mod autoscaler;
pub mod costmodel;
pub mod engine;
pub mod ids;
pub mod jobmgr;
pub mod market;
pub mod rbac;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod simkernel;
pub mod storagesim;
pub mod traces;
pub mod workload;
