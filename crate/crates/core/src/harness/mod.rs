//! Scenario configuration, execution, metrics, audits and campaigns.

pub mod audit;
pub mod campaign;
pub mod cases;
pub mod config;
pub mod metrics;
pub mod scenario;
pub mod trace;
