//! Delay-robust asynchronous trajectory deconfliction in a deterministic
//! discrete-event simulator.
//!
//! - [`trajectory`]: piecewise cubic Bézier trajectories and limit checks.
//! - [`collision`]: conservative continuous-time box conflict checks.
//! - [`deconfliction`]: the per-agent protocol state machine and peer store.
//! - [`simnet`]: event queue, delay models and delay accounting.
//! - [`planner`]: candidate trajectory generation.
//! - [`harness`]: scenarios, metrics, conformance cases, campaigns and audit.

// `!(a > b)` is the NaN-rejecting form used for all float validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod deconfliction;
pub mod harness;
pub mod planner;
pub mod simnet;
pub mod trajectory;

use serde::{Deserialize, Serialize};

/// Identifier of an agent or obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
