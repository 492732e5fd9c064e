use crate::trajectory::TrajectorySpline;
use crate::AgentId;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsgKind {
    /// Candidate under Delay Check; not yet executed by the sender.
    Opt,
    /// Trajectory the sender has committed to.
    Comm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajMessage {
    pub kind: MsgKind,
    pub traj: Arc<TrajectorySpline>,
    pub sender: AgentId,
    /// Sender-local publication counter, shared by OPT and COMM messages.
    pub seq: u64,
    pub t_pub: f64,
}

impl TrajMessage {
    pub fn key(&self) -> (AgentId, u64) {
        (self.sender, self.seq)
    }
}
