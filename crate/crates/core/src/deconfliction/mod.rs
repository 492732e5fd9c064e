//! RMADER protocol state machine and peer store.

mod agent;
mod message;
mod store;

pub use agent::{AgentParams, AgentState, Counters, DetectPhase, Detection, Effect, Phase, Timer, Variant};
pub use message::{MsgKind, TrajMessage};
pub use store::{PeerStore, StoreSnapshot};
