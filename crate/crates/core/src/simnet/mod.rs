//! Deterministic discrete-event network simulation.

mod engine;
mod queue;

pub use engine::{
    AgentOutcome, AgentSpec, Engine, EngineSetup, LatencyModel, ObstacleSpec, RunResult, ScriptedLatency,
};
pub use queue::{EventClass, EventQueue};

use crate::AgentId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum Jitter {
    /// Uniform on `[0, max]`.
    Uniform { max: f64 },
    /// Exponential with the given mean, truncated to `[0, max]`.
    TruncExp { mean: f64, max: f64 },
}

impl Jitter {
    pub fn max(&self) -> f64 {
        match *self {
            Jitter::Uniform { max } | Jitter::TruncExp { max, .. } => max,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Jitter::Uniform { max } => {
                if max > 0.0 {
                    rng.gen_range(0.0..=max)
                } else {
                    0.0
                }
            }
            Jitter::TruncExp { mean, max } => {
                let u: f64 = rng.gen();
                let mass = 1.0 - (-max / mean).exp();
                (-mean * (1.0 - u * mass).ln()).clamp(0.0, max)
            }
        }
    }
}

/// Absolute delivery time for one `(sender, receiver, msg seq)` leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedDelivery {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub seq: u64,
    pub t_recv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayModel {
    Fixed {
        delay: f64,
    },
    FixedPlusJitter {
        delay: f64,
        jitter: Jitter,
    },
    /// Listed legs arrive at their scripted times; all others after
    /// `fallback` seconds.
    Scripted {
        #[serde(default)]
        deliveries: Vec<ScriptedDelivery>,
        fallback: f64,
    },
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match self {
            DelayModel::Fixed { delay } if ok(*delay) => Ok(()),
            DelayModel::FixedPlusJitter { delay, jitter } if ok(*delay) => match *jitter {
                Jitter::Uniform { max } if ok(max) => Ok(()),
                Jitter::TruncExp { mean, max } if ok(max) && mean.is_finite() && mean > 0.0 => Ok(()),
                _ => Err("delay.jitter: max must be >= 0 and mean > 0".into()),
            },
            DelayModel::Scripted { deliveries, fallback } if ok(*fallback) => {
                if deliveries.iter().all(|d| d.t_recv.is_finite()) {
                    Ok(())
                } else {
                    Err("delay.deliveries: t_recv must be finite".into())
                }
            }
            _ => Err("delay: delays must be finite and >= 0".into()),
        }
    }

    /// Upper bound on any sampled delay, if the model has one.
    pub fn delta_max(&self) -> Option<f64> {
        match self {
            DelayModel::Fixed { delay } => Some(*delay),
            DelayModel::FixedPlusJitter { delay, jitter } => Some(delay + jitter.max()),
            DelayModel::Scripted { .. } => None,
        }
    }

    /// Lower bound on any sampled delay.
    pub fn delta_introd(&self) -> f64 {
        match self {
            DelayModel::Fixed { delay } | DelayModel::FixedPlusJitter { delay, .. } => *delay,
            DelayModel::Scripted { fallback, .. } => *fallback,
        }
    }
}

/// Broadcast fan-out with per-receiver delay sampling.
#[derive(Debug, Clone)]
pub struct NetBus {
    model: DelayModel,
    script: BTreeMap<(AgentId, AgentId, u64), f64>,
    rng: ChaCha8Rng,
}

impl NetBus {
    pub fn new(model: DelayModel, seed: u64) -> Self {
        let script = match &model {
            DelayModel::Scripted { deliveries, .. } => deliveries
                .iter()
                .map(|d| ((d.sender, d.receiver, d.seq), d.t_recv))
                .collect(),
            _ => BTreeMap::new(),
        };
        Self {
            model,
            script,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn model(&self) -> &DelayModel {
        &self.model
    }

    /// Delivery time of one leg; never earlier than `t_pub`.
    pub fn delivery_time(&mut self, sender: AgentId, receiver: AgentId, seq: u64, t_pub: f64) -> f64 {
        let t = match &self.model {
            DelayModel::Fixed { delay } => t_pub + delay,
            DelayModel::FixedPlusJitter { delay, jitter } => t_pub + delay + jitter.sample(&mut self.rng),
            DelayModel::Scripted { fallback, .. } => self
                .script
                .get(&(sender, receiver, seq))
                .copied()
                .unwrap_or(t_pub + fallback),
        };
        t.max(t_pub)
    }

    /// One delivery per receiver other than the sender, with independent
    /// delays, in receiver order.
    pub fn broadcast<I>(&mut self, sender: AgentId, seq: u64, t_pub: f64, receivers: I) -> Vec<(AgentId, f64)>
    where
        I: IntoIterator<Item = AgentId>,
    {
        receivers
            .into_iter()
            .filter(|r| *r != sender)
            .map(|r| (r, self.delivery_time(sender, r, seq, t_pub)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub seq: u64,
    pub t_pub: f64,
    pub t_recv: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DelayLedger {
    pub records: Vec<LedgerRecord>,
}

impl DelayLedger {
    pub fn record(&mut self, sender: AgentId, receiver: AgentId, seq: u64, t_pub: f64, t_recv: f64) {
        self.records.push(LedgerRecord {
            sender,
            receiver,
            seq,
            t_pub,
            t_recv,
            delta: t_recv - t_pub,
        });
    }

    pub fn max_delta(&self) -> Option<f64> {
        self.records.iter().map(|r| r.delta).reduce(f64::max)
    }

    /// Counts per bucket of width `width`, starting at zero delay.
    pub fn histogram(&self, width: f64) -> Vec<u64> {
        histogram(self.records.iter().map(|r| r.delta), width)
    }
}

pub fn histogram<I: IntoIterator<Item = f64>>(deltas: I, width: f64) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    for d in deltas {
        let i = (d.max(0.0) / width).floor() as usize;
        if out.len() <= i {
            out.resize(i + 1, 0);
        }
        out[i] += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorViolation {
    pub record: LedgerRecord,
    pub delta_dc: f64,
}

/// Deliveries whose realized delay exceeded the receiver's Delay Check
/// length. Empty means the guarantee's delay precondition held.
pub fn guarantee_monitor(ledger: &[LedgerRecord], delta_dc: &BTreeMap<AgentId, f64>) -> Vec<MonitorViolation> {
    ledger
        .iter()
        .filter_map(|r| {
            let dc = *delta_dc.get(&r.receiver)?;
            (r.delta > dc + 1e-12).then_some(MonitorViolation {
                record: *r,
                delta_dc: dc,
            })
        })
        .collect()
}
