use super::queue::{EventClass, EventQueue};
use super::{DelayLedger, DelayModel, LedgerRecord, NetBus};
use crate::deconfliction::{AgentParams, AgentState, Counters, Detection, Effect, PeerStore, Timer, TrajMessage};
use crate::harness::trace::{EndStatus, TraceEvent, TraceRecord};
use crate::planner::{PlanOutcome, Planner};
use crate::trajectory::{AgentBox, TrajectorySpline, Vec3};
use crate::AgentId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Per-agent scripted planner latencies, consumed one per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedLatency {
    pub agent: AgentId,
    pub latencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencyModel {
    Fixed {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Scripted {
        #[serde(default)]
        per_agent: Vec<ScriptedLatency>,
        fallback: f64,
    },
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        let valid = match self {
            LatencyModel::Fixed { value } => ok(*value),
            LatencyModel::Uniform { lo, hi } => ok(*lo) && ok(*hi) && lo <= hi,
            LatencyModel::Scripted { per_agent, fallback } => {
                ok(*fallback) && per_agent.iter().flat_map(|p| &p.latencies).all(|x| ok(*x))
            }
        };
        if valid {
            Ok(())
        } else {
            Err("latency: values must be finite, >= 0 and lo <= hi".into())
        }
    }

    /// Largest latency the model can produce.
    pub fn max(&self) -> f64 {
        match self {
            LatencyModel::Fixed { value } => *value,
            LatencyModel::Uniform { hi, .. } => *hi,
            LatencyModel::Scripted { per_agent, fallback } => per_agent
                .iter()
                .flat_map(|p| p.latencies.iter().copied())
                .fold(*fallback, f64::max),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub id: AgentId,
    pub params: AgentParams,
    pub start: Vec3,
    /// Time of the first planning iteration.
    pub first_iteration: f64,
    /// Physical box, recorded for audits; `params.boxes.own` may be inflated.
    pub exact_box: AgentBox,
}

#[derive(Debug, Clone)]
pub struct ObstacleSpec {
    pub traj: Arc<TrajectorySpline>,
    pub half: AgentBox,
}

#[derive(Debug, Clone)]
pub struct EngineSetup {
    pub agents: Vec<AgentSpec>,
    pub obstacles: Vec<ObstacleSpec>,
    pub delay: DelayModel,
    pub latency: LatencyModel,
    pub seed: u64,
}

enum Payload {
    Deliver { to: usize, msg: TrajMessage },
    Timer { agent: usize, timer: Timer },
    PlannerDone { agent: usize, outcome: PlanOutcome },
}

/// Final state of one agent after a run.
#[derive(Debug, Clone)]
pub struct AgentOutcome {
    pub id: AgentId,
    pub start: Vec3,
    pub goal: Vec3,
    pub done: bool,
    pub stopped: bool,
    pub counters: Counters,
    pub detections: Vec<Detection>,
    /// Committed trajectories with their commit times, initial one at t = 0.
    pub timeline: Vec<(f64, Arc<TrajectorySpline>)>,
    pub own_box: AgentBox,
    pub delta_dc: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub status: EndStatus,
    pub t_final: f64,
    pub trace: Vec<TraceRecord>,
    pub ledger: Vec<LedgerRecord>,
    pub agents: Vec<AgentOutcome>,
    pub obstacles: Vec<ObstacleSpec>,
}

pub struct Engine<'p> {
    queue: EventQueue<Payload>,
    agents: Vec<AgentState>,
    starts: Vec<Vec3>,
    exact_boxes: Vec<AgentBox>,
    ids: Vec<AgentId>,
    timelines: Vec<Vec<(f64, Arc<TrajectorySpline>)>>,
    obstacles: Vec<ObstacleSpec>,
    planner: &'p dyn Planner,
    bus: NetBus,
    latency: LatencyModel,
    latency_rng: ChaCha8Rng,
    plans_issued: Vec<usize>,
    ledger: DelayLedger,
    trace: Vec<TraceRecord>,
    seed: u64,
    now: f64,
}

fn planner_seed(seed: u64, agent: AgentId, k: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((agent.0 as u64) << 40) ^ k as u64);
    rng.gen()
}

impl<'p> Engine<'p> {
    pub fn new(setup: EngineSetup, planner: &'p dyn Planner) -> Self {
        let initial: Vec<Arc<TrajectorySpline>> = setup
            .agents
            .iter()
            .map(|a| Arc::new(TrajectorySpline::hover(a.id, 0, a.start, 0.0, 1.0)))
            .collect();
        let mut trace = Vec::new();
        let mut agents = Vec::new();
        for (i, spec) in setup.agents.iter().enumerate() {
            let mut store = PeerStore::new();
            for (j, other) in initial.iter().enumerate() {
                if j != i {
                    store.seed_peer(other.clone());
                }
            }
            for o in &setup.obstacles {
                store.add_obstacle(o.traj.clone());
            }
            trace.push(TraceRecord {
                t: 0.0,
                agent: Some(spec.id),
                event: TraceEvent::Init {
                    traj: initial[i].as_ref().clone().into(),
                    goal: spec.params.goal.into(),
                    delta_dc: spec.params.delta_dc,
                    variant: spec.params.variant,
                    half_extents: spec.exact_box.half_extents.into(),
                },
            });
            agents.push(AgentState::new(
                spec.id,
                spec.params,
                initial[i].as_ref().clone(),
                store,
            ));
        }
        for o in &setup.obstacles {
            trace.push(TraceRecord {
                t: 0.0,
                agent: Some(o.traj.owner()),
                event: TraceEvent::ObstacleInit {
                    traj: o.traj.as_ref().clone().into(),
                    half_extents: o.half.half_extents.into(),
                },
            });
        }
        let n = agents.len();
        let mut engine = Self {
            queue: EventQueue::new(),
            starts: setup.agents.iter().map(|a| a.start).collect(),
            exact_boxes: setup.agents.iter().map(|a| a.exact_box).collect(),
            ids: setup.agents.iter().map(|a| a.id).collect(),
            timelines: initial.iter().map(|t| vec![(0.0, t.clone())]).collect(),
            agents,
            obstacles: setup.obstacles,
            planner,
            bus: NetBus::new(setup.delay, setup.seed ^ 0x5eed_0001),
            latency: setup.latency,
            latency_rng: ChaCha8Rng::seed_from_u64(setup.seed ^ 0x5eed_0002),
            plans_issued: vec![0; n],
            ledger: DelayLedger::default(),
            trace,
            seed: setup.seed,
            now: 0.0,
        };
        for (i, spec) in setup.agents.iter().enumerate() {
            let mut out = Vec::new();
            engine.agents[i].initialize(spec.first_iteration, &mut out);
            engine.apply_effects(i, out);
        }
        engine
    }

    fn sample_latency(&mut self, agent: usize) -> f64 {
        let k = self.plans_issued[agent];
        self.plans_issued[agent] += 1;
        match &self.latency {
            LatencyModel::Fixed { value } => *value,
            LatencyModel::Uniform { lo, hi } => {
                if hi > lo {
                    self.latency_rng.gen_range(*lo..=*hi)
                } else {
                    *lo
                }
            }
            LatencyModel::Scripted { per_agent, fallback } => per_agent
                .iter()
                .find(|p| p.agent == self.ids[agent])
                .and_then(|p| p.latencies.get(k).copied())
                .unwrap_or(*fallback),
        }
    }

    fn apply_effects(&mut self, i: usize, effects: Vec<Effect>) {
        let id = self.ids[i];
        for e in effects {
            match e {
                Effect::Trace(event) => self.trace.push(TraceRecord {
                    t: self.now,
                    agent: Some(id),
                    event,
                }),
                Effect::Wake { at, timer } => {
                    self.queue
                        .push(at, EventClass::Agent, Payload::Timer { agent: i, timer })
                }
                Effect::Broadcast(msg) => {
                    let legs = self.bus.broadcast(id, msg.seq, msg.t_pub, self.ids.iter().copied());
                    for (receiver, t) in legs {
                        let to = self
                            .ids
                            .iter()
                            .position(|x| *x == receiver)
                            .expect("registered receiver");
                        self.queue
                            .push(t, EventClass::Delivery, Payload::Deliver { to, msg: msg.clone() });
                    }
                }
                Effect::Plan(req) => {
                    let seed = planner_seed(self.seed, id, self.plans_issued[i]);
                    let outcome = self.planner.plan(&req, seed);
                    let latency = self.sample_latency(i);
                    self.queue.push(
                        self.now + latency,
                        EventClass::Agent,
                        Payload::PlannerDone { agent: i, outcome },
                    );
                }
            }
        }
        let comm = self.agents[i].traj_comm();
        let last = &self.timelines[i].last().expect("initial entry").1;
        if !Arc::ptr_eq(comm, last) {
            self.timelines[i].push((self.now, comm.clone()));
        }
    }

    fn all_done(&self) -> bool {
        self.agents.iter().all(|a| a.is_done())
    }

    /// Processes events in `(t, class, counter)` order until every agent is
    /// DONE, the queue runs dry, or `t_end` passes.
    pub fn run_until(mut self, t_end: f64) -> RunResult {
        let mut status = EndStatus::QueueExhausted;
        if self.all_done() {
            status = EndStatus::AllDone;
        } else {
            while let Some((t, _, payload)) = self.queue.pop() {
                if t > t_end {
                    status = EndStatus::TimeLimit;
                    self.now = t_end;
                    break;
                }
                self.now = t;
                let mut out = Vec::new();
                let agent = match payload {
                    Payload::Deliver { to, msg } => {
                        self.ledger.record(msg.sender, self.ids[to], msg.seq, msg.t_pub, t);
                        self.trace.push(TraceRecord {
                            t,
                            agent: Some(self.ids[to]),
                            event: TraceEvent::Deliver {
                                sender: msg.sender,
                                seq: msg.seq,
                                t_pub: msg.t_pub,
                                delay: t - msg.t_pub,
                            },
                        });
                        self.agents[to].on_message(msg, t);
                        to
                    }
                    Payload::Timer { agent, timer } => {
                        self.agents[agent].on_timer(timer, t, &mut out);
                        agent
                    }
                    Payload::PlannerDone { agent, outcome } => {
                        self.agents[agent].finish_optimization(outcome, t, &mut out);
                        agent
                    }
                };
                self.apply_effects(agent, out);
                if self.all_done() {
                    status = EndStatus::AllDone;
                    break;
                }
            }
        }
        let t_final = match status {
            EndStatus::AllDone => self
                .agents
                .iter()
                .map(|a| a.traj_comm().end_time())
                .fold(self.now, f64::max)
                .min(t_end),
            EndStatus::TimeLimit => t_end,
            EndStatus::QueueExhausted => self.now,
        };
        self.trace.push(TraceRecord {
            t: t_final,
            agent: None,
            event: TraceEvent::End { status },
        });
        let agents = self
            .agents
            .into_iter()
            .zip(self.timelines)
            .zip(self.starts)
            .zip(self.exact_boxes)
            .map(|(((a, timeline), start), own_box)| AgentOutcome {
                id: a.id,
                start,
                goal: a.params.goal,
                done: a.is_done(),
                stopped: a.stopped,
                counters: a.counters,
                detections: a.detections,
                timeline,
                own_box,
                delta_dc: a.params.delta_dc,
            })
            .collect();
        RunResult {
            status,
            t_final,
            trace: self.trace,
            ledger: self.ledger.records,
            agents,
            obstacles: self.obstacles,
        }
    }
}

impl RunResult {
    pub fn delta_dc_by_agent(&self) -> BTreeMap<AgentId, f64> {
        self.agents.iter().map(|a| (a.id, a.delta_dc)).collect()
    }
}
