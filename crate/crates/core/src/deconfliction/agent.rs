use super::message::{MsgKind, TrajMessage};
use super::store::PeerStore;
use crate::collision::{check_against_store, BoxRules, ConflictReport};
use crate::harness::trace::{RejectReason, TraceEvent};
use crate::planner::{EntryRef, PlanOutcome, PlanRequest, MIN_SEGMENT};
use crate::trajectory::{DynamicLimits, TrajectorySpline, Vec3};
use crate::AgentId;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Rmader,
    #[serde(rename = "nocheck")]
    RmaderNoCheck,
    #[serde(rename = "mader")]
    MaderBaseline,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Rmader => "rmader",
            Variant::RmaderNoCheck => "nocheck",
            Variant::MaderBaseline => "mader",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rmader" => Some(Variant::Rmader),
            "nocheck" => Some(Variant::RmaderNoCheck),
            "mader" => Some(Variant::MaderBaseline),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Optimizing,
    Checking,
    DelayChecking,
    Done,
}

/// Phase in which a conflict was noticed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectPhase {
    O,
    C,
    DC,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub t: f64,
    pub phase: DetectPhase,
    pub against: EntryRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Timer {
    StartIteration,
    CheckDone,
    DcTick,
}

/// Requests an agent hands back to the scheduler.
#[derive(Debug, Clone)]
pub enum Effect {
    Broadcast(TrajMessage),
    Plan(PlanRequest),
    Wake { at: f64, timer: Timer },
    Trace(TraceEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub iterations: u64,
    /// Candidates discarded by a conflicting Check, or by the baseline recheck.
    pub rejections: u64,
    pub dc_aborts: u64,
    pub commits: u64,
    pub planner_failures: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentParams {
    pub variant: Variant,
    pub delta_dc: f64,
    pub delta_c: f64,
    pub tick: f64,
    /// Upper bound on planner latency.
    pub delta_o_max: f64,
    pub goal: Vec3,
    pub goal_tol: f64,
    pub boxes: BoxRules,
    pub limits: DynamicLimits,
    pub horizon: f64,
    /// Consecutive planner failures after which the agent counts as stopped.
    pub failure_budget: u32,
}

impl AgentParams {
    /// Time from iteration start to the switch point. Covers the longest
    /// path to a commit, so the new tail never starts in the past.
    pub fn switch_lead(&self) -> f64 {
        let check = match self.variant {
            Variant::Rmader => self.delta_c + self.delta_dc,
            Variant::RmaderNoCheck => self.delta_dc,
            Variant::MaderBaseline => self.delta_c,
        };
        self.delta_o_max + check + 2.0 * self.tick
    }
}

/// One agent's protocol state.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: AgentId,
    pub params: AgentParams,
    phase: Phase,
    traj_comm: Arc<TrajectorySpline>,
    traj_opt: Option<Arc<TrajectorySpline>>,
    pub store: PeerStore,
    msg_seq: u64,
    traj_seq: u64,
    t_start: f64,
    t_switch: f64,
    dc_deadline: f64,
    checked_version: u64,
    check_verdict: Option<ConflictReport>,
    pending_at_check: usize,
    consecutive_failures: u32,
    pub stopped: bool,
    pub counters: Counters,
    pub detections: Vec<Detection>,
}

/// Nudges `t` later so that splitting `traj` there never leaves a sliver
/// segment shorter than `min_gap`.
fn clear_of_knots(traj: &TrajectorySpline, t: f64, min_gap: f64) -> f64 {
    for &k in traj.knots() {
        if (k - t).abs() < min_gap {
            return if k >= t { k } else { k + min_gap };
        }
    }
    t
}

fn entry_of(r: &ConflictReport) -> EntryRef {
    EntryRef {
        owner: r.pair.1,
        seq: r.seqs.1,
    }
}

impl AgentState {
    /// `initial` is the first committed trajectory, normally a hover at the
    /// start position.
    pub fn new(id: AgentId, params: AgentParams, initial: TrajectorySpline, store: PeerStore) -> Self {
        let initial = Arc::new(initial.with_identity(id, 0));
        Self {
            id,
            params,
            phase: Phase::Idle,
            traj_comm: initial,
            traj_opt: None,
            store,
            msg_seq: 0,
            traj_seq: 0,
            t_start: 0.0,
            t_switch: 0.0,
            dc_deadline: 0.0,
            checked_version: 0,
            check_verdict: None,
            pending_at_check: 0,
            consecutive_failures: 0,
            stopped: false,
            counters: Counters::default(),
            detections: Vec::new(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn traj_comm(&self) -> &Arc<TrajectorySpline> {
        &self.traj_comm
    }

    pub fn traj_opt(&self) -> Option<&Arc<TrajectorySpline>> {
        self.traj_opt.as_ref()
    }

    pub fn dc_deadline(&self) -> f64 {
        self.dc_deadline
    }

    pub fn t_switch(&self) -> f64 {
        self.t_switch
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    fn at_goal(&self, traj: &TrajectorySpline) -> bool {
        traj.terminal_hover() && (traj.final_position() - self.params.goal).norm() <= self.params.goal_tol
    }

    /// Enters DONE immediately if the initial trajectory already rests at the
    /// goal.
    pub fn initialize(&mut self, t_now: f64, out: &mut Vec<Effect>) {
        if self.at_goal(&self.traj_comm.clone()) {
            self.set_phase(Phase::Done, out);
            out.push(Effect::Trace(TraceEvent::Done));
        } else {
            out.push(Effect::Wake {
                at: t_now,
                timer: Timer::StartIteration,
            });
        }
    }

    fn set_phase(&mut self, phase: Phase, out: &mut Vec<Effect>) {
        if self.phase != phase {
            self.phase = phase;
            out.push(Effect::Trace(TraceEvent::Phase { phase }));
        }
    }

    fn broadcast(&mut self, kind: MsgKind, traj: Arc<TrajectorySpline>, t_now: f64, out: &mut Vec<Effect>) {
        self.msg_seq += 1;
        out.push(Effect::Trace(TraceEvent::Broadcast {
            msg: kind,
            seq: self.msg_seq,
            traj_seq: traj.seq(),
        }));
        out.push(Effect::Broadcast(TrajMessage {
            kind,
            traj,
            sender: self.id,
            seq: self.msg_seq,
            t_pub: t_now,
        }));
    }

    fn schedule_next(&mut self, t_now: f64, out: &mut Vec<Effect>) {
        self.set_phase(Phase::Idle, out);
        out.push(Effect::Wake {
            at: t_now + self.params.tick,
            timer: Timer::StartIteration,
        });
    }

    /// Queues an incoming message; the store changes only when drained.
    pub fn on_message(&mut self, msg: TrajMessage, _t_now: f64) -> bool {
        self.store.enqueue(msg)
    }

    pub fn on_timer(&mut self, timer: Timer, t_now: f64, out: &mut Vec<Effect>) {
        match (timer, self.phase) {
            (Timer::StartIteration, Phase::Idle) => self.start_iteration(t_now, out),
            (Timer::CheckDone, Phase::Checking) => self.finish_check(t_now, out),
            (Timer::DcTick, Phase::DelayChecking) => self.delay_check_tick(t_now, out),
            _ => {}
        }
    }

    /// Drains, snapshots the store and asks for a plan from the committed
    /// state at the switch time.
    pub fn start_iteration(&mut self, t_now: f64, out: &mut Vec<Effect>) {
        self.store.drain_pending();
        self.counters.iterations += 1;
        self.t_start = t_now;
        self.t_switch = clear_of_knots(&self.traj_comm, t_now + self.params.switch_lead(), 0.4 * MIN_SEGMENT);
        let snapshot = self.store.snapshot();
        self.set_phase(Phase::Optimizing, out);
        out.push(Effect::Plan(PlanRequest {
            owner: self.id,
            start: self.traj_comm.state(self.t_switch),
            t_switch: self.t_switch,
            goal: self.params.goal,
            snapshot,
            limits: self.params.limits,
            horizon: self.params.horizon,
            boxes: self.params.boxes,
        }));
    }

    fn planner_failed(&mut self, t_now: f64, out: &mut Vec<Effect>) {
        self.counters.planner_failures += 1;
        self.consecutive_failures += 1;
        if self.consecutive_failures >= self.params.failure_budget {
            self.stopped = true;
        }
        out.push(Effect::Trace(TraceEvent::PlannerInfeasible {
            consecutive: self.consecutive_failures,
        }));
        self.schedule_next(t_now, out);
    }

    pub fn finish_optimization(&mut self, outcome: PlanOutcome, t_now: f64, out: &mut Vec<Effect>) {
        if self.phase != Phase::Optimizing {
            return;
        }
        let (tail, avoided) = match outcome {
            PlanOutcome::Candidate { traj, avoided } => (Some(traj), avoided),
            PlanOutcome::Infeasible { avoided } => (None, avoided),
        };
        if !avoided.is_empty() {
            for a in &avoided {
                self.detections.push(Detection {
                    t: t_now,
                    phase: DetectPhase::O,
                    against: *a,
                });
            }
            out.push(Effect::Trace(TraceEvent::PlannerAvoided { against: avoided }));
        }
        let Some(tail) = tail else {
            return self.planner_failed(t_now, out);
        };
        let candidate = match self.traj_comm.splice(self.t_start, self.t_switch, &tail) {
            Ok(c) => c.with_identity(self.id, self.traj_seq + 1),
            Err(_) => return self.planner_failed(t_now, out),
        };
        self.consecutive_failures = 0;
        self.traj_seq += 1;
        let candidate = Arc::new(candidate);
        self.traj_opt = Some(candidate.clone());
        match self.params.variant {
            Variant::Rmader | Variant::MaderBaseline => {
                self.set_phase(Phase::Checking, out);
                self.store.drain_pending();
                let snapshot = self.store.snapshot();
                self.checked_version = snapshot.version();
                self.check_verdict = Some(check_against_store(&candidate, &snapshot, &self.params.boxes, t_now));
                self.pending_at_check = self.store.pending_len();
                out.push(Effect::Wake {
                    at: t_now + self.params.delta_c,
                    timer: Timer::CheckDone,
                });
            }
            Variant::RmaderNoCheck => {
                // Nothing has been checked yet, so the first DC tick covers
                // the whole store.
                self.checked_version = 0;
                self.broadcast(MsgKind::Opt, candidate, t_now, out);
                self.enter_delay_check(t_now, out);
            }
        }
    }

    fn finish_check(&mut self, t_now: f64, out: &mut Vec<Effect>) {
        let verdict = self.check_verdict.take().expect("check verdict set when entering C");
        if verdict.in_conflict {
            return self.reject(t_now, RejectReason::Conflict, Some(entry_of(&verdict)), out);
        }
        let candidate = self.traj_opt.clone().expect("candidate present in C");
        match self.params.variant {
            Variant::MaderBaseline => {
                if self.store.pending_len() > self.pending_at_check {
                    return self.reject(t_now, RejectReason::ArrivalDuringCheck, None, out);
                }
                self.commit(t_now, out);
            }
            _ => {
                self.broadcast(MsgKind::Opt, candidate, t_now, out);
                self.enter_delay_check(t_now, out);
            }
        }
    }

    fn reject(&mut self, t_now: f64, reason: RejectReason, against: Option<EntryRef>, out: &mut Vec<Effect>) {
        self.counters.rejections += 1;
        if let Some(a) = against {
            self.detections.push(Detection {
                t: t_now,
                phase: DetectPhase::C,
                against: a,
            });
        }
        out.push(Effect::Trace(TraceEvent::Reject { reason, against }));
        self.traj_opt = None;
        self.schedule_next(t_now, out);
    }

    fn enter_delay_check(&mut self, t_now: f64, out: &mut Vec<Effect>) {
        self.dc_deadline = t_now + self.params.delta_dc;
        self.set_phase(Phase::DelayChecking, out);
        self.delay_check_tick(t_now, out);
    }

    /// One Delay Check iteration: drain, check against everything applied
    /// since the last clean check, then abort, wait or commit.
    pub fn delay_check_tick(&mut self, t_now: f64, out: &mut Vec<Effect>) {
        self.store.drain_pending();
        let candidate = self.traj_opt.clone().expect("candidate present in DC");
        let fresh = self.store.snapshot_since(self.checked_version);
        let verdict = check_against_store(&candidate, &fresh, &self.params.boxes, t_now);
        self.checked_version = fresh.version();
        if verdict.in_conflict {
            self.counters.dc_aborts += 1;
            let against = entry_of(&verdict);
            self.detections.push(Detection {
                t: t_now,
                phase: DetectPhase::DC,
                against,
            });
            out.push(Effect::Trace(TraceEvent::DcAbort { against }));
            self.traj_opt = None;
            return self.schedule_next(t_now, out);
        }
        if t_now >= self.dc_deadline - 1e-12 {
            return self.commit(t_now, out);
        }
        out.push(Effect::Wake {
            at: (t_now + self.params.tick).min(self.dc_deadline),
            timer: Timer::DcTick,
        });
    }

    fn commit(&mut self, t_now: f64, out: &mut Vec<Effect>) {
        let candidate = self.traj_opt.take().expect("candidate present at commit");
        if t_now > self.t_switch {
            // The tail would start in the past; keep executing traj_comm.
            return self.schedule_next(t_now, out);
        }
        self.counters.commits += 1;
        self.traj_comm = candidate.clone();
        out.push(Effect::Trace(TraceEvent::Commit {
            traj: candidate.as_ref().clone().into(),
            t_switch: self.t_switch,
        }));
        self.broadcast(MsgKind::Comm, candidate.clone(), t_now, out);
        if self.at_goal(&candidate) {
            self.set_phase(Phase::Done, out);
            out.push(Effect::Trace(TraceEvent::Done));
        } else {
            self.schedule_next(t_now, out);
        }
    }
}
