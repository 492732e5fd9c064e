//! Scripted two-agent timing cases.
//!
//! Agent A publishes a candidate that conflicts with B's. Each case pins the
//! phase B is in when A publishes (row) and when A's message reaches B
//! (column), then records which agent catches the conflict and in which
//! phase. All times scale with `δ_DC`, so constructibility does not depend
//! on its value.
//!
//! B's first iteration spans O `[1, 1 + 1.5δ)`, C `[.., 1 + 1.75δ)` and DC
//! `[.., 1 + 2.75δ]`. A's planner latency is scripted so that its check ends,
//! and its OPT goes out, exactly at the case's publish time.

use super::audit::verify_trace;
use super::trace::{TraceEvent, TraceRecord};
use crate::collision::{check_against_store, BoxRules};
use crate::deconfliction::{AgentParams, DetectPhase, MsgKind, Phase, Variant};
use crate::planner::{hover_plan, rest_to_rest, EntryRef, PlanOutcome, PlanRequest, Planner};
use crate::simnet::{
    AgentSpec, DelayModel, Engine, EngineSetup, LatencyModel, RunResult, ScriptedDelivery, ScriptedLatency,
};
use crate::trajectory::{AgentBox, DynamicLimits, TrajectorySpline, Vec3};
use crate::AgentId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Mutex;

pub const AGENT_A: AgentId = AgentId(1);
pub const AGENT_B: AgentId = AgentId(2);
const HALF_BOX: f64 = 1.0;
const ORIGIN: f64 = 1.0;

/// Where B's timeline stands relative to its first iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    O,
    C,
    Dc,
    AfterDc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expectation {
    Detected { by: Role, phase: DetectPhase },
    Unconstructible,
}

/// What a canned planner returns in one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Canned {
    /// Fly the agent's crossing line, or hover if that conflicts with the
    /// snapshot (reported as avoided).
    Cross,
    /// Fly onto A's start regardless of the snapshot.
    ToPeerStart,
    Hover,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseScript {
    pub case: u8,
    pub delta_dc: f64,
    pub row: Window,
    pub column: Window,
    pub expected: Expectation,
    pub t_pub_a: f64,
    pub t_recv_b: f64,
    /// Arrival of B's first OPT at A, when it must be pinned.
    pub t_recv_a: Option<f64>,
    pub b_latencies: Vec<f64>,
    pub b_plans: Vec<Canned>,
    /// B's phase at the moment A's message lands.
    pub b_phase_at_recv: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case: u8,
    pub row: Window,
    pub column: Window,
    pub expected: Expectation,
    pub detected: Option<(Role, DetectPhase)>,
    /// Scripted publish and delivery times and phases were realized.
    pub timing_ok: bool,
    /// The audit found overlapping committed trajectories.
    pub committed_conflict: bool,
}

impl CaseOutcome {
    pub fn matches_expected(&self) -> bool {
        match self.expected {
            Expectation::Unconstructible => self.detected.is_none() && !self.committed_conflict,
            Expectation::Detected { by, phase } => {
                self.timing_ok && !self.committed_conflict && self.detected == Some((by, phase))
            }
        }
    }
}

/// Window bounds in units of `δ_DC` after t = 1.
fn window_bounds(w: Window) -> (f64, f64) {
    match w {
        Window::O => (0.0, 1.5),
        Window::C => (1.5, 1.75),
        Window::Dc => (1.75, 2.75),
        Window::AfterDc => (2.75, f64::INFINITY),
    }
}

/// A case needs some publish time in `row` and receipt time in `column`
/// at most `δ_DC` apart. Both windows are open at the far end, so the
/// infimum of possible delays must be strictly below `δ_DC`. Everything
/// scales with `δ_DC`, so the answer does not depend on it.
pub fn constructible(row: Window, column: Window) -> bool {
    let (_, pub_end) = window_bounds(row);
    let (recv_start, _) = window_bounds(column);
    recv_start - pub_end < 1.0
}

fn grid(case: u8) -> (Window, Window) {
    const ROWS: [Window; 3] = [Window::O, Window::C, Window::Dc];
    const COLS: [Window; 4] = [Window::O, Window::C, Window::Dc, Window::AfterDc];
    let k = (case - 1) as usize;
    (ROWS[k / 4], COLS[k % 4])
}

/// The script for case `1..=12`. Times are in units of `δ_DC` after t = 1.
pub fn case_script(case: u8, delta_dc: f64) -> CaseScript {
    assert!((1..=12).contains(&case), "cases are numbered 1 to 12");
    let (row, column) = grid(case);
    let d = delta_dc;
    let at = |k: f64| ORIGIN + k * d;
    use Canned::*;
    use DetectPhase as P;
    let by_b = |phase| Expectation::Detected { by: Role::B, phase };
    // (pub, recv, B→A, B latencies, B plans, expected, B phase at recv)
    let (p, r, ba, lat, plans, expected, at_recv): (f64, f64, Option<f64>, Vec<f64>, Vec<Canned>, _, _) = match case {
        1 => (0.5, 1.0, None, vec![1.5], vec![Cross], by_b(P::C), Phase::Optimizing),
        2 => (
            1.0,
            1.6,
            Some(2.25),
            vec![1.5],
            vec![Cross],
            by_b(P::DC),
            Phase::Checking,
        ),
        3 => (
            1.25,
            2.0,
            Some(2.5),
            vec![1.5],
            vec![Cross],
            by_b(P::DC),
            Phase::DelayChecking,
        ),
        // B's first candidate fails its check on A's committed hover, so A's
        // message lands in the gap before B's next optimization.
        5 => (
            1.6,
            1.76,
            None,
            vec![1.5, 1.5],
            vec![ToPeerStart, Cross],
            by_b(P::O),
            Phase::Idle,
        ),
        6 => (
            1.6,
            1.7,
            Some(2.65),
            vec![1.5],
            vec![Cross],
            by_b(P::DC),
            Phase::Checking,
        ),
        7 => (
            1.6,
            2.0,
            Some(2.65),
            vec![1.5],
            vec![Cross],
            by_b(P::DC),
            Phase::DelayChecking,
        ),
        // B commits a harmless first candidate and starts over.
        9 => (
            2.5,
            2.765,
            None,
            vec![1.5, 1.5],
            vec![Hover, Cross],
            by_b(P::O),
            Phase::Idle,
        ),
        10 => (
            2.5,
            3.0,
            None,
            vec![1.5, 0.5],
            vec![Hover, Cross],
            by_b(P::C),
            Phase::Optimizing,
        ),
        11 => (
            2.0,
            2.25,
            Some(2.7),
            vec![1.5],
            vec![Cross],
            by_b(P::DC),
            Phase::DelayChecking,
        ),
        // B commits before A's message lands and is DONE; A must catch it.
        12 => (
            2.5,
            2.8,
            Some(2.6),
            vec![1.5],
            vec![Cross],
            Expectation::Detected {
                by: Role::A,
                phase: P::DC,
            },
            Phase::Done,
        ),
        _ => (
            0.0,
            0.0,
            None,
            vec![1.5],
            vec![Hover],
            Expectation::Unconstructible,
            Phase::Idle,
        ),
    };
    debug_assert_eq!(expected == Expectation::Unconstructible, !constructible(row, column));
    CaseScript {
        case,
        delta_dc: d,
        row,
        column,
        expected,
        t_pub_a: at(p),
        t_recv_b: at(r),
        t_recv_a: ba.map(at),
        b_latencies: lat.into_iter().map(|k| k * d).collect(),
        b_plans: plans,
        b_phase_at_recv: at_recv,
    }
}

struct CannedPlanner {
    lines: BTreeMap<AgentId, (Vec3, Vec3)>,
    plans: BTreeMap<AgentId, Vec<Canned>>,
    issued: Mutex<BTreeMap<AgentId, usize>>,
    depart: f64,
}

impl CannedPlanner {
    fn flight(&self, req: &PlanRequest, to: Vec3) -> TrajectorySpline {
        let hold = TrajectorySpline::hover(req.owner, 0, req.start.p, req.t_switch, self.depart);
        let go = rest_to_rest(req.owner, req.start.p, to, self.depart, 4.0, 6);
        hold.splice(req.t_switch, self.depart, &go)
            .expect("hover joins a rest start")
    }
}

impl Planner for CannedPlanner {
    fn plan(&self, req: &PlanRequest, _seed: u64) -> PlanOutcome {
        let k = {
            let mut issued = self.issued.lock().expect("planner lock");
            let slot = issued.entry(req.owner).or_default();
            *slot += 1;
            *slot - 1
        };
        let kind = self
            .plans
            .get(&req.owner)
            .and_then(|p| p.get(k))
            .copied()
            .unwrap_or(Canned::Hover);
        let hover = || hover_plan(req.owner, req.start.p, req.t_switch);
        match kind {
            Canned::Hover => PlanOutcome::Candidate {
                traj: hover(),
                avoided: Vec::new(),
            },
            Canned::ToPeerStart => PlanOutcome::Candidate {
                traj: self.flight(req, self.lines[&AGENT_A].0),
                avoided: Vec::new(),
            },
            Canned::Cross => {
                let traj = self.flight(req, self.lines[&req.owner].1);
                let r = check_against_store(&traj, &req.snapshot, &req.boxes, req.t_switch);
                if r.in_conflict {
                    PlanOutcome::Candidate {
                        traj: hover(),
                        avoided: vec![EntryRef {
                            owner: r.pair.1,
                            seq: r.seqs.1,
                        }],
                    }
                } else {
                    PlanOutcome::Candidate {
                        traj,
                        avoided: Vec::new(),
                    }
                }
            }
        }
    }
}

fn setup(script: &CaseScript) -> (EngineSetup, CannedPlanner) {
    let d = script.delta_dc;
    let a_line = (Vec3::new(-5.0, 0.0, 1.0), Vec3::new(5.0, 0.0, 1.0));
    let b_line = (Vec3::new(0.0, -5.0, 1.0), Vec3::new(0.0, 5.0, 1.0));
    let delta_c = 0.25 * d;
    let a_first = ORIGIN - 2.5 * d;
    let a_latency = script.t_pub_a - delta_c - a_first;
    let mut deliveries = vec![ScriptedDelivery {
        sender: AGENT_A,
        receiver: AGENT_B,
        seq: 1,
        t_recv: script.t_recv_b,
    }];
    if let Some(t) = script.t_recv_a {
        deliveries.push(ScriptedDelivery {
            sender: AGENT_B,
            receiver: AGENT_A,
            seq: 1,
            t_recv: t,
        });
    }
    let latency = LatencyModel::Scripted {
        per_agent: vec![
            ScriptedLatency {
                agent: AGENT_A,
                latencies: vec![a_latency],
            },
            ScriptedLatency {
                agent: AGENT_B,
                latencies: script.b_latencies.clone(),
            },
        ],
        fallback: 1.5 * d,
    };
    let exact = AgentBox::cube(HALF_BOX);
    let params = |goal| AgentParams {
        variant: Variant::Rmader,
        delta_dc: d,
        delta_c,
        tick: d / 40.0,
        delta_o_max: latency.max(),
        goal,
        goal_tol: 0.1,
        boxes: BoxRules {
            own: exact.inflated(1e-3),
            peer: exact,
            obstacle: exact,
        },
        limits: DynamicLimits::default(),
        horizon: 10.0,
        failure_budget: 1000,
    };
    let agents = vec![
        AgentSpec {
            id: AGENT_A,
            params: params(a_line.1),
            start: a_line.0,
            first_iteration: a_first,
            exact_box: exact,
        },
        AgentSpec {
            id: AGENT_B,
            params: params(b_line.1),
            start: b_line.0,
            first_iteration: ORIGIN,
            exact_box: exact,
        },
    ];
    let planner = CannedPlanner {
        lines: [(AGENT_A, a_line), (AGENT_B, b_line)].into(),
        plans: [(AGENT_A, vec![Canned::Cross]), (AGENT_B, script.b_plans.clone())].into(),
        issued: Mutex::new(BTreeMap::new()),
        depart: ORIGIN + 40.0 * d,
    };
    let setup = EngineSetup {
        agents,
        obstacles: Vec::new(),
        delay: DelayModel::Scripted {
            deliveries,
            fallback: 0.05 * d,
        },
        latency,
        seed: script.case as u64,
    };
    (setup, planner)
}

fn phase_at(trace: &[TraceRecord], agent: AgentId, t: f64) -> Phase {
    trace
        .iter()
        .filter(|r| r.agent == Some(agent) && r.t <= t)
        .filter_map(|r| match r.event {
            TraceEvent::Phase { phase } => Some(phase),
            _ => None,
        })
        .next_back()
        .unwrap_or(Phase::Idle)
}

fn realized(script: &CaseScript, run: &RunResult) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9;
    let published = run.trace.iter().any(|r| {
        r.agent == Some(AGENT_A)
            && close(r.t, script.t_pub_a)
            && matches!(
                r.event,
                TraceEvent::Broadcast {
                    msg: MsgKind::Opt,
                    seq: 1,
                    ..
                }
            )
    });
    let delivered = run.trace.iter().any(|r| {
        r.agent == Some(AGENT_B)
            && close(r.t, script.t_recv_b)
            && matches!(r.event, TraceEvent::Deliver { sender, seq: 1, .. } if sender == AGENT_A)
    });
    let row_phase = match script.row {
        Window::O => Phase::Optimizing,
        Window::C => Phase::Checking,
        _ => Phase::DelayChecking,
    };
    published
        && delivered
        && phase_at(&run.trace, AGENT_B, script.t_pub_a) == row_phase
        && phase_at(&run.trace, AGENT_B, script.t_recv_b) == script.b_phase_at_recv
}

/// Runs one case. Unconstructible cases are refused without simulating.
pub fn run_case(script: &CaseScript) -> CaseOutcome {
    let mut outcome = CaseOutcome {
        case: script.case,
        row: script.row,
        column: script.column,
        expected: script.expected,
        detected: None,
        timing_ok: false,
        committed_conflict: false,
    };
    if !constructible(script.row, script.column) {
        return outcome;
    }
    let (setup, planner) = setup(script);
    let run = Engine::new(setup, &planner).run_until(ORIGIN + 8.0 * script.delta_dc);
    let agent = |id| run.agents.iter().find(|a| a.id == id).expect("case agent");
    let (a, b) = (agent(AGENT_A), agent(AGENT_B));
    let a_opt = EntryRef { owner: AGENT_A, seq: 1 };
    outcome.detected = b
        .detections
        .iter()
        .find(|d| d.against == a_opt)
        .map(|d| (Role::B, d.phase))
        .or_else(|| {
            a.detections
                .iter()
                .find(|d| d.against.owner == AGENT_B)
                .map(|d| (Role::A, d.phase))
        });
    outcome.timing_ok = realized(script, &run);
    outcome.committed_conflict = verify_trace(&run.trace).map(|r| !r.collision_free()).unwrap_or(true);
    outcome
}

pub fn run_all_cases(delta_dc: f64) -> Vec<CaseOutcome> {
    (1..=12).map(|c| run_case(&case_script(c, delta_dc))).collect()
}
