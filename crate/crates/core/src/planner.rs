//! Sampling-based substitute for a trajectory optimizer.
//!
//! Candidates are uniform cubic B-splines whose first three control points
//! reproduce the start state exactly and whose last three coincide, so every
//! candidate starts C²-joined and ends at rest. Interior control points follow
//! a polyline through an optional detour waypoint. Each layout is slowed down
//! by uniform knot dilation until its derivative control points satisfy the
//! limits, then filtered against the store snapshot and ranked by cost.

use crate::collision::{check_against_store, BoxRules};
use crate::deconfliction::StoreSnapshot;
use crate::trajectory::{DynamicLimits, Segment, State, TrajectorySpline, Vec3};
use crate::AgentId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Shortest segment the planner emits (s). Keeps finite-precision derivative
/// gaps at joins far below the continuity tolerance.
pub const MIN_SEGMENT: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct PlanRequest {
    pub owner: AgentId,
    /// State of the committed trajectory at `t_switch`.
    pub start: State,
    pub t_switch: f64,
    pub goal: Vec3,
    pub snapshot: StoreSnapshot,
    pub limits: DynamicLimits,
    pub horizon: f64,
    pub boxes: BoxRules,
}

/// A stored trajectory that blocked at least one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryRef {
    pub owner: AgentId,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    /// Trajectory starting at `t_switch`; owner and seq are left for the
    /// caller to assign.
    Candidate {
        traj: TrajectorySpline,
        avoided: Vec<EntryRef>,
    },
    Infeasible {
        avoided: Vec<EntryRef>,
    },
}

pub trait Planner: Send + Sync {
    fn plan(&self, req: &PlanRequest, seed: u64) -> PlanOutcome;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Number of candidate layouts (K).
    pub candidates: usize,
    /// B-spline segments per candidate; at least 3.
    pub segments: usize,
    /// Weight on path length in the cost.
    pub lambda: f64,
    /// Weight on the remaining distance to the goal in the cost.
    pub mu: f64,
    /// Knot dilation factor per repair step.
    pub dilation: f64,
    pub max_dilations: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            candidates: 32,
            segments: 6,
            lambda: 0.1,
            mu: 1.0,
            dilation: 1.15,
            max_dilations: 60,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.candidates == 0 {
            return Err("planner.candidates must be >= 1".into());
        }
        if self.segments < 3 {
            return Err("planner.segments must be >= 3".into());
        }
        if !(self.dilation > 1.0) || !self.dilation.is_finite() {
            return Err("planner.dilation must be > 1".into());
        }
        if !(self.lambda >= 0.0 && self.mu >= 0.0) {
            return Err("planner.lambda and planner.mu must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct LatticePlanner {
    pub cfg: PlannerConfig,
}

impl LatticePlanner {
    pub fn new(cfg: PlannerConfig) -> Self {
        Self { cfg }
    }
}

impl Planner for LatticePlanner {
    fn plan(&self, req: &PlanRequest, seed: u64) -> PlanOutcome {
        plan(req, &self.cfg, seed)
    }
}

/// Constant-position trajectory starting at `t_switch`.
pub fn hover_plan(owner: AgentId, position: Vec3, t_switch: f64) -> TrajectorySpline {
    TrajectorySpline::hover(owner, 0, position, t_switch, t_switch + 1.0)
}

/// Straight rest-to-rest flight over `[t0, t0 + duration]` as a uniform
/// cubic B-spline with `segments` pieces, holding `to` afterwards.
pub fn rest_to_rest(owner: AgentId, from: Vec3, to: Vec3, t0: f64, duration: f64, segments: usize) -> TrajectorySpline {
    let n = segments.max(3);
    let h = duration / n as f64;
    let mut c = vec![from; 3];
    for k in 1..n - 2 {
        c.push(point_along(&[from, to], k as f64 / (n - 2) as f64));
    }
    c.extend([to; 3]);
    let mut segs = bspline_to_bezier(&c);
    segs[0][0] = from;
    let last = segs.len() - 1;
    segs[last][1..].fill(to);
    let knots = (0..=n).map(|i| t0 + h * i as f64).collect();
    TrajectorySpline::new(owner, 0, segs, knots, true).expect("rest-to-rest spline is C2 by construction")
}

#[derive(Debug, Clone, Copy)]
enum Layout {
    Direct { end: Vec3 },
    Stop,
    Via { waypoint: Vec3, end: Vec3 },
}

fn start_points(s: &State, h: f64) -> [Vec3; 3] {
    let c1 = s.p - s.a * (h * h / 6.0);
    let c0 = c1 + s.a * (h * h / 2.0) - s.v * h;
    let c2 = c1 + s.a * (h * h / 2.0) + s.v * h;
    [c0, c1, c2]
}

fn point_along(poly: &[Vec3], frac: f64) -> Vec3 {
    let lengths: Vec<f64> = poly.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = lengths.iter().sum();
    if total <= 1e-12 {
        return poly[poly.len() - 1];
    }
    let mut target = frac * total;
    for (i, w) in poly.windows(2).enumerate() {
        let len = lengths[i];
        if target <= len || i + 1 == lengths.len() {
            let u = if len > 0.0 { (target / len).min(1.0) } else { 1.0 };
            return w[0] + (w[1] - w[0]) * u;
        }
        target -= len;
    }
    poly[poly.len() - 1]
}

fn bspline_to_bezier(c: &[Vec3]) -> Vec<Segment> {
    c.windows(4)
        .map(|w| {
            let (a, b, cc, d) = (w[0], w[1], w[2], w[3]);
            [
                (a + b * 4.0 + cc) / 6.0,
                (b * 4.0 + cc * 2.0) / 6.0,
                (b * 2.0 + cc * 4.0) / 6.0,
                (b + cc * 4.0 + d) / 6.0,
            ]
        })
        .collect()
}

fn build(req: &PlanRequest, layout: Layout, n: usize, h: f64) -> Option<(TrajectorySpline, Vec3, f64)> {
    let [c0, c1, c2] = start_points(&req.start, h);
    let (poly, end) = match layout {
        Layout::Direct { end } => (vec![c2, end], end),
        Layout::Stop => (vec![c2, c2], c2),
        Layout::Via { waypoint, end } => (vec![c2, waypoint, end], end),
    };
    let mut c = Vec::with_capacity(n + 3);
    c.extend([c0, c1, c2]);
    for k in 1..n - 2 {
        c.push(point_along(&poly, k as f64 / (n - 2) as f64));
    }
    c.extend([end, end, end]);
    let mut segs = bspline_to_bezier(&c);
    // Pin the exact start and rest conditions against rounding.
    segs[0][0] = req.start.p;
    let last = segs.len() - 1;
    segs[last][3] = end;
    segs[last][2] = end;
    segs[last][1] = end;
    let knots: Vec<f64> = (0..=n).map(|i| req.t_switch + h * i as f64).collect();
    let path_len = c.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let traj = TrajectorySpline::new(req.owner, 0, segs, knots, true).ok()?;
    Some((traj, end, path_len))
}

/// Time-scales one layout until its derivative bounds satisfy the limits.
fn feasible(req: &PlanRequest, cfg: &PlannerConfig, layout: Layout) -> Option<(TrajectorySpline, Vec3, f64)> {
    let n = cfg.segments;
    let span = match layout {
        Layout::Direct { end } => (end - req.start.p).norm(),
        Layout::Stop => 0.0,
        Layout::Via { waypoint, end } => (waypoint - req.start.p).norm() + (end - waypoint).norm(),
    };
    let lim = &req.limits;
    let t0 = (span / lim.v_max)
        .max((span / lim.a_max).sqrt())
        .max(req.start.v.amax() / lim.a_max);
    let mut h = (t0 / n as f64).max(MIN_SEGMENT);
    for _ in 0..=cfg.max_dilations {
        if h * n as f64 > req.horizon {
            return None;
        }
        if let Some(out) = build(req, layout, n, h) {
            if crate::trajectory::within_limits(&out.0, lim) {
                return Some(out);
            }
        }
        h *= cfg.dilation;
    }
    None
}

fn layouts(req: &PlanRequest, cfg: &PlannerConfig, rng: &mut ChaCha8Rng) -> Vec<Layout> {
    let p = req.start.p;
    let to_goal = req.goal - p;
    let dist = to_goal.norm();
    let dir = if dist > 1e-9 { to_goal / dist } else { Vec3::x() };
    let mut lateral = dir.cross(&Vec3::z());
    if lateral.norm() < 1e-6 {
        lateral = dir.cross(&Vec3::x());
    }
    let lateral = lateral.normalize();
    let vertical = lateral.cross(&dir).normalize();
    let scale = (0.3 * dist).clamp(0.5, 3.0);
    let reach = dist.min(0.5 * req.limits.v_max * req.horizon);
    let along = p + dir * (0.5 * reach);

    let mut out = vec![
        Layout::Direct { end: req.goal },
        Layout::Direct {
            end: p + dir * (0.5 * dist),
        },
        Layout::Stop,
    ];
    'outer: for mag in [scale, 2.0 * scale] {
        for k in 0..8 {
            let angle = k as f64 * std::f64::consts::FRAC_PI_4 + rng.gen_range(-0.2..0.2);
            let m = mag * (1.0 + rng.gen_range(-0.2..0.2));
            let waypoint = along + (lateral * angle.cos() + vertical * angle.sin()) * m;
            out.push(Layout::Via {
                waypoint,
                end: req.goal,
            });
            out.push(Layout::Direct { end: waypoint });
            if out.len() >= cfg.candidates {
                break 'outer;
            }
        }
    }
    out.truncate(cfg.candidates);
    out
}

/// Returns the cheapest candidate that is dynamically feasible and clean
/// against the snapshot, or `Infeasible` when none is.
pub fn plan(req: &PlanRequest, cfg: &PlannerConfig, seed: u64) -> PlanOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranked: Vec<(f64, usize, TrajectorySpline)> = layouts(req, cfg, &mut rng)
        .into_iter()
        .enumerate()
        .filter_map(|(i, layout)| {
            let (traj, end, len) = feasible(req, cfg, layout)?;
            let duration = traj.end_time() - traj.start_time();
            let cost = duration + cfg.lambda * len + cfg.mu * (req.goal - end).norm();
            Some((cost, i, traj))
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut avoided = Vec::new();
    for (_, _, traj) in ranked {
        let report = check_against_store(&traj, &req.snapshot, &req.boxes, req.t_switch);
        if !report.in_conflict {
            return PlanOutcome::Candidate { traj, avoided };
        }
        let blocker = EntryRef {
            owner: report.pair.1,
            seq: report.seqs.1,
        };
        if !avoided.contains(&blocker) {
            avoided.push(blocker);
        }
    }
    PlanOutcome::Infeasible { avoided }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::check_pair;
    use crate::trajectory::{check_dynamic_limits, continuity_gap, AgentBox};
    use std::sync::Arc;

    fn boxes() -> BoxRules {
        BoxRules {
            own: AgentBox::cube(0.2),
            peer: AgentBox::cube(0.2),
            obstacle: AgentBox::cube(0.2),
        }
    }

    fn request(start: State, goal: Vec3, snapshot: StoreSnapshot) -> PlanRequest {
        PlanRequest {
            owner: AgentId(0),
            start,
            t_switch: 1.0,
            goal,
            snapshot,
            limits: DynamicLimits::default(),
            horizon: 4.0,
            boxes: boxes(),
        }
    }

    fn candidate(out: PlanOutcome) -> TrajectorySpline {
        match out {
            PlanOutcome::Candidate { traj, .. } => traj,
            PlanOutcome::Infeasible { .. } => panic!("expected a candidate"),
        }
    }

    fn verify(req: &PlanRequest, traj: &TrajectorySpline) {
        let s = traj.state(req.t_switch);
        assert!((s.p - req.start.p).norm() <= 1e-9);
        assert!((s.v - req.start.v).norm() <= 1e-9);
        assert!((s.a - req.start.a).norm() <= 1e-9);
        assert!(check_dynamic_limits(traj, &req.limits).is_empty());
        for (entry, _) in req.snapshot.entries() {
            let w = (req.t_switch, traj.end_time().max(entry.end_time()));
            assert!(
                !check_pair(traj, entry, &req.boxes.own, &req.boxes.peer, w)
                    .unwrap()
                    .in_conflict
            );
        }
    }

    #[test]
    fn unobstructed_goes_straight_to_goal() {
        let goal = Vec3::new(10.0, 0.0, 1.0);
        let req = request(State::at_rest(Vec3::new(0.0, 0.0, 1.0)), goal, StoreSnapshot::empty());
        let traj = candidate(plan(&req, &PlannerConfig::default(), 1));
        assert!((traj.final_position() - goal).norm() <= 1e-6);
        assert!(traj.terminal_hover());
        verify(&req, &traj);
        // Straight: every control point lies on the start-goal line.
        for seg in traj.segments() {
            for q in seg {
                assert!(q.y.abs() < 1e-9 && (q.z - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn moving_start_is_joined_continuously() {
        let start = State {
            p: Vec3::new(1.0, 2.0, 1.0),
            v: Vec3::new(1.5, -0.5, 0.2),
            a: Vec3::new(-1.0, 0.5, 0.0),
        };
        let req = request(start, Vec3::new(6.0, 2.0, 1.0), StoreSnapshot::empty());
        let traj = candidate(plan(&req, &PlannerConfig::default(), 2));
        verify(&req, &traj);
    }

    fn wall(x: f64, ys: &[f64], zs: &[f64]) -> StoreSnapshot {
        let mut id = 10;
        let mut entries = Vec::new();
        for &y in ys {
            for &z in zs {
                entries.push((
                    Arc::new(TrajectorySpline::hover(AgentId(id), 0, Vec3::new(x, y, z), 0.0, 1.0)),
                    false,
                ));
                id += 1;
            }
        }
        StoreSnapshot::from_entries(entries)
    }

    #[test]
    fn blocked_line_takes_a_detour() {
        // A short wall across the straight path; a lateral detour of 1 m or
        // more clears it.
        let snapshot = wall(4.0, &[-0.4, 0.0, 0.4], &[0.6, 1.0, 1.4]);
        let req = request(
            State::at_rest(Vec3::new(0.0, 0.0, 1.0)),
            Vec3::new(8.0, 0.0, 1.0),
            snapshot,
        );
        match plan(&req, &PlannerConfig::default(), 3) {
            PlanOutcome::Candidate { traj, avoided } => {
                verify(&req, &traj);
                assert!(!avoided.is_empty());
                let max_off = (0..=400)
                    .map(|k| traj.evaluate(1.0 + k as f64 * 0.01, 0))
                    .map(|p| p.y.abs().max((p.z - 1.0).abs()))
                    .fold(0.0, f64::max);
                assert!(max_off > 0.5);
            }
            PlanOutcome::Infeasible { .. } => panic!("detour expected"),
        }
    }

    #[test]
    fn enclosed_agent_is_infeasible() {
        // Hovering neighbours overlapping the start box block every layout,
        // including the stop-and-hover fallback.
        let snapshot = wall(0.1, &[0.0], &[1.0]);
        let req = request(
            State::at_rest(Vec3::new(0.0, 0.0, 1.0)),
            Vec3::new(8.0, 0.0, 1.0),
            snapshot,
        );
        assert!(matches!(
            plan(&req, &PlannerConfig::default(), 4),
            PlanOutcome::Infeasible { .. }
        ));
    }

    #[test]
    fn same_seed_same_candidate() {
        let snapshot = wall(4.0, &[-0.4, 0.0, 0.4], &[0.6, 1.0, 1.4]);
        let req = request(
            State::at_rest(Vec3::new(0.0, 0.0, 1.0)),
            Vec3::new(8.0, 0.0, 1.0),
            snapshot,
        );
        let cfg = PlannerConfig::default();
        assert_eq!(plan(&req, &cfg, 9), plan(&req, &cfg, 9));
    }

    #[test]
    fn hover_plan_is_trivial() {
        let p = Vec3::new(1.0, 1.0, 1.0);
        let h = hover_plan(AgentId(0), p, 2.0);
        for t in [0.0, 2.0, 50.0] {
            assert_eq!(h.evaluate(t, 0), p);
        }
        assert!(check_dynamic_limits(&h, &DynamicLimits::default()).is_empty());
        assert_eq!(continuity_gap(&h, &h, 2.5), (0.0, 0.0, 0.0));
    }
}
