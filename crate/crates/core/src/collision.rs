//! Conservative continuous-time conflict checks between boxed trajectories.
//!
//! Two agents overlap at time `t` when `|Δcenter_k(t)| < hA_k + hB_k` on all
//! three axes. Over a window shared by one Bézier piece of each trajectory the
//! relative position `B(t) − A(t)` is itself a cubic Bézier whose control points
//! are the pairwise differences, so it stays inside their convex hull. If that
//! hull misses the combined box, the pieces cannot overlap anywhere in the
//! window. Windows that cannot be proven separated are bisected down to
//! [`BISECTION_FLOOR`] and then reported as conflicts.

use crate::deconfliction::StoreSnapshot;
use crate::trajectory::{AgentBox, Segment, TrajectorySpline, Vec3};
use crate::AgentId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest window width that is still bisected (s).
pub const BISECTION_FLOOR: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("degenerate check window [{0}, {1}]")]
    DegenerateWindow(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub in_conflict: bool,
    pub first_overlap_time: Option<f64>,
    /// Signed box-metric margin (m); negative means penetration.
    pub min_margin: f64,
    pub pair: (AgentId, AgentId),
    /// Publication counters of the two trajectories, in `pair` order.
    pub seqs: (u64, u64),
}

impl ConflictReport {
    pub fn clean(pair: (AgentId, AgentId)) -> Self {
        Self {
            in_conflict: false,
            first_overlap_time: None,
            min_margin: f64::INFINITY,
            pair,
            seqs: (0, 0),
        }
    }
}

/// Box-metric margin of a relative position: the largest per-axis clearance.
pub fn box_margin(delta: &Vec3, combined: &Vec3) -> f64 {
    (0..3)
        .map(|k| delta[k].abs() - combined[k])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Lower bound on the margin over the hull of `diff`, from its bounding box.
fn hull_margin_bound(diff: &Segment, combined: &Vec3) -> f64 {
    (0..3)
        .map(|k| {
            let lo = diff.iter().map(|d| d[k]).fold(f64::INFINITY, f64::min);
            let hi = diff.iter().map(|d| d[k]).fold(f64::NEG_INFINITY, f64::max);
            (lo - combined[k]).max(-combined[k] - hi)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn separated_along(diff: &Segment, combined: &Vec3, n: &Vec3) -> bool {
    let r = combined.x * n.x.abs() + combined.y * n.y.abs() + combined.z * n.z.abs();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in diff {
        let s = d.dot(n);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    lo >= r || hi <= -r
}

fn diff_separated(diff: &Segment, combined: &Vec3) -> bool {
    if hull_margin_bound(diff, combined) >= 0.0 {
        return true;
    }
    const AXES: [Vec3; 3] = [
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    let mut edges = [Vec3::zeros(); 6];
    let mut k = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            edges[k] = diff[j] - diff[i];
            k += 1;
        }
    }
    let try_normal = |n: Vec3| n.norm_squared() > 1e-20 && separated_along(diff, combined, &n);
    for (i, e) in edges.iter().enumerate() {
        if AXES.iter().any(|ax| try_normal(e.cross(ax))) {
            return true;
        }
        if edges[i + 1..].iter().any(|f| try_normal(e.cross(f))) {
            return true;
        }
    }
    false
}

/// True only if the two pieces, defined on the same time window, cannot
/// overlap anywhere in it under the combined box.
pub fn segment_separated(ctrl_a: &Segment, ctrl_b: &Segment, combined: &AgentBox) -> bool {
    let diff = std::array::from_fn(|i| ctrl_b[i] - ctrl_a[i]);
    diff_separated(&diff, &combined.half_extents)
}

enum Leaf {
    Clear(f64),
    Unresolved { start: f64, margin: f64 },
}

fn resolve(a: &TrajectorySpline, b: &TrajectorySpline, combined: &Vec3, t0: f64, t1: f64) -> Leaf {
    let pa = a.piece(t0, t1);
    let pb = b.piece(t0, t1);
    let diff: Segment = std::array::from_fn(|i| pb[i] - pa[i]);
    let mid = (diff[0] + diff[1] * 3.0 + diff[2] * 3.0 + diff[3]) / 8.0;
    let sampled = box_margin(&diff[0], combined)
        .min(box_margin(&mid, combined))
        .min(box_margin(&diff[3], combined));
    if diff_separated(&diff, combined) {
        return Leaf::Clear(sampled);
    }
    if t1 - t0 <= BISECTION_FLOOR {
        return Leaf::Unresolved {
            start: t0,
            margin: sampled.min(hull_margin_bound(&diff, combined)),
        };
    }
    let tm = 0.5 * (t0 + t1);
    match resolve(a, b, combined, t0, tm) {
        Leaf::Clear(m1) => match resolve(a, b, combined, tm, t1) {
            Leaf::Clear(m2) => Leaf::Clear(m1.min(m2)),
            Leaf::Unresolved { start, margin } => Leaf::Unresolved {
                start,
                margin: margin.min(m1),
            },
        },
        unresolved => unresolved,
    }
}

/// Checks two trajectories over `window`, clamping each beyond its domain.
pub fn check_pair(
    traj_a: &TrajectorySpline,
    traj_b: &TrajectorySpline,
    box_a: &AgentBox,
    box_b: &AgentBox,
    window: (f64, f64),
) -> Result<ConflictReport, CollisionError> {
    let (t0, t1) = window;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(CollisionError::DegenerateWindow(t0, t1));
    }
    let combined = box_a.combined(box_b);
    let mut cuts: Vec<f64> = traj_a
        .knots()
        .iter()
        .chain(traj_b.knots())
        .copied()
        .filter(|k| *k > t0 && *k < t1)
        .collect();
    cuts.push(t0);
    cuts.push(t1);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let mut report = ConflictReport {
        pair: (traj_a.owner(), traj_b.owner()),
        seqs: (traj_a.seq(), traj_b.seq()),
        ..ConflictReport::clean((traj_a.owner(), traj_b.owner()))
    };
    for w in cuts.windows(2) {
        match resolve(traj_a, traj_b, &combined, w[0], w[1]) {
            Leaf::Clear(m) => report.min_margin = report.min_margin.min(m),
            Leaf::Unresolved { start, margin } => {
                report.in_conflict = true;
                report.first_overlap_time = Some(start);
                report.min_margin = report.min_margin.min(margin);
                return Ok(report);
            }
        }
    }
    Ok(report)
}

/// Window used for store checks: from `t_from` until both trajectories have
/// come to their final clamped state.
pub fn store_window(a: &TrajectorySpline, b: &TrajectorySpline, t_from: f64) -> (f64, f64) {
    let end = a.end_time().max(b.end_time());
    (t_from, end.max(t_from + BISECTION_FLOOR))
}

/// Box sizes applied when checking against stored trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRules {
    pub own: AgentBox,
    pub peer: AgentBox,
    pub obstacle: AgentBox,
}

/// Checks `candidate` against one trajectory from a store.
pub fn check_entry(
    candidate: &TrajectorySpline,
    entry: &TrajectorySpline,
    own: &AgentBox,
    other: &AgentBox,
    t_from: f64,
) -> ConflictReport {
    check_pair(candidate, entry, own, other, store_window(candidate, entry, t_from))
        .expect("store window is never degenerate")
}

/// Checks `candidate` against every peer comm and opt entry and every
/// obstacle in the snapshot. Returns the first conflict, or a clean report
/// carrying the smallest margin seen.
pub fn check_against_store(
    candidate: &TrajectorySpline,
    store: &StoreSnapshot,
    rules: &BoxRules,
    t_from: f64,
) -> ConflictReport {
    let mut clean = ConflictReport::clean((candidate.owner(), candidate.owner()));
    for (entry, is_obstacle) in store.entries() {
        let other = if is_obstacle { &rules.obstacle } else { &rules.peer };
        let r = check_entry(candidate, entry, &rules.own, other, t_from);
        if r.in_conflict {
            return r;
        }
        if r.min_margin < clean.min_margin {
            clean.min_margin = r.min_margin;
            clean.pair = r.pair;
            clean.seqs = r.seqs;
        }
    }
    clean
}
