//! Time-parameterized piecewise cubic trajectories.
//!
//! A [`TrajectorySpline`] is a sequence of cubic Bézier segments joined at
//! strictly increasing absolute knot times. Control points give conservative
//! bounds on position and on every derivative (hull property), which is what
//! the collision checker and the dynamic-limit checker rely on.

mod bezier;
mod limits;
mod trefoil;

pub use bezier::{split_cubic, sub_segment};
pub(crate) use limits::within_limits;
pub use limits::{check_dynamic_limits, DynamicLimits, LimitViolation};
pub use trefoil::{obstacle_as_spline, trefoil_position, TrefoilParams};

use crate::AgentId;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Control points of one cubic Bézier segment.
pub type Segment = [Vec3; 4];

/// Gap tolerance used for the C² and terminal-hover invariants.
pub const CONTINUITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory needs at least one segment")]
    Empty,
    #[error("expected {expected} knots for {segments} segments, got {got}")]
    KnotCount {
        segments: usize,
        expected: usize,
        got: usize,
    },
    #[error("knots must be finite and strictly increasing (index {0})")]
    KnotOrder(usize),
    #[error("non-finite control point in segment {0}")]
    NonFinite(usize),
    #[error("C2 gap at knot {knot}: order {order} differs by {gap:e}")]
    Discontinuous { knot: usize, order: usize, gap: f64 },
    #[error("terminal hover requested but final order-{order} derivative is {value:e}")]
    NotAtRest { order: usize, value: f64 },
    #[error("control point array length {0} is not a multiple of 12")]
    ControlPointLength(usize),
    #[error("degenerate horizon [{0}, {1}]")]
    DegenerateHorizon(f64, f64),
    #[error("invalid trefoil parameters: {0}")]
    InvalidTrefoil(&'static str),
    #[error("{0}")]
    Other(String),
}

/// Box half-extents (m) around an agent or obstacle center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentBox {
    pub half_extents: Vec3,
}

impl AgentBox {
    pub fn new(half_extents: Vec3) -> Result<Self, TrajectoryError> {
        if half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
            Ok(Self { half_extents })
        } else {
            Err(TrajectoryError::Other(format!(
                "box half-extents must be positive, got {:?}",
                half_extents.as_slice()
            )))
        }
    }

    pub fn cube(half: f64) -> Self {
        Self {
            half_extents: Vec3::new(half, half, half),
        }
    }

    /// Half-extents of the Minkowski sum of two boxes.
    pub fn combined(&self, other: &AgentBox) -> Vec3 {
        self.half_extents + other.half_extents
    }

    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            half_extents: self.half_extents.add_scalar(margin),
        }
    }
}

/// Position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
}

impl State {
    pub fn at_rest(p: Vec3) -> Self {
        Self {
            p,
            v: Vec3::zeros(),
            a: Vec3::zeros(),
        }
    }
}

/// A time-parameterized piecewise cubic trajectory in the Bernstein basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRecord", into = "TrajectoryRecord")]
pub struct TrajectorySpline {
    owner: AgentId,
    seq: u64,
    segments: Vec<Segment>,
    knots: Vec<f64>,
    terminal_hover: bool,
}

impl TrajectorySpline {
    /// Builds a spline and validates knot ordering, C² joins and the
    /// terminal-hover condition.
    pub fn new(
        owner: AgentId,
        seq: u64,
        segments: Vec<Segment>,
        knots: Vec<f64>,
        terminal_hover: bool,
    ) -> Result<Self, TrajectoryError> {
        if segments.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if knots.len() != segments.len() + 1 {
            return Err(TrajectoryError::KnotCount {
                segments: segments.len(),
                expected: segments.len() + 1,
                got: knots.len(),
            });
        }
        for (i, k) in knots.iter().enumerate() {
            if !k.is_finite() || (i > 0 && *k <= knots[i - 1]) {
                return Err(TrajectoryError::KnotOrder(i));
            }
        }
        for (i, seg) in segments.iter().enumerate() {
            if seg.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
                return Err(TrajectoryError::NonFinite(i));
            }
        }
        let traj = Self {
            owner,
            seq,
            segments,
            knots,
            terminal_hover,
        };
        for knot in 1..traj.segments.len() {
            let left = traj.segment_end_derivatives(knot - 1);
            let right = traj.segment_start_derivatives(knot);
            for order in 0..3 {
                let gap = (left[order] - right[order]).norm();
                // Relative slack lets long-duration, large-coordinate splines
                // through; the absolute bound dominates at desk scale.
                let scale = 1.0 + left[order].norm().max(right[order].norm());
                if gap > CONTINUITY_TOL * scale {
                    return Err(TrajectoryError::Discontinuous { knot, order, gap });
                }
            }
        }
        if terminal_hover {
            let end = traj.segment_end_derivatives(traj.segments.len() - 1);
            for (order, d) in end.iter().enumerate().take(3).skip(1) {
                let value = d.norm();
                if value > CONTINUITY_TOL {
                    return Err(TrajectoryError::NotAtRest { order, value });
                }
            }
        }
        Ok(traj)
    }

    /// A constant-position trajectory held over `[t0, t1]` and forever after.
    pub fn hover(owner: AgentId, seq: u64, position: Vec3, t0: f64, t1: f64) -> Self {
        let t1 = if t1 > t0 { t1 } else { t0 + 1.0 };
        Self {
            owner,
            seq,
            segments: vec![[position; 4]],
            knots: vec![t0, t1],
            terminal_hover: true,
        }
    }

    pub fn owner(&self) -> AgentId {
        self.owner
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn with_identity(mut self, owner: AgentId, seq: u64) -> Self {
        self.owner = owner;
        self.seq = seq;
        self
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn terminal_hover(&self) -> bool {
        self.terminal_hover
    }

    pub fn start_time(&self) -> f64 {
        self.knots[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.knots.last().expect("validated non-empty")
    }

    pub fn final_position(&self) -> Vec3 {
        self.segments.last().expect("validated non-empty")[3]
    }

    fn duration(&self, i: usize) -> f64 {
        self.knots[i + 1] - self.knots[i]
    }

    /// Index of the segment containing `t`, assuming `t` lies within the knots.
    pub fn segment_index(&self, t: f64) -> usize {
        let n = self.segments.len();
        match self.knots.partition_point(|k| *k <= t) {
            0 => 0,
            i if i > n => n - 1,
            i => i - 1,
        }
    }

    fn segment_start_derivatives(&self, i: usize) -> [Vec3; 3] {
        let [p0, p1, p2, _] = self.segments[i];
        let h = self.duration(i);
        [p0, (p1 - p0) * (3.0 / h), (p2 - p1 * 2.0 + p0) * (6.0 / (h * h))]
    }

    fn segment_end_derivatives(&self, i: usize) -> [Vec3; 3] {
        let [_, p1, p2, p3] = self.segments[i];
        let h = self.duration(i);
        [p3, (p3 - p2) * (3.0 / h), (p3 - p2 * 2.0 + p1) * (6.0 / (h * h))]
    }

    /// Evaluates the order-`order` derivative (0..=3) at absolute time `t`.
    ///
    /// Times before the first knot clamp to the first knot. Times after the
    /// last knot clamp to the last knot, with zero derivatives when the
    /// trajectory ends in hover.
    pub fn evaluate(&self, t: f64, order: usize) -> Vec3 {
        assert!(order <= 3, "derivative order {order} not supported");
        let end = self.end_time();
        if t > end && self.terminal_hover {
            return if order == 0 {
                self.final_position()
            } else {
                Vec3::zeros()
            };
        }
        let t = t.clamp(self.start_time(), end);
        let i = self.segment_index(t);
        let h = self.duration(i);
        let s = ((t - self.knots[i]) / h).clamp(0.0, 1.0);
        bezier::eval_derivative(&self.segments[i], s, order) / h.powi(order as i32)
    }

    pub fn state(&self, t: f64) -> State {
        State {
            p: self.evaluate(t, 0),
            v: self.evaluate(t, 1),
            a: self.evaluate(t, 2),
        }
    }

    /// Bézier control points of the position curve restricted to `[a, b]`.
    ///
    /// `[a, b]` must not straddle a knot. Outside the knot range the curve is
    /// the clamped constant.
    pub fn piece(&self, a: f64, b: f64) -> Segment {
        let (t0, t1) = (self.start_time(), self.end_time());
        if b <= t0 {
            return [self.segments[0][0]; 4];
        }
        if a >= t1 {
            return [self.final_position(); 4];
        }
        let i = self.segment_index(0.5 * (a + b));
        let h = self.duration(i);
        // Windows may overhang a knot or the domain by rounding error only;
        // the polynomial is extended there rather than clamped.
        let s0 = (a - self.knots[i]) / h;
        let s1 = (b - self.knots[i]) / h;
        sub_segment(&self.segments[i], s0, s1)
    }

    /// Segments covering `[a, b]`, split at interior knots. Portions after the
    /// last knot become constant hover segments.
    pub fn restrict(&self, a: f64, b: f64) -> (Vec<Segment>, Vec<f64>) {
        debug_assert!(b > a);
        let mut cuts = vec![a];
        cuts.extend(self.knots.iter().copied().filter(|k| *k > a && *k < b));
        cuts.push(b);
        let mut segments = Vec::with_capacity(cuts.len() - 1);
        let mut knots = Vec::with_capacity(cuts.len());
        knots.push(a);
        for w in cuts.windows(2) {
            if w[1] - w[0] <= 1e-12 {
                continue;
            }
            segments.push(self.piece(w[0], w[1]));
            knots.push(w[1]);
        }
        if segments.is_empty() {
            segments.push(self.piece(a, b));
            knots.push(b);
        }
        (segments, knots)
    }

    /// Joins this trajectory with `tail`, which must start at `t_switch`.
    ///
    /// Whole segments overlapping `[t_from, t_switch)` are kept and only the
    /// one containing `t_switch` is split, so the prefix never gains a
    /// segment shorter than the gap between `t_switch` and its nearest knot.
    /// Past the last knot the prefix holds the final position.
    pub fn splice(
        &self,
        t_from: f64,
        t_switch: f64,
        tail: &TrajectorySpline,
    ) -> Result<TrajectorySpline, TrajectoryError> {
        let mut segments = Vec::new();
        let mut knots = Vec::new();
        let first = self.segment_index(t_from.max(self.start_time()));
        for i in first..self.segments.len() {
            let a = self.knots[i];
            let b = self.knots[i + 1];
            if a >= t_switch {
                break;
            }
            knots.push(a);
            if b <= t_switch {
                segments.push(self.segments[i]);
            } else {
                segments.push(sub_segment(&self.segments[i], 0.0, (t_switch - a) / (b - a)));
                break;
            }
        }
        let end = self.end_time();
        if t_switch - end > 1e-9 && !segments.is_empty() {
            knots.push(end);
            segments.push([self.final_position(); 4]);
        }
        segments.extend_from_slice(&tail.segments);
        knots.extend_from_slice(&tail.knots);
        TrajectorySpline::new(tail.owner, tail.seq, segments, knots, tail.terminal_hover)
    }

    /// Serializes to the flat wire record as JSON.
    pub fn to_wire_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serialization is infallible")
    }

    /// Parses and validates a flat wire record.
    pub fn from_wire_json(bytes: &[u8]) -> Result<Self, TrajectoryError> {
        let record: TrajectoryRecord =
            serde_json::from_slice(bytes).map_err(|e| TrajectoryError::Other(e.to_string()))?;
        Self::try_from(record)
    }
}

/// Euclidean gaps between two trajectories' position, velocity and
/// acceleration at `t_switch`.
pub fn continuity_gap(prev: &TrajectorySpline, next: &TrajectorySpline, t_switch: f64) -> (f64, f64, f64) {
    let d = |order| (prev.evaluate(t_switch, order) - next.evaluate(t_switch, order)).norm();
    (d(0), d(1), d(2))
}

/// Flat wire form: control points are segment-major, then point, then axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub owner: AgentId,
    pub seq: u64,
    pub knots: Vec<f64>,
    pub control_points: Vec<f64>,
    pub terminal_hover: bool,
}

impl From<TrajectorySpline> for TrajectoryRecord {
    fn from(t: TrajectorySpline) -> Self {
        let control_points = t
            .segments
            .iter()
            .flat_map(|seg| seg.iter().flat_map(|p| [p.x, p.y, p.z]))
            .collect();
        Self {
            owner: t.owner,
            seq: t.seq,
            knots: t.knots,
            control_points,
            terminal_hover: t.terminal_hover,
        }
    }
}

impl TryFrom<TrajectoryRecord> for TrajectorySpline {
    type Error = TrajectoryError;

    fn try_from(r: TrajectoryRecord) -> Result<Self, Self::Error> {
        if !r.control_points.len().is_multiple_of(12) {
            return Err(TrajectoryError::ControlPointLength(r.control_points.len()));
        }
        let segments = r
            .control_points
            .chunks_exact(12)
            .map(|c| {
                [
                    Vec3::new(c[0], c[1], c[2]),
                    Vec3::new(c[3], c[4], c[5]),
                    Vec3::new(c[6], c[7], c[8]),
                    Vec3::new(c[9], c[10], c[11]),
                ]
            })
            .collect();
        TrajectorySpline::new(r.owner, r.seq, segments, r.knots, r.terminal_hover)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(a: Vec3, b: Vec3) -> TrajectorySpline {
        let seg = [a, a + (b - a) / 3.0, a + (b - a) * (2.0 / 3.0), b];
        TrajectorySpline::new(AgentId(0), 0, vec![seg], vec![0.0, 1.0], false).unwrap()
    }

    /// Two C² segments built from a uniform cubic B-spline with random
    /// control points.
    pub(crate) fn random_spline(rng: &mut ChaCha8Rng) -> TrajectorySpline {
        let c: Vec<Vec3> = (0..5)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(0.0..3.0),
                )
            })
            .collect();
        let h = rng.gen_range(0.3..1.5);
        let t0 = rng.gen_range(-1.0..1.0);
        let segs = (0..2)
            .map(|i| {
                let (a, b, cc, d) = (c[i], c[i + 1], c[i + 2], c[i + 3]);
                [
                    (a + b * 4.0 + cc) / 6.0,
                    (b * 4.0 + cc * 2.0) / 6.0,
                    (b * 2.0 + cc * 4.0) / 6.0,
                    (b + cc * 4.0 + d) / 6.0,
                ]
            })
            .collect();
        TrajectorySpline::new(AgentId(1), 0, segs, vec![t0, t0 + h, t0 + 2.0 * h], false).unwrap()
    }

    #[test]
    fn constant_curve_evaluates_to_its_point() {
        let p = Vec3::new(1.0, -2.0, 3.0);
        let t = TrajectorySpline::hover(AgentId(0), 0, p, 0.0, 2.0);
        for time in [-5.0, 0.0, 0.7, 2.0, 9.0] {
            assert_eq!(t.evaluate(time, 0), p);
            assert_eq!(t.evaluate(time, 1), Vec3::zeros());
        }
    }

    #[test]
    fn straight_segment_has_constant_velocity() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(2.0, -1.0, 4.0);
        let t = line(a, b);
        assert!((t.evaluate(0.5, 1) - (b - a)).norm() < 1e-12);
        assert!(t.evaluate(0.3, 2).norm() < 1e-12);
    }

    #[test]
    fn velocity_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let traj = random_spline(&mut rng);
        let (t0, t1) = (traj.start_time(), traj.end_time());
        let eps = 1e-6;
        for k in 0..1000 {
            let t = t0 + 1e-4 + (t1 - t0 - 2e-4) * (k as f64 / 999.0);
            for order in 0..3 {
                let fd = (traj.evaluate(t + eps, order) - traj.evaluate(t - eps, order)) / (2.0 * eps);
                let an = traj.evaluate(t, order + 1);
                let scale = an.norm().max(1.0);
                assert!(
                    (fd - an).norm() / scale < 1e-6,
                    "order {order} at t={t}: {fd:?} vs {an:?}"
                );
            }
        }
    }

    #[test]
    fn continuity_gap_identity_and_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let traj = random_spline(&mut rng);
        let tm = 0.5 * (traj.start_time() + traj.end_time());
        assert_eq!(continuity_gap(&traj, &traj, tm), (0.0, 0.0, 0.0));
        let shift = Vec3::new(1.0, 0.0, 0.0);
        let moved = TrajectorySpline::new(
            traj.owner(),
            1,
            traj.segments().iter().map(|s| s.map(|p| p + shift)).collect(),
            traj.knots().to_vec(),
            false,
        )
        .unwrap();
        let (gp, gv, ga) = continuity_gap(&traj, &moved, tm);
        assert!((gp - 1.0).abs() < 1e-12);
        assert!(gv < 1e-12 && ga < 1e-12);
    }

    #[test]
    fn interior_knots_are_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let traj = random_spline(&mut rng);
            let k = traj.knots()[1];
            for order in 0..3 {
                let l = traj.evaluate(k - 1e-13, order);
                let r = traj.evaluate(k, order);
                assert!((l - r).norm() <= 1e-9 * (1.0 + r.norm()) + 1e-9);
            }
        }
    }

    #[test]
    fn hull_contains_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let traj = random_spline(&mut rng);
            for (i, seg) in traj.segments().iter().enumerate() {
                let lo = seg.iter().fold(Vec3::repeat(f64::INFINITY), |m, p| m.inf(p));
                let hi = seg.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |m, p| m.sup(p));
                let (a, b) = (traj.knots()[i], traj.knots()[i + 1]);
                let n = ((b - a) / 1e-3).ceil() as usize;
                for k in 0..=n {
                    let p = traj.evaluate(a + (b - a) * k as f64 / n as f64, 0);
                    for ax in 0..3 {
                        assert!(p[ax] >= lo[ax] - 1e-9 && p[ax] <= hi[ax] + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_knots_and_discontinuity() {
        let p = Vec3::zeros();
        assert_eq!(
            TrajectorySpline::new(AgentId(0), 0, vec![], vec![0.0], false),
            Err(TrajectoryError::Empty)
        );
        assert!(matches!(
            TrajectorySpline::new(AgentId(0), 0, vec![[p; 4]], vec![1.0, 1.0], false),
            Err(TrajectoryError::KnotOrder(1))
        ));
        let q = Vec3::new(1.0, 0.0, 0.0);
        assert!(matches!(
            TrajectorySpline::new(AgentId(0), 0, vec![[p; 4], [q; 4]], vec![0.0, 1.0, 2.0], false),
            Err(TrajectoryError::Discontinuous { knot: 1, order: 0, .. })
        ));
        let moving = [p, q, q * 2.0, q * 3.0];
        assert!(matches!(
            TrajectorySpline::new(AgentId(0), 0, vec![moving], vec![0.0, 1.0], true),
            Err(TrajectoryError::NotAtRest { order: 1, .. })
        ));
    }

    #[test]
    fn restrict_and_splice_preserve_the_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let traj = random_spline(&mut rng);
        let (t0, t1) = (traj.start_time(), traj.end_time());
        let a = t0 + 0.2 * (t1 - t0);
        let b = t0 + 0.9 * (t1 - t0);
        let (segs, knots) = traj.restrict(a, b);
        let part = TrajectorySpline::new(AgentId(1), 0, segs, knots, false).unwrap();
        for k in 0..=100 {
            let t = a + (b - a) * k as f64 / 100.0;
            for order in 0..3 {
                let d = (part.evaluate(t, order) - traj.evaluate(t, order)).norm();
                assert!(d < 1e-9, "order {order} t {t} diff {d}");
            }
        }
    }

    #[test]
    fn wire_record_layout_is_axis_fastest() {
        let seg = [
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(4.0, 5.0, 6.0),
            Vec3::new(7.0, 8.0, 9.0),
            Vec3::new(10.0, 11.0, 12.0),
        ];
        let t = TrajectorySpline::new(AgentId(4), 9, vec![seg], vec![0.0, 2.0], false).unwrap();
        let json = t.to_wire_json();
        assert_eq!(
            json,
            r#"{"owner":4,"seq":9,"knots":[0.0,2.0],"control_points":[1.0,2.0,3.0,4.0,5.0,6.0,7.0,8.0,9.0,10.0,11.0,12.0],"terminal_hover":false}"#
        );
        assert_eq!(TrajectorySpline::from_wire_json(json.as_bytes()).unwrap(), t);
        assert!(TrajectorySpline::from_wire_json(b"{\"owner\":1}").is_err());
    }
}
