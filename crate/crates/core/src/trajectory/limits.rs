use super::{TrajectoryError, TrajectorySpline};
use serde::{Deserialize, Serialize};

/// Element-wise bounds on velocity, acceleration and jerk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
}

impl DynamicLimits {
    pub fn new(v_max: f64, a_max: f64, j_max: f64) -> Result<Self, TrajectoryError> {
        let lim = Self { v_max, a_max, j_max };
        lim.validate()?;
        Ok(lim)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if [self.v_max, self.a_max, self.j_max]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0)
        {
            Ok(())
        } else {
            Err(TrajectoryError::Other(format!(
                "dynamic limits must be positive: {self:?}"
            )))
        }
    }

    fn for_order(&self, order: usize) -> f64 {
        match order {
            1 => self.v_max,
            2 => self.a_max,
            _ => self.j_max,
        }
    }
}

impl Default for DynamicLimits {
    fn default() -> Self {
        Self {
            v_max: 10.0,
            a_max: 20.0,
            j_max: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitViolation {
    /// 1 = velocity, 2 = acceleration, 3 = jerk.
    pub order: usize,
    pub axis: usize,
    /// Largest control-point bound found for this axis and order.
    pub bound: f64,
    pub limit: f64,
}

/// Per-segment derivative bounds `[order-1][axis]` from the hodograph control
/// points. The curve's derivative lies in their hull, so these bound it
/// everywhere on the segment.
pub(crate) fn derivative_bounds(seg: &super::Segment, h: f64) -> [[f64; 3]; 3] {
    let [p0, p1, p2, p3] = *seg;
    let vel = [(p1 - p0), (p2 - p1), (p3 - p2)].map(|d| d * (3.0 / h));
    let acc = [(p2 - p1 * 2.0 + p0), (p3 - p2 * 2.0 + p1)].map(|d| d * (6.0 / (h * h)));
    let jerk = (p3 - p2 * 3.0 + p1 * 3.0 - p0) * (6.0 / (h * h * h));
    let mut out = [[0.0; 3]; 3];
    for axis in 0..3 {
        out[0][axis] = vel.iter().map(|v| v[axis].abs()).fold(0.0, f64::max);
        out[1][axis] = acc.iter().map(|v| v[axis].abs()).fold(0.0, f64::max);
        out[2][axis] = jerk[axis].abs();
    }
    out
}

/// Reports every (order, axis) whose derivative control points exceed the
/// limit. An empty result proves the limits hold at every instant.
pub fn check_dynamic_limits(traj: &TrajectorySpline, lim: &DynamicLimits) -> Vec<LimitViolation> {
    let mut worst = [[0.0f64; 3]; 3];
    for (i, seg) in traj.segments().iter().enumerate() {
        let h = traj.knots()[i + 1] - traj.knots()[i];
        let b = derivative_bounds(seg, h);
        for o in 0..3 {
            for ax in 0..3 {
                worst[o][ax] = worst[o][ax].max(b[o][ax]);
            }
        }
    }
    let mut out = Vec::new();
    for (o, row) in worst.iter().enumerate() {
        let limit = lim.for_order(o + 1);
        for (axis, bound) in row.iter().enumerate() {
            if *bound > limit {
                out.push(LimitViolation {
                    order: o + 1,
                    axis,
                    bound: *bound,
                    limit,
                });
            }
        }
    }
    out
}

/// Like [`check_dynamic_limits`] but stops at the first violation.
pub(crate) fn within_limits(traj: &TrajectorySpline, lim: &DynamicLimits) -> bool {
    traj.segments().iter().enumerate().all(|(i, seg)| {
        let h = traj.knots()[i + 1] - traj.knots()[i];
        let b = derivative_bounds(seg, h);
        (0..3).all(|o| b[o].iter().all(|x| *x <= lim.for_order(o + 1)))
    })
}
