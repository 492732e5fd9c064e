use super::{Segment, TrajectoryError, TrajectorySpline, Vec3};
use crate::AgentId;
use serde::{Deserialize, Serialize};

/// A (2,3) torus-knot path: `center + scale ⊙ (sin θ + 2 sin 2θ, cos θ − 2 cos 2θ, −sin 3θ)`
/// with `θ = angular_rate·t + phase`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrefoilParams {
    pub center: Vec3,
    pub scale: Vec3,
    pub angular_rate: f64,
    pub phase: f64,
}

impl TrefoilParams {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !self.scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(TrajectoryError::InvalidTrefoil("scale components must be > 0"));
        }
        if !self.angular_rate.is_finite() || self.angular_rate == 0.0 {
            return Err(TrajectoryError::InvalidTrefoil("angular_rate must be non-zero"));
        }
        if !self.center.iter().all(|c| c.is_finite()) || !self.phase.is_finite() {
            return Err(TrajectoryError::InvalidTrefoil("non-finite center or phase"));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.angular_rate.abs()
    }
}

/// Analytic position (order 0), velocity (1) or acceleration (2).
pub fn trefoil_position(p: &TrefoilParams, t: f64, order: usize) -> Vec3 {
    let w = p.angular_rate;
    let th = w * t + p.phase;
    let (s1, c1) = th.sin_cos();
    let (s2, c2) = (2.0 * th).sin_cos();
    let (s3, c3) = (3.0 * th).sin_cos();
    let shape = match order {
        0 => Vec3::new(s1 + 2.0 * s2, c1 - 2.0 * c2, -s3),
        1 => Vec3::new(c1 + 4.0 * c2, -s1 + 4.0 * s2, -3.0 * c3) * w,
        2 => Vec3::new(-s1 - 8.0 * s2, -c1 + 8.0 * c2, 9.0 * s3) * (w * w),
        _ => panic!("trefoil derivative order {order} not supported"),
    };
    let base = if order == 0 { p.center } else { Vec3::zeros() };
    base + p.scale.component_mul(&shape)
}

/// Fits a C² cubic spline interpolating the trefoil at `n_segments + 1`
/// uniform knots over `[t0, t1]`, with exact end velocities.
pub fn obstacle_as_spline(
    owner: AgentId,
    p: &TrefoilParams,
    t0: f64,
    t1: f64,
    n_segments: usize,
) -> Result<TrajectorySpline, TrajectoryError> {
    p.validate()?;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(TrajectoryError::DegenerateHorizon(t0, t1));
    }
    let n = n_segments.max(1);
    let h = (t1 - t0) / n as f64;
    let knots: Vec<f64> = (0..=n).map(|i| if i == n { t1 } else { t0 + h * i as f64 }).collect();
    let pos: Vec<Vec3> = knots.iter().map(|t| trefoil_position(p, *t, 0)).collect();
    let mut vel = vec![Vec3::zeros(); n + 1];
    vel[0] = trefoil_position(p, t0, 1);
    vel[n] = trefoil_position(p, t1, 1);
    if n >= 2 {
        // Thomas algorithm for v[i-1] + 4 v[i] + v[i+1] = 3 (p[i+1] - p[i-1]) / h.
        let m = n - 1;
        let mut c_prime = vec![0.0; m];
        let mut d_prime = vec![Vec3::zeros(); m];
        for k in 0..m {
            let i = k + 1;
            let mut rhs = (pos[i + 1] - pos[i - 1]) * (3.0 / h);
            if k == 0 {
                rhs -= vel[0];
            }
            if k == m - 1 {
                rhs -= vel[n];
            }
            let denom = if k == 0 { 4.0 } else { 4.0 - c_prime[k - 1] };
            c_prime[k] = 1.0 / denom;
            d_prime[k] = if k == 0 {
                rhs / denom
            } else {
                (rhs - d_prime[k - 1]) / denom
            };
        }
        vel[m] = d_prime[m - 1];
        for k in (0..m - 1).rev() {
            vel[k + 1] = d_prime[k] - vel[k + 2] * c_prime[k];
        }
    }
    let segments: Vec<Segment> = (0..n)
        .map(|i| {
            let hi = knots[i + 1] - knots[i];
            [
                pos[i],
                pos[i] + vel[i] * (hi / 3.0),
                pos[i + 1] - vel[i + 1] * (hi / 3.0),
                pos[i + 1],
            ]
        })
        .collect();
    TrajectorySpline::new(owner, 0, segments, knots, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> TrefoilParams {
        TrefoilParams {
            center: Vec3::zeros(),
            scale: Vec3::new(1.0, 1.0, 1.0),
            angular_rate: 1.0,
            phase: 0.0,
        }
    }

    #[test]
    fn origin_sample() {
        let p = trefoil_position(&unit(), 0.0, 0);
        assert!((p - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn periodic() {
        let p = TrefoilParams {
            center: Vec3::new(1.0, 2.0, 3.0),
            scale: Vec3::new(0.5, 1.5, 0.3),
            angular_rate: -0.7,
            phase: 0.4,
        };
        for k in 0..50 {
            let t = k as f64 * 0.37;
            let d = trefoil_position(&p, t, 0) - trefoil_position(&p, t + p.period(), 0);
            assert!(d.norm() < 1e-9);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = TrefoilParams {
            center: Vec3::new(0.2, 0.0, 1.0),
            scale: Vec3::new(0.8, 1.1, 0.4),
            angular_rate: 1.3,
            phase: 0.9,
        };
        let eps = 1e-6;
        for k in 0..1000 {
            let t = k as f64 * 0.01;
            for order in 0..2 {
                let fd = (trefoil_position(&p, t + eps, order) - trefoil_position(&p, t - eps, order)) / (2.0 * eps);
                let an = trefoil_position(&p, t, order + 1);
                assert!((fd - an).norm() / an.norm().max(1.0) < 1e-6);
            }
        }
    }

    #[test]
    fn fit_error_under_a_centimeter() {
        let p = unit();
        let period = p.period();
        let fit = obstacle_as_spline(AgentId(99), &p, 0.0, period, 32).unwrap();
        let n = (period / 1e-3).ceil() as usize;
        let mut worst: f64 = 0.0;
        for k in 0..=n {
            let t = period * k as f64 / n as f64;
            worst = worst.max((fit.evaluate(t, 0) - trefoil_position(&p, t, 0)).norm());
        }
        assert!(worst <= 0.01, "fit error {worst}");
    }

    #[test]
    fn fit_interpolates_endpoints_exactly() {
        let p = unit();
        let fit = obstacle_as_spline(AgentId(99), &p, 0.5, 3.0, 9).unwrap();
        assert_eq!(fit.evaluate(0.5, 0), trefoil_position(&p, 0.5, 0));
        assert_eq!(fit.evaluate(3.0, 0), trefoil_position(&p, 3.0, 0));
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let mut p = unit();
        assert!(matches!(
            obstacle_as_spline(AgentId(1), &p, 2.0, 2.0, 4),
            Err(TrajectoryError::DegenerateHorizon(..))
        ));
        p.scale = Vec3::zeros();
        assert!(obstacle_as_spline(AgentId(1), &p, 0.0, 1.0, 4).is_err());
        // Stationary obstacles are modelled with a hover spline instead.
        let still = TrajectorySpline::hover(AgentId(1), 0, p.center, 0.0, 1.0);
        let seg = still.segments()[0];
        assert!(seg.iter().all(|q| *q == seg[0]));
        p.scale = Vec3::new(1.0, 1.0, 1.0);
        p.angular_rate = 0.0;
        assert!(obstacle_as_spline(AgentId(1), &p, 0.0, 1.0, 4).is_err());
    }
}
