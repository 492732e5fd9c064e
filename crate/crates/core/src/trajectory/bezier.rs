use super::{Segment, Vec3};

fn lerp(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    a + (b - a) * s
}

/// Blossom of a cubic evaluated at `(u1, u2, u3)`.
fn blossom(seg: &Segment, u1: f64, u2: f64, u3: f64) -> Vec3 {
    let a = [
        lerp(seg[0], seg[1], u1),
        lerp(seg[1], seg[2], u1),
        lerp(seg[2], seg[3], u1),
    ];
    let b = [lerp(a[0], a[1], u2), lerp(a[1], a[2], u2)];
    lerp(b[0], b[1], u3)
}

/// Derivative of order `order` with respect to the local parameter `s`.
pub(crate) fn eval_derivative(seg: &Segment, s: f64, order: usize) -> Vec3 {
    let [p0, p1, p2, p3] = *seg;
    match order {
        0 => blossom(seg, s, s, s),
        1 => {
            let (d0, d1, d2) = (p1 - p0, p2 - p1, p3 - p2);
            lerp(lerp(d0, d1, s), lerp(d1, d2, s), s) * 3.0
        }
        2 => lerp(p2 - p1 * 2.0 + p0, p3 - p2 * 2.0 + p1, s) * 6.0,
        3 => (p3 - p2 * 3.0 + p1 * 3.0 - p0) * 6.0,
        _ => Vec3::zeros(),
    }
}

/// Control points of the same cubic reparameterized over `[s0, s1]`.
pub fn sub_segment(seg: &Segment, s0: f64, s1: f64) -> Segment {
    [
        blossom(seg, s0, s0, s0),
        blossom(seg, s0, s0, s1),
        blossom(seg, s0, s1, s1),
        blossom(seg, s1, s1, s1),
    ]
}

/// De Casteljau split at local parameter `s`.
pub fn split_cubic(seg: &Segment, s: f64) -> (Segment, Segment) {
    (sub_segment(seg, 0.0, s), sub_segment(seg, s, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_halves_meet_the_curve() {
        let seg = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 2.0, 0.0),
            Vec3::new(3.0, -1.0, 1.0),
            Vec3::new(4.0, 0.0, 2.0),
        ];
        let (l, r) = split_cubic(&seg, 0.3);
        assert!((l[3] - eval_derivative(&seg, 0.3, 0)).norm() < 1e-12);
        assert_eq!(l[3], r[0]);
        for k in 0..=10 {
            let u = k as f64 / 10.0;
            let on_left = eval_derivative(&l, u, 0);
            let direct = eval_derivative(&seg, 0.3 * u, 0);
            assert!((on_left - direct).norm() < 1e-12);
        }
    }
}
