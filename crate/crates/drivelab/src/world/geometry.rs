//! Planar geometric primitives: vectors, poses, oriented boxes, and the
//! intersection tests the rest of the crate is built on.

use serde::{Deserialize, Serialize};

/// 2D point / vector in meters. The world frame is right-handed with
/// x pointing east and y pointing north.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product; positive when `o` is to the left of `self`.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            Vec2::new(self.x / n, self.y / n)
        } else {
            Vec2::ZERO
        }
    }

    /// Rotated 90° counterclockwise.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        Vec2::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Position plus heading (radians, counterclockwise from +x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose {
            position: Vec2::new(x, y),
            yaw,
        }
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::new(self.yaw.cos(), self.yaw.sin())
    }

    /// World point expressed in this pose's frame: +y forward, +x right.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let d = p - self.position;
        let fwd = d.dot(self.heading());
        let left = d.dot(self.heading().perp());
        Vec2::new(-left, fwd)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % std::f64::consts::TAU;
    if r <= -std::f64::consts::PI {
        r += std::f64::consts::TAU;
    } else if r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    }
    r
}

/// Oriented box footprint: center, yaw and half extents (half length along
/// the local x axis, half width along local y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec2,
    pub yaw: f64,
    pub half_extent: Vec2,
}

impl OrientedBox {
    pub fn new(center: Vec2, yaw: f64, half_len: f64, half_width: f64) -> Self {
        OrientedBox {
            center,
            yaw,
            half_extent: Vec2::new(half_len, half_width),
        }
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let axis_x = Vec2::new(self.yaw.cos(), self.yaw.sin());
        let axis_y = axis_x.perp();
        let ex = axis_x * self.half_extent.x;
        let ey = axis_y * self.half_extent.y;
        [
            self.center + ex + ey,
            self.center + ex - ey,
            self.center - ex - ey,
            self.center - ex + ey,
        ]
    }

    /// Box grown (or shrunk, for negative `d`) by `d` on each half extent.
    pub fn inflated(&self, d: f64) -> OrientedBox {
        OrientedBox {
            center: self.center,
            yaw: self.yaw,
            half_extent: Vec2::new(
                (self.half_extent.x + d).max(1e-9),
                (self.half_extent.y + d).max(1e-9),
            ),
        }
    }

    /// Half extents multiplied by `k` (collision-check inflation).
    pub fn scaled(&self, k: f64) -> OrientedBox {
        OrientedBox {
            center: self.center,
            yaw: self.yaw,
            half_extent: self.half_extent * k,
        }
    }

    /// World point in box-local coordinates (axes along length/width).
    fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.center).rotated(-self.yaw)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let q = self.to_local(p);
        q.x.abs() <= self.half_extent.x && q.y.abs() <= self.half_extent.y
    }
}

/// Separating-axis overlap test for two oriented boxes. Touching counts as
/// overlap.
pub fn obb_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let axes = [
        Vec2::new(a.yaw.cos(), a.yaw.sin()),
        Vec2::new(a.yaw.cos(), a.yaw.sin()).perp(),
        Vec2::new(b.yaw.cos(), b.yaw.sin()),
        Vec2::new(b.yaw.cos(), b.yaw.sin()).perp(),
    ];
    for axis in axes {
        let (mut min_a, mut max_a) = (f64::MAX, f64::MIN);
        for p in ca {
            let q = p.dot(axis);
            min_a = min_a.min(q);
            max_a = max_a.max(q);
        }
        let (mut min_b, mut max_b) = (f64::MAX, f64::MIN);
        for p in cb {
            let q = p.dot(axis);
            min_b = min_b.min(q);
            max_b = max_b.max(q);
        }
        if max_a < min_b || max_b < min_a {
            return false;
        }
    }
    true
}

/// True iff the closed segment [p0, p1] intersects the box footprint.
///
/// Works in box-local coordinates with a slab test, so a segment fully inside
/// the box reports a hit.
pub fn segment_hits_box(p0: Vec2, p1: Vec2, boxx: &OrientedBox) -> bool {
    let a = boxx.to_local(p0);
    let b = boxx.to_local(p1);
    let d = b - a;
    let (mut t_min, mut t_max) = (0.0f64, 1.0f64);
    for (origin, dir, half) in [
        (a.x, d.x, boxx.half_extent.x),
        (a.y, d.y, boxx.half_extent.y),
    ] {
        if dir.abs() < 1e-12 {
            if origin.abs() > half {
                return false;
            }
        } else {
            let mut t0 = (-half - origin) / dir;
            let mut t1 = (half - origin) / dir;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_min = t_min.max(t0);
            t_max = t_max.min(t1);
            if t_min > t_max {
                return false;
            }
        }
    }
    true
}

/// Closest point on segment [a, b] to `p`, returned as the clamped parameter t.
pub fn segment_param(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= 0.0 {
        return 0.0;
    }
    ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obb_overlap_identical_boxes() {
        let b = OrientedBox::new(Vec2::new(1.0, 2.0), 0.3, 2.0, 1.0);
        assert!(obb_overlap(&b, &b));
    }

    #[test]
    fn obb_overlap_distant_boxes() {
        let a = OrientedBox::new(Vec2::ZERO, 0.0, 0.5, 0.5);
        let b = OrientedBox::new(Vec2::new(10.0, 0.0), 0.0, 0.5, 0.5);
        assert!(!obb_overlap(&a, &b));
    }

    #[test]
    fn obb_overlap_rotated_near_miss() {
        // Diamond next to a square: AABBs overlap, boxes do not.
        let a = OrientedBox::new(Vec2::ZERO, 0.0, 1.0, 1.0);
        let b = OrientedBox::new(
            Vec2::new(2.5, 0.0),
            std::f64::consts::FRAC_PI_4,
            1.0,
            1.0,
        );
        assert!(!obb_overlap(&a, &b));
        let c = OrientedBox::new(
            Vec2::new(2.3, 0.0),
            std::f64::consts::FRAC_PI_4,
            1.0,
            1.0,
        );
        assert!(obb_overlap(&a, &c));
    }

    #[test]
    fn segment_inside_box_hits() {
        let b = OrientedBox::new(Vec2::ZERO, 0.0, 2.0, 2.0);
        assert!(segment_hits_box(
            Vec2::new(-0.5, 0.1),
            Vec2::new(0.5, -0.1),
            &b
        ));
    }

    #[test]
    fn segment_parallel_outside_misses() {
        let b = OrientedBox::new(Vec2::ZERO, 0.0, 2.0, 1.0);
        // Parallel to the long edge, 1 m beyond it.
        assert!(!segment_hits_box(
            Vec2::new(-5.0, 2.0),
            Vec2::new(5.0, 2.0),
            &b
        ));
    }

    #[test]
    fn segment_crossing_hits() {
        let b = OrientedBox::new(Vec2::new(3.0, 3.0), 0.7, 1.0, 0.5);
        assert!(segment_hits_box(Vec2::ZERO, Vec2::new(6.0, 6.0), &b));
    }

    #[test]
    fn wrap_angle_range() {
        for k in -10..10 {
            let a = 0.7 + k as f64 * std::f64::consts::TAU;
            assert!((wrap_angle(a) - 0.7).abs() < 1e-9);
        }
        assert!((wrap_angle(std::f64::consts::PI + 0.1) + std::f64::consts::PI - 0.1).abs() < 1e-9);
    }

    #[test]
    fn local_frame_orientation() {
        let pose = Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2); // facing +y
        let ahead = pose.to_local(Vec2::new(0.0, 5.0));
        assert!((ahead.x).abs() < 1e-12 && (ahead.y - 5.0).abs() < 1e-12);
        let right = pose.to_local(Vec2::new(3.0, 0.0));
        assert!((right.x - 3.0).abs() < 1e-12 && right.y.abs() < 1e-12);
    }
}
