//! Planar geometry: ray casting against segments and separating-axis overlap tests.

use serde::{Deserialize, Serialize};

use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
    pub fn from_angle(a: T) -> Self {
        Self::new(a.cos(), a.sin())
    }
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }
    pub fn rotate(self, a: T) -> Self {
        let (s, c) = a.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }
    pub fn scale(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl<T: Real> std::ops::Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> std::ops::Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub a: Vec2<T>,
    pub b: Vec2<T>,
}

impl<T: Real> Segment<T> {
    pub fn new(a: Vec2<T>, b: Vec2<T>) -> Self {
        Self { a, b }
    }
}

/// Distance along the ray `origin + t * dir` (unit `dir`) to the segment, if hit with `t >= 0`.
pub fn ray_segment<T>(origin: Vec2<T>, dir: Vec2<T>, seg: &Segment<T>) -> Option<T>
where
    T: Real,
{
    let e = seg.b - seg.a;
    let denom = dir.cross(e);
    if denom == T::zero() {
        return None;
    }
    let w = seg.a - origin;
    let t = w.cross(e) / denom;
    let u = w.cross(dir) / denom;
    if t >= T::zero() && u >= T::zero() && u <= T::one() {
        Some(t)
    } else {
        None
    }
}

/// Oriented rectangle given by center, half extents and yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect<T> {
    pub center: Vec2<T>,
    pub half: Vec2<T>,
    pub yaw: T,
}

impl<T: Real> OrientedRect<T> {
    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2<T>; 4] {
        let (hx, hy) = (self.half.x, self.half.y);
        [
            Vec2::new(hx, hy),
            Vec2::new(-hx, hy),
            Vec2::new(-hx, -hy),
            Vec2::new(hx, -hy),
        ]
        .map(|c| self.center + c.rotate(self.yaw))
    }

    pub fn edges(&self) -> [Segment<T>; 4] {
        let c = self.corners();
        [
            Segment::new(c[0], c[1]),
            Segment::new(c[1], c[2]),
            Segment::new(c[2], c[3]),
            Segment::new(c[3], c[0]),
        ]
    }
}

fn project<T: Real>(pts: &[Vec2<T>], axis: Vec2<T>) -> (T, T) {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for p in pts {
        let d = p.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Separating-axis test between two convex point sets (closed: touching overlaps).
///
/// `axes_a` / `axes_b` are the edge normals worth testing for each shape.
fn sat_overlap<T: Real>(a: &[Vec2<T>], b: &[Vec2<T>], axes: &[Vec2<T>]) -> bool {
    for &axis in axes {
        if axis.x == T::zero() && axis.y == T::zero() {
            continue;
        }
        let (a0, a1) = project(a, axis);
        let (b0, b1) = project(b, axis);
        if a1 < b0 || b1 < a0 {
            return false;
        }
    }
    true
}

pub fn rect_rect_overlap<T: Real>(a: &OrientedRect<T>, b: &OrientedRect<T>) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let axes = [
        Vec2::from_angle(a.yaw),
        Vec2::from_angle(a.yaw).perp(),
        Vec2::from_angle(b.yaw),
        Vec2::from_angle(b.yaw).perp(),
    ];
    sat_overlap(&ca, &cb, &axes)
}

pub fn rect_segment_overlap<T: Real>(r: &OrientedRect<T>, s: &Segment<T>) -> bool {
    let cr = r.corners();
    let pts = [s.a, s.b];
    let axes = [
        Vec2::from_angle(r.yaw),
        Vec2::from_angle(r.yaw).perp(),
        (s.b - s.a).perp(),
    ];
    sat_overlap(&cr, &pts, &axes)
}

/// Closed point-in-convex-polygon test for counter-clockwise vertices.
pub fn point_in_convex<T: Real>(p: Vec2<T>, poly: &[Vec2<T>]) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        (b - a).cross(p - a) >= T::zero()
    })
}
