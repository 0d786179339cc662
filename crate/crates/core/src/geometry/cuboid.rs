use serde::{Deserialize, Serialize};

use super::{Quaternion, Vec3};
use crate::model::Box3D;

/// Slabs whose direction component falls below this are treated as parallel.
pub const SLAB_EPSILON: f64 = 1e-12;

/// The twelve cuboid edges as pairs of corner indices.
///
/// Corner index bits select the sign along each box-local axis:
/// bit0 → x (length), bit1 → y (width), bit2 → z (height); a set bit is `−`.
pub const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Eight corners of a box in canonical bit order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerSet(pub [Vec3; 8]);

impl CornerSet {
    pub fn centroid(&self) -> Vec3 {
        self.0.iter().fold(Vec3::zeros(), |acc, c| acc + c) / 8.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec3> {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for CornerSet {
    type Output = Vec3;

    fn index(&self, i: usize) -> &Vec3 {
        &self.0[i]
    }
}

/// Box-local sign pattern of corner `index`.
pub fn corner_signs(index: usize) -> Vec3 {
    let sign = |bit: usize| if index & (1 << bit) == 0 { 1.0 } else { -1.0 };
    Vec3::new(sign(0), sign(1), sign(2))
}

pub fn box_corners(b: &Box3D) -> CornerSet {
    let half = b.size.half_extents();
    let mut corners = [Vec3::zeros(); 8];
    for (i, corner) in corners.iter_mut().enumerate() {
        let local = corner_signs(i).component_mul(&half);
        *corner = b.center + b.rotation.rotate(&local);
    }
    CornerSet(corners)
}

fn to_local(b: &Box3D, p: &Vec3) -> Vec3 {
    b.rotation.inverse().rotate(&(p - b.center))
}

/// Boundary-inclusive containment test in the box-local frame.
pub fn point_in_box(b: &Box3D, p: &Vec3) -> bool {
    let local = to_local(b, p);
    let half = b.size.half_extents();
    (0..3).all(|i| local[i].abs() <= half[i])
}

/// Half-line `origin + t·direction`, `t ≥ 0`, with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; `None` if it is zero or non-finite.
    pub fn new(origin: Vec3, direction: Vec3) -> Option<Self> {
        let n = direction.norm();
        if n == 0.0 || !n.is_finite() || !origin.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(Self {
            origin,
            direction: direction / n,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    pub fn is_unit(&self, tolerance: f64) -> bool {
        (self.direction.norm() - 1.0).abs() <= tolerance
    }
}

/// Distance along `ray` to where it enters `b` (slab method).
///
/// A ray starting inside the box hits at `t = 0`.
pub fn ray_box_intersect(ray: &Ray, b: &Box3D) -> Option<f64> {
    let inv = b.rotation.inverse();
    let origin = inv.rotate(&(ray.origin - b.center));
    let dir = inv.rotate(&ray.direction);
    let half = b.size.half_extents();

    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for axis in 0..3 {
        if dir[axis].abs() < SLAB_EPSILON {
            if origin[axis].abs() > half[axis] {
                return None;
            }
            continue;
        }
        let t1 = (-half[axis] - origin[axis]) / dir[axis];
        let t2 = (half[axis] - origin[axis]) / dir[axis];
        let (near, far) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        t_enter = t_enter.max(near);
        t_exit = t_exit.min(far);
        if t_enter > t_exit {
            return None;
        }
    }
    if t_exit < 0.0 {
        return None;
    }
    Some(t_enter.max(0.0))
}

/// Rotates the box about the vertical axis through its center.
pub fn rotate_about_z(b: &Box3D, delta_yaw: f64) -> Box3D {
    let rotated = Quaternion::from_yaw(delta_yaw) * b.rotation;
    let mut out = b.clone();
    out.rotation = rotated.normalized().unwrap_or(rotated);
    out
}
