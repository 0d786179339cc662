//! Constrained mouse drags.
//!
//! Horizontal drags move a box in x/y on the horizontal plane through its
//! center. Vertical drags move it in z on the camera-facing vertical plane
//! through its center.

use thiserror::Error;

use super::cuboid::Ray;
use super::Vec3;
use crate::model::Box3D;

/// Rays with `|direction·normal|` below this cannot be intersected with a plane.
pub const PARALLEL_EPSILON: f64 = 1e-9;

/// Horizontal view components shorter than this give no usable vertical plane.
pub const VERTICAL_VIEW_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DragError {
    #[error("degenerate drag: ray is parallel to the picking plane")]
    DegenerateDrag,
    #[error("degenerate view: view direction is nearly vertical")]
    DegenerateView,
}

fn intersect_plane(ray: &Ray, point: &Vec3, normal: &Vec3) -> Result<Vec3, DragError> {
    let denom = normal.dot(&ray.direction);
    if denom.abs() <= PARALLEL_EPSILON {
        return Err(DragError::DegenerateDrag);
    }
    let t = normal.dot(&(point - ray.origin)) / denom;
    Ok(ray.at(t))
}

/// Translates the box in x/y by the motion of the picked point on the plane
/// `z = center.z`. Height, size and rotation are untouched.
pub fn drag_horizontal(b: &Box3D, grab: &Ray, release: &Ray) -> Result<Box3D, DragError> {
    let normal = Vec3::z();
    let grab_hit = intersect_plane(grab, &b.center, &normal)?;
    let release_hit = intersect_plane(release, &b.center, &normal)?;
    let mut out = b.clone();
    out.center.x = b.center.x + (release_hit.x - grab_hit.x);
    out.center.y = b.center.y + (release_hit.y - grab_hit.y);
    Ok(out)
}

/// Translates the box in z by the motion of the picked point on the vertical
/// plane through the center facing `view_dir`.
pub fn drag_vertical(
    b: &Box3D,
    grab: &Ray,
    release: &Ray,
    view_dir: &Vec3,
) -> Result<Box3D, DragError> {
    let horizontal = Vec3::new(view_dir.x, view_dir.y, 0.0);
    let n = horizontal.norm();
    if n < VERTICAL_VIEW_EPSILON {
        return Err(DragError::DegenerateView);
    }
    let normal = horizontal / n;
    let grab_hit = intersect_plane(grab, &b.center, &normal)?;
    let release_hit = intersect_plane(release, &b.center, &normal)?;
    let mut out = b.clone();
    out.center.z = b.center.z + (release_hit.z - grab_hit.z);
    Ok(out)
}
