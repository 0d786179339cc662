use serde::{Deserialize, Serialize};

use super::cuboid::{box_corners, EDGES};
use super::Vec3;
use crate::model::{Box3D, CameraCalibration};

/// Points at or closer than this depth (camera z, meters) are not projected.
pub const NEAR_CLIP: f64 = 0.1;

/// Pixel coordinates `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

/// A projected wireframe edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Pixel,
    pub end: Pixel,
}

/// Pinhole model applied to a point already in the camera frame. No depth
/// check; callers guarantee `z > 0`.
pub fn pinhole(cam: &CameraCalibration, p_cam: &Vec3) -> Pixel {
    let k = &cam.intrinsic;
    Pixel {
        u: k.fx * p_cam.x / p_cam.z + k.cx,
        v: k.fy * p_cam.y / p_cam.z + k.cy,
    }
}

/// Projects an ego-frame point into `cam`. Off-image pixels are returned
/// unclamped; points at or behind the near plane yield `None`.
pub fn project_point(cam: &CameraCalibration, p_ego: &Vec3) -> Option<Pixel> {
    let p_cam = cam.extrinsic.apply(p_ego);
    (p_cam.z > NEAR_CLIP).then(|| pinhole(cam, &p_cam))
}

/// Clips the camera-frame segment `a`–`b` to `z ≥ NEAR_CLIP`.
///
/// Returns `None` when the whole edge lies at or behind the near plane.
pub fn clip_to_near_plane(a: Vec3, b: Vec3) -> Option<(Vec3, Vec3)> {
    let a_in = a.z > NEAR_CLIP;
    let b_in = b.z > NEAR_CLIP;
    match (a_in, b_in) {
        (true, true) => Some((a, b)),
        (false, false) => None,
        _ => {
            let t = (NEAR_CLIP - a.z) / (b.z - a.z);
            let mut cut = a + (b - a) * t;
            cut.z = NEAR_CLIP;
            if a_in {
                Some((a, cut))
            } else {
                Some((cut, b))
            }
        }
    }
}

/// The box's 12 edges in `cam`'s image, clipped at the near plane.
///
/// Edges are emitted in [`EDGES`] order, skipping those entirely behind the
/// near plane.
pub fn project_box_wireframe(cam: &CameraCalibration, b: &Box3D) -> Vec<Segment> {
    let corners = box_corners(b);
    let cam_corners: Vec<Vec3> = corners.iter().map(|c| cam.extrinsic.apply(c)).collect();
    EDGES
        .iter()
        .filter_map(|&(i, j)| {
            let (a, b) = clip_to_near_plane(cam_corners[i], cam_corners[j])?;
            Some(Segment {
                start: pinhole(cam, &a),
                end: pinhole(cam, &b),
            })
        })
        .collect()
}
