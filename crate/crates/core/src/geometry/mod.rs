//! Rigid-body math, cuboid geometry, pinhole projection and drag handling.
//!
//! Frames are right-handed; the ego frame has x forward, y left, z up.
//! Angles are radians.

mod camera;
mod cuboid;
mod drag;
mod pose;
mod quaternion;

pub use camera::{
    clip_to_near_plane, pinhole, project_box_wireframe, project_point, Pixel, Segment, NEAR_CLIP,
};
pub use cuboid::{
    box_corners, corner_signs, point_in_box, ray_box_intersect, rotate_about_z, CornerSet, Ray,
    EDGES, SLAB_EPSILON,
};
pub use drag::{drag_horizontal, drag_vertical, DragError};
pub use pose::SE3Pose;
pub use quaternion::{normalize_angle, Quaternion, UNIT_NORM_TOLERANCE};

pub type Vec3 = nalgebra::Vector3<f64>;
