use nalgebra::{Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use super::{Quaternion, Vec3};

/// Rigid transform `p ↦ R p + t`.
///
/// A pose named `a→b` maps coordinates expressed in frame `a` into frame `b`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SE3Pose {
    pub translation: Vec3,
    pub rotation: Quaternion,
}

impl SE3Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation: Quaternion::IDENTITY,
        }
    }

    pub fn new(translation: Vec3, rotation: Quaternion) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), Quaternion::IDENTITY)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        Self {
            translation: -rotation.rotate(&self.translation),
            rotation,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SE3Pose) -> Self {
        Self {
            translation: self.rotation.rotate(&other.translation) + self.translation,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation.to_rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Pose of a homogeneous rigid transform; the rotation block is
    /// assumed orthonormal.
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let r = m.fixed_view::<3, 3>(0, 0).into_owned();
        Self {
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
            rotation: Quaternion::from_rotation_matrix(&r),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite()) && self.rotation.is_finite()
    }
}
