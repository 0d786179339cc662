//! Core of the rebound re-annotation toolkit.
//!
//! A driving log is converted into a dataset-agnostic [`model::LogBundle`],
//! stored on disk in the native layout ([`store`]), edited through an
//! undoable [`session::EditSession`], and converted back out through the
//! [`adapters`].

pub mod adapters;
pub mod diff;
pub mod geometry;
pub mod model;
pub mod pointcloud;
pub mod session;
pub mod store;
pub mod validate;

pub use geometry::{Quaternion, Ray, SE3Pose, Vec3};
pub use model::{
    Box3D, CameraCalibration, FrameBoxes, FrameRecord, LogBundle, Size, SourceDataset,
};
