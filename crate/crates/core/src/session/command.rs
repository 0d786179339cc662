use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::filter::BoxSource;
use crate::geometry::{DragError, Quaternion};
use crate::model::{Box3D, Size};
use crate::Vec3;

/// A mutation of the working annotation set.
///
/// `ModifyBox` replaces the given fields with the supplied values; omitted
/// fields keep their current value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EditCommand {
    AddBox {
        frame_id: String,
        /// An empty `instance_id` is replaced with a fresh random id.
        #[serde(rename = "box")]
        new_box: Box3D,
    },
    DeleteBox {
        frame_id: String,
        instance_id: String,
    },
    ModifyBox {
        frame_id: String,
        instance_id: String,
        #[serde(default)]
        source: BoxSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec3>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        size: Option<Size>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rotation: Option<Quaternion>,
    },
    Relabel {
        frame_id: String,
        instance_id: String,
        #[serde(default)]
        source: BoxSource,
        category: String,
    },
    AddCategory {
        label: String,
    },
}

impl EditCommand {
    pub fn frame_id(&self) -> Option<&str> {
        match self {
            EditCommand::AddBox { frame_id, .. }
            | EditCommand::DeleteBox { frame_id, .. }
            | EditCommand::ModifyBox { frame_id, .. }
            | EditCommand::Relabel { frame_id, .. } => Some(frame_id),
            EditCommand::AddCategory { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EditError {
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("unknown box '{instance_id}' in frame '{frame_id}'")]
    UnknownBox {
        frame_id: String,
        instance_id: String,
    },
    #[error("unknown prediction set '{0}'")]
    UnknownPredictionSet(String),
    #[error("size must be positive and finite, got ({}, {}, {})", .0.length, .0.width, .0.height)]
    InvalidSize(Size),
    #[error("invalid {field}: {reason}")]
    InvalidValue { field: &'static str, reason: String },
    #[error("unknown category '{0}'")]
    UnknownCategory(String),
    #[error("category '{0}' already exists")]
    DuplicateCategory(String),
    #[error("category label must not be empty")]
    EmptyCategory,
    #[error("instance id '{0}' already exists in this frame")]
    DuplicateInstanceId(String),
    #[error("ground-truth boxes cannot carry a confidence")]
    ConfidenceOnGroundTruth,
    #[error("{action} is not available in {mode} mode")]
    WrongMode {
        action: &'static str,
        mode: &'static str,
    },
    #[error(transparent)]
    Drag(#[from] DragError),
}

impl EditError {
    /// Whether the error names something that does not exist, as opposed to
    /// a malformed request.
    pub fn is_not_found(&self) -> bool {
        matches!(
            self,
            EditError::UnknownFrame(_)
                | EditError::UnknownBox { .. }
                | EditError::UnknownPredictionSet(_)
        )
    }
}
