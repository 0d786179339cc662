//! Undoable editing of a log's annotations.
//!
//! An [`EditSession`] owns a working copy of one [`LogBundle`]. Every change
//! goes through [`EditSession::apply`], which records enough prior state to
//! undo it exactly. Predictions are never changed in place: modifying or
//! relabeling a prediction copies it into the ground truth.

mod command;
mod filter;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use command::{EditCommand, EditError};
pub use filter::{visible_boxes, BoxSource, FilterSpec, VisibleBox, FAR_FIELD_RANGE_M};

use crate::geometry::{self, Quaternion, Ray};
use crate::model::{new_instance_id, Box3D, FrameBoxes, LogBundle};
use crate::store::{self, StoreError};
use crate::Vec3;

/// Which drag the pointer performs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditMode {
    /// x/y translation with z locked.
    #[default]
    Horizontal,
    /// z translation and rotation about z.
    Vertical,
}

impl EditMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EditMode::Horizontal => "horizontal",
            EditMode::Vertical => "vertical",
        }
    }
}

impl fmt::Display for EditMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub frame_id: String,
    pub instance_id: String,
    pub source: BoxSource,
}

/// Result of a successful pick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pick {
    pub instance_id: String,
    pub source: BoxSource,
    pub t: f64,
}

/// The state change a command made, with what it replaced.
#[derive(Debug, Clone, PartialEq)]
enum Effect {
    Inserted {
        frame_id: String,
        index: usize,
        bbox: Box3D,
    },
    Removed {
        frame_id: String,
        index: usize,
        bbox: Box3D,
    },
    Replaced {
        frame_id: String,
        index: usize,
        before: Box3D,
        after: Box3D,
    },
    CategoryAdded {
        index: usize,
        label: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct HistoryEntry {
    command: EditCommand,
    effect: Effect,
}

#[derive(Debug, Clone)]
pub struct EditSession {
    bundle: LogBundle,
    baseline: FrameBoxes,
    baseline_vocabulary: Vec<String>,
    undo_stack: Vec<HistoryEntry>,
    redo_stack: Vec<HistoryEntry>,
    selection: Option<Selection>,
    filter: FilterSpec,
    dirty_frames: BTreeSet<String>,
    mode: EditMode,
}

fn index_of(boxes: &[Box3D], instance_id: &str) -> Result<usize, usize> {
    boxes.binary_search_by(|b| b.instance_id.as_str().cmp(instance_id))
}

fn check_size(b: &Box3D) -> Result<(), EditError> {
    if b.size.is_positive() && b.size.is_finite() {
        Ok(())
    } else {
        Err(EditError::InvalidSize(b.size))
    }
}

fn check_center(center: &Vec3) -> Result<(), EditError> {
    if center.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EditError::InvalidValue {
            field: "center",
            reason: "non-finite coordinate".into(),
        })
    }
}

fn unit_rotation(q: &Quaternion) -> Result<Quaternion, EditError> {
    q.normalized().ok_or_else(|| EditError::InvalidValue {
        field: "rotation",
        reason: "zero or non-finite quaternion".into(),
    })
}

impl EditSession {
    pub fn new(mut bundle: LogBundle) -> Self {
        bundle.canonicalize();
        let filter = FilterSpec::show_all(&bundle);
        Self {
            baseline: bundle.annotations.clone(),
            baseline_vocabulary: bundle.vocabulary.clone(),
            bundle,
            undo_stack: Vec::new(),
            redo_stack: Vec::new(),
            selection: None,
            filter,
            dirty_frames: BTreeSet::new(),
            mode: EditMode::default(),
        }
    }

    pub fn bundle(&self) -> &LogBundle {
        &self.bundle
    }

    pub fn into_bundle(self) -> LogBundle {
        self.bundle
    }

    pub fn filter(&self) -> &FilterSpec {
        &self.filter
    }

    pub fn mode(&self) -> EditMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: EditMode) {
        self.mode = mode;
    }

    pub fn selection(&self) -> Option<&Selection> {
        self.selection.as_ref()
    }

    pub fn dirty_frames(&self) -> &BTreeSet<String> {
        &self.dirty_frames
    }

    /// Whether the vocabulary differs from the last saved state.
    pub fn vocabulary_dirty(&self) -> bool {
        self.bundle.vocabulary != self.baseline_vocabulary
    }

    pub fn undo_depth(&self) -> usize {
        self.undo_stack.len()
    }

    pub fn redo_depth(&self) -> usize {
        self.redo_stack.len()
    }

    pub fn history(&self) -> impl Iterator<Item = &EditCommand> {
        self.undo_stack.iter().map(|e| &e.command)
    }

    fn require_frame(&self, frame_id: &str) -> Result<(), EditError> {
        if self.bundle.has_frame(frame_id) {
            Ok(())
        } else {
            Err(EditError::UnknownFrame(frame_id.to_string()))
        }
    }

    /// Looks up a box by source.
    pub fn find_box(
        &self,
        frame_id: &str,
        instance_id: &str,
        source: &BoxSource,
    ) -> Result<&Box3D, EditError> {
        self.require_frame(frame_id)?;
        let boxes = match source {
            BoxSource::GroundTruth => self.bundle.boxes(frame_id),
            BoxSource::Prediction(set) => {
                if !self.bundle.predictions.contains_key(set) {
                    return Err(EditError::UnknownPredictionSet(set.clone()));
                }
                self.bundle.prediction_boxes(set, frame_id)
            }
        };
        index_of(boxes, instance_id)
            .map(|i| &boxes[i])
            .map_err(|_| EditError::UnknownBox {
                frame_id: frame_id.to_string(),
                instance_id: instance_id.to_string(),
            })
    }

    /// Validates `command` against the current state and works out its effect
    /// without mutating anything.
    fn plan(&self, command: &EditCommand) -> Result<Effect, EditError> {
        match command {
            EditCommand::AddBox { frame_id, new_box } => {
                self.require_frame(frame_id)?;
                if new_box.confidence.is_some() {
                    return Err(EditError::ConfidenceOnGroundTruth);
                }
                check_size(new_box)?;
                check_center(&new_box.center)?;
                if !self.bundle.has_category(&new_box.category) {
                    return Err(EditError::UnknownCategory(new_box.category.clone()));
                }
                let mut bbox = new_box.clone();
                bbox.rotation = unit_rotation(&bbox.rotation)?;
                bbox.modified = true;
                let boxes = self.bundle.boxes(frame_id);
                if bbox.instance_id.is_empty() {
                    bbox.instance_id = loop {
                        let id = new_instance_id();
                        if index_of(boxes, &id).is_err() {
                            break id;
                        }
                    };
                }
                let index = index_of(boxes, &bbox.instance_id)
                    .err()
                    .ok_or_else(|| EditError::DuplicateInstanceId(bbox.instance_id.clone()))?;
                Ok(Effect::Inserted {
                    frame_id: frame_id.clone(),
                    index,
                    bbox,
                })
            }
            EditCommand::DeleteBox {
                frame_id,
                instance_id,
            } => {
                let bbox = self
                    .find_box(frame_id, instance_id, &BoxSource::GroundTruth)?
                    .clone();
                let index =
                    index_of(self.bundle.boxes(frame_id), instance_id).expect("box was just found");
                Ok(Effect::Removed {
                    frame_id: frame_id.clone(),
                    index,
                    bbox,
                })
            }
            EditCommand::ModifyBox {
                frame_id,
                instance_id,
                source,
                center,
                size,
                rotation,
            } => {
                let mut after = self.find_box(frame_id, instance_id, source)?.clone();
                if let Some(center) = center {
                    check_center(center)?;
                    after.center = *center;
                }
                if let Some(size) = size {
                    after.size = *size;
                    check_size(&after)?;
                }
                if let Some(rotation) = rotation {
                    after.rotation = unit_rotation(rotation)?;
                }
                self.plan_replacement(frame_id, source, after)
            }
            EditCommand::Relabel {
                frame_id,
                instance_id,
                source,
                category,
            } => {
                let mut after = self.find_box(frame_id, instance_id, source)?.clone();
                if !self.bundle.has_category(category) {
                    return Err(EditError::UnknownCategory(category.clone()));
                }
                after.category = category.clone();
                self.plan_replacement(frame_id, source, after)
            }
            EditCommand::AddCategory { label } => {
                if label.trim().is_empty() {
                    return Err(EditError::EmptyCategory);
                }
                match self
                    .bundle
                    .vocabulary
                    .binary_search_by(|v| v.as_str().cmp(label))
                {
                    Ok(_) => Err(EditError::DuplicateCategory(label.clone())),
                    Err(index) => Ok(Effect::CategoryAdded {
                        index,
                        label: label.clone(),
                    }),
                }
            }
        }
    }

    /// Ground-truth targets are replaced in place; prediction targets are
    /// promoted into the ground truth, keeping their id unless it is taken.
    fn plan_replacement(
        &self,
        frame_id: &str,
        source: &BoxSource,
        mut after: Box3D,
    ) -> Result<Effect, EditError> {
        after.modified = true;
        let boxes = self.bundle.boxes(frame_id);
        match source {
            BoxSource::GroundTruth => {
                let index = index_of(boxes, &after.instance_id).expect("target exists");
                Ok(Effect::Replaced {
                    frame_id: frame_id.to_string(),
                    index,
                    before: boxes[index].clone(),
                    after,
                })
            }
            BoxSource::Prediction(_) => {
                after.confidence = None;
                if index_of(boxes, &after.instance_id).is_ok() {
                    after.instance_id = loop {
                        let id = new_instance_id();
                        if index_of(boxes, &id).is_err() {
                            break id;
                        }
                    };
                }
                let index = index_of(boxes, &after.instance_id).unwrap_err();
                Ok(Effect::Inserted {
                    frame_id: frame_id.to_string(),
                    index,
                    bbox: after,
                })
            }
        }
    }

    fn frame_boxes_mut(&mut self, frame_id: &str) -> &mut Vec<Box3D> {
        self.bundle
            .annotations
            .entry(frame_id.to_string())
            .or_default()
    }

    fn perform(&mut self, effect: &Effect) {
        match effect {
            Effect::Inserted {
                frame_id,
                index,
                bbox,
            } => self.frame_boxes_mut(frame_id).insert(*index, bbox.clone()),
            Effect::Removed {
                frame_id, index, ..
            } => {
                self.frame_boxes_mut(frame_id).remove(*index);
            }
            Effect::Replaced {
                frame_id,
                index,
                after,
                ..
            } => self.frame_boxes_mut(frame_id)[*index] = after.clone(),
            Effect::CategoryAdded { index, label } => {
                self.bundle.vocabulary.insert(*index, label.clone())
            }
        }
        self.after_change(effect);
    }

    fn revert(&mut self, effect: &Effect) {
        match effect {
            Effect::Inserted {
                frame_id, index, ..
            } => {
                self.frame_boxes_mut(frame_id).remove(*index);
            }
            Effect::Removed {
                frame_id,
                index,
                bbox,
            } => self.frame_boxes_mut(frame_id).insert(*index, bbox.clone()),
            Effect::Replaced {
                frame_id,
                index,
                before,
                ..
            } => self.frame_boxes_mut(frame_id)[*index] = before.clone(),
            Effect::CategoryAdded { index, .. } => {
                self.bundle.vocabulary.remove(*index);
            }
        }
        self.after_change(effect);
    }

    fn after_change(&mut self, effect: &Effect) {
        let frame_id = match effect {
            Effect::Inserted { frame_id, .. }
            | Effect::Removed { frame_id, .. }
            | Effect::Replaced { frame_id, .. } => Some(frame_id),
            Effect::CategoryAdded { .. } => None,
        };
        if let Some(frame_id) = frame_id {
            let current = self.bundle.boxes(frame_id);
            let saved = self.baseline.get(frame_id).map_or(&[][..], Vec::as_slice);
            if current == saved {
                self.dirty_frames.remove(frame_id);
            } else {
                self.dirty_frames.insert(frame_id.clone());
            }
        }
        self.revalidate_selection();
    }

    fn revalidate_selection(&mut self) {
        let keep = self.selection.as_ref().is_some_and(|sel| {
            self.find_box(&sel.frame_id, &sel.instance_id, &sel.source)
                .is_ok_and(|b| self.filter.admits(&sel.source, b))
        });
        if !keep {
            self.selection = None;
        }
    }

    /// Applies `command`. On error the session is unchanged.
    pub fn apply(&mut self, command: EditCommand) -> Result<(), EditError> {
        let effect = self.plan(&command)?;
        self.perform(&effect);
        self.undo_stack.push(HistoryEntry { command, effect });
        self.redo_stack.clear();
        Ok(())
    }

    /// Reverts the most recent command. Returns false if there is none.
    pub fn undo(&mut self) -> bool {
        let Some(entry) = self.undo_stack.pop() else {
            return false;
        };
        self.revert(&entry.effect);
        self.redo_stack.push(entry);
        true
    }

    /// Re-applies the most recently undone command. Returns false if there
    /// is none.
    pub fn redo(&mut self) -> bool {
        let Some(entry) = self.redo_stack.pop() else {
            return false;
        };
        self.perform(&entry.effect);
        self.undo_stack.push(entry);
        true
    }

    pub fn add_category(&mut self, label: &str) -> Result<(), EditError> {
        self.apply(EditCommand::AddCategory {
            label: label.to_string(),
        })
    }

    pub fn set_filter(&mut self, filter: FilterSpec) -> Result<(), EditError> {
        filter.check().map_err(|reason| EditError::InvalidValue {
            field: "filter",
            reason,
        })?;
        self.filter = filter;
        self.revalidate_selection();
        Ok(())
    }

    pub fn visible_boxes(&self, frame_id: &str) -> Result<Vec<VisibleBox<'_>>, EditError> {
        self.require_frame(frame_id)?;
        Ok(visible_boxes(&self.bundle, &self.filter, frame_id))
    }

    /// Nearest visible box hit by `ray`, ties broken by instance id and then
    /// by source (ground truth first).
    pub fn pick(&self, ray: &Ray, frame_id: &str) -> Result<Option<Pick>, EditError> {
        let visible = self.visible_boxes(frame_id)?;
        Ok(visible
            .into_iter()
            .filter_map(|v| {
                geometry::ray_box_intersect(ray, v.bbox).map(|t| Pick {
                    instance_id: v.bbox.instance_id.clone(),
                    source: v.source,
                    t,
                })
            })
            .min_by(|a, b| {
                a.t.total_cmp(&b.t)
                    .then_with(|| a.instance_id.cmp(&b.instance_id))
                    .then_with(|| a.source.cmp(&b.source))
            }))
    }

    /// Picks and updates the selection: set on a hit, cleared on a miss.
    pub fn select_at(&mut self, ray: &Ray, frame_id: &str) -> Result<Option<Pick>, EditError> {
        let pick = self.pick(ray, frame_id)?;
        self.selection = pick.as_ref().map(|p| Selection {
            frame_id: frame_id.to_string(),
            instance_id: p.instance_id.clone(),
            source: p.source.clone(),
        });
        Ok(pick)
    }

    pub fn clear_selection(&mut self) {
        self.selection = None;
    }

    /// Drags a box with the current mode's constraint and records the move
    /// as a `ModifyBox`.
    pub fn drag(
        &mut self,
        frame_id: &str,
        instance_id: &str,
        source: &BoxSource,
        grab: &Ray,
        release: &Ray,
        view_dir: Option<&Vec3>,
    ) -> Result<EditCommand, EditError> {
        let current = self.find_box(frame_id, instance_id, source)?;
        let moved = match self.mode {
            EditMode::Horizontal => geometry::drag_horizontal(current, grab, release)?,
            EditMode::Vertical => {
                let view = view_dir.copied().unwrap_or(grab.direction);
                geometry::drag_vertical(current, grab, release, &view)?
            }
        };
        let command = EditCommand::ModifyBox {
            frame_id: frame_id.to_string(),
            instance_id: instance_id.to_string(),
            source: source.clone(),
            center: Some(moved.center),
            size: None,
            rotation: None,
        };
        self.apply(command.clone())?;
        Ok(command)
    }

    /// Rotates a box about its vertical axis. Only available in vertical mode.
    pub fn rotate(
        &mut self,
        frame_id: &str,
        instance_id: &str,
        source: &BoxSource,
        delta_yaw: f64,
    ) -> Result<EditCommand, EditError> {
        if self.mode != EditMode::Vertical {
            return Err(EditError::WrongMode {
                action: "rotation",
                mode: self.mode.as_str(),
            });
        }
        if !delta_yaw.is_finite() {
            return Err(EditError::InvalidValue {
                field: "delta_yaw",
                reason: "non-finite angle".into(),
            });
        }
        let current = self.find_box(frame_id, instance_id, source)?;
        let rotated = geometry::rotate_about_z(current, delta_yaw);
        let command = EditCommand::ModifyBox {
            frame_id: frame_id.to_string(),
            instance_id: instance_id.to_string(),
            source: source.clone(),
            center: None,
            size: None,
            rotation: Some(rotated.rotation),
        };
        self.apply(command.clone())?;
        Ok(command)
    }

    /// Writes annotation files for dirty frames only (plus `metadata.json`
    /// when categories were added) and marks the session clean. Returns the
    /// relative paths written.
    pub fn save(&mut self, root: &Path) -> Result<Vec<String>, StoreError> {
        let written = store::save_frames(
            &self.bundle,
            root,
            &self.dirty_frames,
            self.vocabulary_dirty(),
        )?;
        self.baseline = self.bundle.annotations.clone();
        self.baseline_vocabulary = self.bundle.vocabulary.clone();
        self.dirty_frames.clear();
        Ok(written)
    }
}
