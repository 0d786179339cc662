//! Comparison of two annotation sets, matched by instance id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Box3D, FrameBoxes};
use crate::Vec3;

/// Center, size and angle changes at or below this count as unchanged.
pub const MOVE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiffError {
    #[error("duplicate instance id '{instance_id}' in frame '{frame_id}' ({side} side)")]
    DuplicateInstanceId {
        frame_id: String,
        instance_id: String,
        side: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxRef {
    pub frame_id: String,
    pub instance_id: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Moved {
    pub frame_id: String,
    pub instance_id: String,
    /// `b.center − a.center`.
    pub center_delta: Vec3,
    /// `b.size − a.size` as (length, width, height).
    pub size_delta: [f64; 3],
    pub rotation_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Relabeled {
    pub frame_id: String,
    pub instance_id: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiffReport {
    pub added: Vec<BoxRef>,
    pub removed: Vec<BoxRef>,
    pub moved: Vec<Moved>,
    pub relabeled: Vec<Relabeled>,
}

impl DiffReport {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty()
            && self.removed.is_empty()
            && self.moved.is_empty()
            && self.relabeled.is_empty()
    }

    /// Frames with at least one entry.
    pub fn touched_frames(&self) -> BTreeSet<String> {
        self.added
            .iter()
            .chain(&self.removed)
            .map(|r| r.frame_id.clone())
            .chain(self.moved.iter().map(|m| m.frame_id.clone()))
            .chain(self.relabeled.iter().map(|r| r.frame_id.clone()))
            .collect()
    }

    pub fn summary(&self) -> String {
        format!(
            "{} added, {} removed, {} moved, {} relabeled",
            self.added.len(),
            self.removed.len(),
            self.moved.len(),
            self.relabeled.len()
        )
    }
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary())?;
        for r in &self.added {
            writeln!(
                f,
                "added\t{}\t{}\t{}",
                r.frame_id, r.instance_id, r.category
            )?;
        }
        for r in &self.removed {
            writeln!(
                f,
                "removed\t{}\t{}\t{}",
                r.frame_id, r.instance_id, r.category
            )?;
        }
        for m in &self.moved {
            writeln!(
                f,
                "moved\t{}\t{}\tcenter ({}, {}, {})\tsize ({}, {}, {})\tangle {}",
                m.frame_id,
                m.instance_id,
                m.center_delta.x,
                m.center_delta.y,
                m.center_delta.z,
                m.size_delta[0],
                m.size_delta[1],
                m.size_delta[2],
                m.rotation_angle
            )?;
        }
        for r in &self.relabeled {
            writeln!(
                f,
                "relabeled\t{}\t{}\t{} -> {}",
                r.frame_id, r.instance_id, r.from, r.to
            )?;
        }
        Ok(())
    }
}

fn index<'a>(
    frame_id: &str,
    boxes: &'a [Box3D],
    side: &'static str,
) -> Result<BTreeMap<&'a str, &'a Box3D>, DiffError> {
    let mut map = BTreeMap::new();
    for b in boxes {
        if map.insert(b.instance_id.as_str(), b).is_some() {
            return Err(DiffError::DuplicateInstanceId {
                frame_id: frame_id.to_string(),
                instance_id: b.instance_id.clone(),
                side,
            });
        }
    }
    Ok(map)
}

fn box_ref(frame_id: &str, b: &Box3D) -> BoxRef {
    BoxRef {
        frame_id: frame_id.to_string(),
        instance_id: b.instance_id.clone(),
        category: b.category.clone(),
    }
}

/// Differences going from `a` to `b`. Frames absent on one side count as
/// empty.
pub fn diff_annotations(a: &FrameBoxes, b: &FrameBoxes) -> Result<DiffReport, DiffError> {
    let mut report = DiffReport::default();
    let frames: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    for frame_id in frames {
        let left = index(
            frame_id,
            a.get(frame_id).map_or(&[][..], Vec::as_slice),
            "left",
        )?;
        let right = index(
            frame_id,
            b.get(frame_id).map_or(&[][..], Vec::as_slice),
            "right",
        )?;
        for (id, old) in &left {
            match right.get(id) {
                None => report.removed.push(box_ref(frame_id, old)),
                Some(new) => compare(frame_id, old, new, &mut report),
            }
        }
        for (id, new) in &right {
            if !left.contains_key(id) {
                report.added.push(box_ref(frame_id, new));
            }
        }
    }
    Ok(report)
}

fn compare(frame_id: &str, old: &Box3D, new: &Box3D, report: &mut DiffReport) {
    let center_delta = new.center - old.center;
    let size_delta = [
        new.size.length - old.size.length,
        new.size.width - old.size.width,
        new.size.height - old.size.height,
    ];
    let rotation_angle = old.rotation.angle_to(&new.rotation);
    if center_delta.norm() > MOVE_TOLERANCE
        || rotation_angle > MOVE_TOLERANCE
        || size_delta.iter().any(|d| d.abs() > MOVE_TOLERANCE)
    {
        report.moved.push(Moved {
            frame_id: frame_id.to_string(),
            instance_id: old.instance_id.clone(),
            center_delta,
            size_delta,
            rotation_angle,
        });
    }
    if old.category != new.category {
        report.relabeled.push(Relabeled {
            frame_id: frame_id.to_string(),
            instance_id: old.instance_id.clone(),
            from: old.category.clone(),
            to: new.category.clone(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quaternion;
    use crate::model::Size;

    fn sample() -> FrameBoxes {
        let mk = |id: &str, x: f64, cat: &str| {
            Box3D::new(
                Vec3::new(x, 0.0, 0.0),
                Size::new(4.0, 2.0, 1.5),
                Quaternion::IDENTITY,
                cat,
                id,
            )
        };
        let mut m = FrameBoxes::new();
        m.insert(
            "f0".into(),
            vec![mk("a", 1.0, "car"), mk("b", 5.0, "pedestrian")],
        );
        m.insert("f1".into(), vec![mk("a", 2.0, "car")]);
        m
    }

    #[test]
    fn identical_sets_are_empty() {
        let a = sample();
        let report = diff_annotations(&a, &a).unwrap();
        assert!(report.is_empty());
        assert_eq!(report.summary(), "0 added, 0 removed, 0 moved, 0 relabeled");
    }

    #[test]
    fn shifted_center_is_moved() {
        let a = sample();
        let mut b = a.clone();
        b.get_mut("f0").unwrap()[0].center.x += 0.5;
        let report = diff_annotations(&a, &b).unwrap();
        assert_eq!(report.moved.len(), 1);
        assert_eq!(report.moved[0].center_delta, Vec3::new(0.5, 0.0, 0.0));
        assert!(
            report.added.is_empty() && report.removed.is_empty() && report.relabeled.is_empty()
        );
    }

    #[test]
    fn category_change_is_relabeled() {
        let a = sample();
        let mut b = a.clone();
        b.get_mut("f1").unwrap()[0].category = "truck".into();
        let report = diff_annotations(&a, &b).unwrap();
        assert_eq!(report.relabeled.len(), 1);
        assert_eq!(report.relabeled[0].from, "car");
        assert_eq!(report.relabeled[0].to, "truck");
        assert!(report.moved.is_empty());
    }

    #[test]
    fn tiny_changes_ignored() {
        let a = sample();
        let mut b = a.clone();
        b.get_mut("f0").unwrap()[0].center.x += 5e-7;
        b.get_mut("f0").unwrap()[1].rotation = Quaternion::from_yaw(5e-7);
        assert!(diff_annotations(&a, &b).unwrap().is_empty());
    }

    #[test]
    fn added_and_removed_are_antisymmetric() {
        let a = sample();
        let mut b = a.clone();
        b.get_mut("f0").unwrap().remove(1);
        let ab = diff_annotations(&a, &b).unwrap();
        let ba = diff_annotations(&b, &a).unwrap();
        assert_eq!((ab.added.len(), ab.removed.len()), (0, 1));
        assert_eq!((ba.added.len(), ba.removed.len()), (1, 0));
    }

    #[test]
    fn duplicate_ids_error() {
        let a = sample();
        let mut b = a.clone();
        let dup = b["f1"][0].clone();
        b.get_mut("f1").unwrap().push(dup);
        assert!(matches!(
            diff_annotations(&a, &b),
            Err(DiffError::DuplicateInstanceId { side: "right", .. })
        ));
    }
}
