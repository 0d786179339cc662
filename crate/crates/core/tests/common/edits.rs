//! Random edit sequences and the session checks built on them.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rebound_core::diff::diff_annotations;
use rebound_core::model::FrameBoxes;
use rebound_core::session::{BoxSource, EditCommand, EditSession};
use rebound_core::{Box3D, LogBundle, Quaternion, Size, Vec3};

use super::{random_bundle, random_rotation};

fn pick<'a, T>(rng: &mut StdRng, items: &'a [T]) -> Option<&'a T> {
    (!items.is_empty()).then(|| &items[rng.random_range(0..items.len())])
}

fn random_center(rng: &mut StdRng) -> Vec3 {
    Vec3::new(
        rng.random_range(-70.0..70.0),
        rng.random_range(-70.0..70.0),
        rng.random_range(-2.0..3.0),
    )
}

fn random_size(rng: &mut StdRng) -> Size {
    Size::new(
        rng.random_range(0.2..8.0),
        rng.random_range(0.2..3.0),
        rng.random_range(0.2..4.0),
    )
}

/// An arbitrary command against the session's current state. Roughly one in
/// eight is invalid (unknown target, bad size, unknown category).
pub fn random_command(session: &EditSession, rng: &mut StdRng, counter: &mut usize) -> EditCommand {
    let bundle = session.bundle();
    let frames: Vec<String> = bundle.frames.iter().map(|f| f.frame_id.clone()).collect();
    let frame = pick(rng, &frames).unwrap().clone();
    let gt: Vec<String> = bundle
        .boxes(&frame)
        .iter()
        .map(|b| b.instance_id.clone())
        .collect();
    let mut targets: Vec<(BoxSource, String)> = gt
        .iter()
        .map(|id| (BoxSource::GroundTruth, id.clone()))
        .collect();
    for (set, boxes) in &bundle.predictions {
        for b in boxes.get(&frame).into_iter().flatten() {
            targets.push((BoxSource::Prediction(set.clone()), b.instance_id.clone()));
        }
    }
    let category = pick(rng, &bundle.vocabulary).unwrap().clone();
    *counter += 1;

    if rng.random_bool(0.125) {
        return match rng.random_range(0..4) {
            0 => EditCommand::DeleteBox {
                frame_id: frame,
                instance_id: "no-such-box".into(),
            },
            1 => EditCommand::Relabel {
                frame_id: frame,
                instance_id: gt.first().cloned().unwrap_or_default(),
                source: BoxSource::GroundTruth,
                category: "not-a-category".into(),
            },
            2 => EditCommand::AddCategory { label: category },
            _ => match targets.first() {
                Some((source, id)) => EditCommand::ModifyBox {
                    frame_id: frame,
                    instance_id: id.clone(),
                    source: source.clone(),
                    center: None,
                    size: Some(Size::new(1.0, -1.0, 1.0)),
                    rotation: None,
                },
                None => EditCommand::DeleteBox {
                    frame_id: "no-such-frame".into(),
                    instance_id: "x".into(),
                },
            },
        };
    }

    let choice = rng.random_range(0..10);
    match (
        choice,
        pick(rng, &targets).cloned(),
        pick(rng, &gt).cloned(),
    ) {
        (0..=1, _, _) | (_, None, _) => {
            let id = if rng.random_bool(0.5) {
                String::new()
            } else {
                format!("added-{counter:04}")
            };
            EditCommand::AddBox {
                frame_id: frame,
                new_box: Box3D::new(
                    random_center(rng),
                    random_size(rng),
                    random_rotation(rng),
                    category,
                    id,
                ),
            }
        }
        (2, _, Some(id)) => EditCommand::DeleteBox {
            frame_id: frame,
            instance_id: id,
        },
        (3, _, _) => EditCommand::AddCategory {
            label: format!("label-{counter:04}"),
        },
        (4..=5, Some((source, id)), _) => {
            let current = bundle
                .boxes(&frame)
                .iter()
                .chain(
                    bundle
                        .predictions
                        .values()
                        .flat_map(|s| s.get(&frame).into_iter().flatten()),
                )
                .find(|b| b.instance_id == id)
                .unwrap();
            let others: Vec<String> = bundle
                .vocabulary
                .iter()
                .filter(|c| **c != current.category)
                .cloned()
                .collect();
            match pick(rng, &others) {
                Some(category) => EditCommand::Relabel {
                    frame_id: frame,
                    instance_id: id,
                    source,
                    category: category.clone(),
                },
                None => EditCommand::AddCategory {
                    label: format!("label-{counter:04}"),
                },
            }
        }
        (_, Some((source, id)), _) => EditCommand::ModifyBox {
            frame_id: frame,
            instance_id: id,
            source,
            center: rng.random_bool(0.6).then(|| random_center(rng)),
            size: rng.random_bool(0.4).then(|| random_size(rng)),
            rotation: Some(if rng.random_bool(0.5) {
                Quaternion::from_yaw(rng.random_range(-3.0..3.0))
            } else {
                random_rotation(rng)
            }),
        },
    }
}

/// Frames whose annotation lists differ, by the diff report plus the
/// `modified` flag, which the diff does not compare.
pub fn changed_frames(a: &FrameBoxes, b: &FrameBoxes) -> BTreeSet<String> {
    let mut out = diff_annotations(a, b).expect("unique ids").touched_frames();
    for (frame, boxes) in b {
        let before = a.get(frame).map_or(&[][..], Vec::as_slice);
        let flags = |bs: &[Box3D]| {
            bs.iter()
                .map(|b| (b.instance_id.clone(), b.modified))
                .collect::<Vec<_>>()
        };
        if flags(before) != flags(boxes) {
            out.insert(frame.clone());
        }
    }
    out
}

/// Applies `steps` random commands, checking after each that rejected
/// commands left the state alone and that dirty frames match the diff. Then
/// undoes everything, redoes everything, and compares bundles bitwise.
pub fn check_undo_redo(seed: u64, steps: usize) -> Result<(), String> {
    let bundle: LogBundle = random_bundle(seed, false);
    let initial = bundle.clone();
    let mut session = EditSession::new(bundle);
    let mut rng = StdRng::seed_from_u64(seed ^ 0x5eed);
    let mut counter = 0;
    let mut snapshots = vec![session.bundle().clone()];
    let mut applied = 0;
    let mut rejected = 0;
    for step in 0..steps {
        let command = random_command(&session, &mut rng, &mut counter);
        let before = session.bundle().clone();
        let dirty_before = session.dirty_frames().clone();
        match session.apply(command.clone()) {
            Ok(()) => {
                applied += 1;
                snapshots.push(session.bundle().clone());
            }
            Err(_) => {
                rejected += 1;
                if session.bundle() != &before || session.dirty_frames() != &dirty_before {
                    return Err(format!("step {step}: rejected {command:?} changed state"));
                }
            }
        }
        let want = changed_frames(&initial.annotations, &session.bundle().annotations);
        if session.dirty_frames() != &want {
            return Err(format!(
                "step {step}: dirty {:?}, diff says {want:?}",
                session.dirty_frames()
            ));
        }
    }
    if applied == 0 || rejected == 0 {
        return Err(format!(
            "degenerate sequence: {applied} applied, {rejected} rejected"
        ));
    }
    for k in (0..applied).rev() {
        if !session.undo() {
            return Err("undo stack ran out early".into());
        }
        if session.bundle() != &snapshots[k] {
            return Err(format!("undo to state {k} differs"));
        }
    }
    if session.undo() {
        return Err("undo past the first command".into());
    }
    if session.bundle() != &initial || !session.dirty_frames().is_empty() {
        return Err("full undo did not restore the initial bundle".into());
    }
    for (k, want) in snapshots.iter().enumerate().skip(1) {
        if !session.redo() || session.bundle() != want {
            return Err(format!("redo {k} differs"));
        }
    }
    if session.redo() {
        return Err("redo past the last command".into());
    }
    Ok(())
}
