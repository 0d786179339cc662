mod common;

use std::collections::BTreeSet;
use std::path::Path;

use common::edits::check_undo_redo;
use common::{fixture, random_bundle};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rebound_core::adapters::Registry;
use rebound_core::geometry::ray_box_intersect;
use rebound_core::session::{
    BoxSource, EditCommand, EditError, EditSession, FilterSpec, FAR_FIELD_RANGE_M,
};
use rebound_core::store::{layout, load_log, save_log, snapshot_tree};
use rebound_core::validate::validate_bundle;
use rebound_core::{Box3D, LogBundle, Quaternion, Ray, Size, Vec3};
use serde_json::Value;
use tempfile::TempDir;

fn nusc_bundle() -> LogBundle {
    Registry::default()
        .get("nuscenes")
        .unwrap()
        .import(&fixture("nusc"))
        .unwrap()
        .value
}

fn saved_fixture() -> (TempDir, EditSession) {
    let dir = TempDir::new().unwrap();
    let root = dir.path().join("log");
    save_log(&nusc_bundle(), &root).unwrap();
    let session = EditSession::new(load_log(&root).unwrap());
    (dir, session)
}

fn root(dir: &TempDir) -> std::path::PathBuf {
    dir.path().join("log")
}

fn visible_ids(session: &EditSession, frame: &str) -> BTreeSet<(BoxSource, String)> {
    session
        .visible_boxes(frame)
        .unwrap()
        .into_iter()
        .map(|v| (v.source, v.bbox.instance_id.clone()))
        .collect()
}

#[test]
fn random_sequences_undo_and_redo_exactly() {
    for seed in 0..20 {
        check_undo_redo(seed, 50).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn undo_on_empty_history_is_a_no_op() {
    let (_dir, mut session) = saved_fixture();
    let before = session.bundle().clone();
    assert!(!session.undo());
    assert!(!session.redo());
    assert_eq!(session.bundle(), &before);
}

#[test]
fn new_command_clears_redo() {
    let (_dir, mut session) = saved_fixture();
    session.add_category("sign").unwrap();
    assert!(session.undo());
    assert_eq!(session.redo_depth(), 1);
    session.add_category("light").unwrap();
    assert_eq!(session.redo_depth(), 0);
    assert!(!session.redo());
}

#[test]
fn negative_width_is_rejected_without_change() {
    let (_dir, mut session) = saved_fixture();
    let frame = session.bundle().frames[0].frame_id.clone();
    let id = session.bundle().boxes(&frame)[0].instance_id.clone();
    let before = session.bundle().clone();
    let err = session
        .apply(EditCommand::ModifyBox {
            frame_id: frame,
            instance_id: id,
            source: BoxSource::GroundTruth,
            center: None,
            size: Some(Size::new(4.0, -1.0, 1.5)),
            rotation: None,
        })
        .unwrap_err();
    assert!(matches!(err, EditError::InvalidSize(_)));
    assert_eq!(session.bundle(), &before);
    assert_eq!(session.undo_depth(), 0);
    assert!(session.dirty_frames().is_empty());
}

#[test]
fn relabel_marks_frame_dirty() {
    let (_dir, mut session) = saved_fixture();
    let frame = session.bundle().frames[0].frame_id.clone();
    let b = session.bundle().boxes(&frame)[0].clone();
    let target = if b.category == "truck" {
        "car"
    } else {
        "truck"
    };
    session
        .apply(EditCommand::Relabel {
            frame_id: frame.clone(),
            instance_id: b.instance_id.clone(),
            source: BoxSource::GroundTruth,
            category: target.into(),
        })
        .unwrap();
    let now = session
        .bundle()
        .boxes(&frame)
        .iter()
        .find(|x| x.instance_id == b.instance_id)
        .unwrap();
    assert_eq!(now.category, target);
    assert!(now.modified);
    assert_eq!(session.dirty_frames(), &BTreeSet::from([frame]));
}

#[test]
fn confidence_threshold_is_inclusive_on_fixture() {
    let (_dir, mut session) = saved_fixture();
    let frames: Vec<String> = session
        .bundle()
        .frames
        .iter()
        .map(|f| f.frame_id.clone())
        .collect();
    let mut confidences: Vec<f64> = frames
        .iter()
        .flat_map(|f| session.bundle().prediction_boxes("detector", f))
        .map(|b| b.confidence.unwrap())
        .collect();
    confidences.sort_by(f64::total_cmp);
    assert_eq!(confidences, vec![0.3, 0.5, 0.9]);
    let filter = FilterSpec {
        show_ground_truth: false,
        min_confidence: 0.5,
        ..FilterSpec::show_all(session.bundle())
    };
    session.set_filter(filter).unwrap();
    let mut shown: Vec<f64> = frames
        .iter()
        .flat_map(|f| session.visible_boxes(f).unwrap())
        .map(|v| v.bbox.confidence.unwrap())
        .collect();
    shown.sort_by(f64::total_cmp);
    assert_eq!(shown, vec![0.5, 0.9]);
}

#[test]
fn far_field_range_hides_distant_boxes() {
    assert_eq!(FAR_FIELD_RANGE_M, 50.0);
    let mut bundle = random_bundle(3, false);
    let frame = bundle.frames[0].frame_id.clone();
    let boxes = bundle.annotations.get_mut(&frame).unwrap();
    boxes.clear();
    let make = |x: f64, id: &str| {
        Box3D::new(
            Vec3::new(x, 0.0, 0.0),
            Size::new(4.0, 2.0, 1.5),
            Quaternion::IDENTITY,
            "car",
            id,
        )
    };
    boxes.push(make(60.0, "far"));
    boxes.push(make(40.0, "near"));
    bundle.canonicalize();
    let mut session = EditSession::new(bundle);
    let filter = FilterSpec {
        max_range_m: Some(FAR_FIELD_RANGE_M),
        visible_prediction_sets: BTreeSet::new(),
        ..FilterSpec::default()
    };
    session.set_filter(filter).unwrap();
    let ids: Vec<String> = visible_ids(&session, &frame)
        .into_iter()
        .map(|(_, id)| id)
        .collect();
    assert_eq!(ids, vec!["near".to_string()]);
}

#[test]
fn empty_category_filter_admits_everything() {
    let bundle = random_bundle(4, false);
    let mut session = EditSession::new(bundle.clone());
    session.set_filter(FilterSpec::show_all(&bundle)).unwrap();
    for frame in &bundle.frames {
        let total = bundle.boxes(&frame.frame_id).len()
            + bundle
                .predictions
                .values()
                .map(|s| s[&frame.frame_id].len())
                .sum::<usize>();
        assert_eq!(session.visible_boxes(&frame.frame_id).unwrap().len(), total);
    }
}

#[test]
fn out_of_range_threshold_is_rejected() {
    let (_dir, mut session) = saved_fixture();
    let before = session.filter().clone();
    let bad = FilterSpec {
        min_confidence: 1.5,
        ..FilterSpec::default()
    };
    assert!(session.set_filter(bad).is_err());
    assert_eq!(session.filter(), &before);
}

fn random_filter(rng: &mut StdRng, bundle: &LogBundle) -> FilterSpec {
    FilterSpec {
        visible_categories: bundle
            .vocabulary
            .iter()
            .filter(|_| rng.random_bool(0.5))
            .cloned()
            .collect(),
        min_confidence: f64::from(rng.random_range(0..=100u32)) / 100.0,
        max_range_m: rng.random_bool(0.5).then(|| rng.random_range(0.0..100.0)),
        show_ground_truth: rng.random_bool(0.7),
        visible_prediction_sets: if rng.random_bool(0.7) {
            BTreeSet::from(["det".to_string()])
        } else {
            BTreeSet::new()
        },
    }
}

/// The documented predicate, evaluated box by box.
fn brute_force(bundle: &LogBundle, f: &FilterSpec, frame: &str) -> BTreeSet<(BoxSource, String)> {
    let category_ok =
        |b: &Box3D| f.visible_categories.is_empty() || f.visible_categories.contains(&b.category);
    let range_ok = |b: &Box3D| f.max_range_m.is_none_or(|r| b.center.norm() <= r);
    let mut out = BTreeSet::new();
    for b in bundle.boxes(frame) {
        if f.show_ground_truth && category_ok(b) && range_ok(b) {
            out.insert((BoxSource::GroundTruth, b.instance_id.clone()));
        }
    }
    for (set, frames) in &bundle.predictions {
        for b in &frames[frame] {
            if f.visible_prediction_sets.contains(set)
                && b.confidence.unwrap() >= f.min_confidence
                && category_ok(b)
                && range_ok(b)
            {
                out.insert((BoxSource::Prediction(set.clone()), b.instance_id.clone()));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn visible_boxes_match_brute_force(seed in any::<u64>()) {
        let bundle = random_bundle(seed, false);
        let mut rng = StdRng::seed_from_u64(seed);
        let mut session = EditSession::new(bundle.clone());
        let filter = random_filter(&mut rng, &bundle);
        session.set_filter(filter.clone()).unwrap();
        for frame in &bundle.frames {
            prop_assert_eq!(visible_ids(&session, &frame.frame_id), brute_force(&bundle, &filter, &frame.frame_id));
        }
    }

    #[test]
    fn raising_threshold_never_shows_more(seed in any::<u64>(), steps in proptest::collection::vec(0.0..1.0f64, 1..20)) {
        let bundle = random_bundle(seed, false);
        let mut session = EditSession::new(bundle.clone());
        let mut thresholds = steps;
        thresholds.sort_by(f64::total_cmp);
        for frame in &bundle.frames {
            let mut last = usize::MAX;
            for &t in &thresholds {
                session.set_filter(FilterSpec { min_confidence: t, ..FilterSpec::show_all(&bundle) }).unwrap();
                let n = session.visible_boxes(&frame.frame_id).unwrap().len();
                prop_assert!(n <= last);
                last = n;
            }
        }
    }

    #[test]
    fn shrinking_categories_never_shows_more(seed in any::<u64>()) {
        let bundle = random_bundle(seed, false);
        let mut rng = StdRng::seed_from_u64(seed);
        let mut session = EditSession::new(bundle.clone());
        let mut categories: BTreeSet<String> = bundle.vocabulary.iter().cloned().collect();
        let mut last = BTreeSet::new();
        let mut first = true;
        while !categories.is_empty() {
            session.set_filter(FilterSpec { visible_categories: categories.clone(), ..FilterSpec::show_all(&bundle) }).unwrap();
            let now: BTreeSet<_> = bundle.frames.iter().flat_map(|f| visible_ids(&session, &f.frame_id)).collect();
            prop_assert!(first || now.is_subset(&last));
            first = false;
            last = now;
            let victim = categories.iter().nth(rng.random_range(0..categories.len())).unwrap().clone();
            categories.remove(&victim);
        }
    }

    #[test]
    fn selection_respects_filters(seed in any::<u64>()) {
        let bundle = random_bundle(seed, false);
        let mut rng = StdRng::seed_from_u64(seed ^ 1);
        let mut session = EditSession::new(bundle.clone());
        session.set_filter(random_filter(&mut rng, &bundle)).unwrap();
        for frame in &bundle.frames {
            let visible = visible_ids(&session, &frame.frame_id);
            for b in bundle.boxes(&frame.frame_id).iter().chain(&bundle.predictions["det"][&frame.frame_id]) {
                let origin = b.center + Vec3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), 10.0);
                let ray = Ray::new(origin, b.center - origin).unwrap();
                let pick = session.select_at(&ray, &frame.frame_id).unwrap();
                // Brute force: smallest t over visible boxes, then id, then source.
                let want = session
                    .visible_boxes(&frame.frame_id)
                    .unwrap()
                    .into_iter()
                    .filter_map(|v| ray_box_intersect(&ray, v.bbox).map(|t| (t, v.bbox.instance_id.clone(), v.source)))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));
                match (&pick, want) {
                    (None, None) => prop_assert!(session.selection().is_none()),
                    (Some(p), Some((t, id, source))) => {
                        prop_assert_eq!(p.t, t);
                        prop_assert_eq!(&p.instance_id, &id);
                        prop_assert!(visible.contains(&(source, id)));
                        prop_assert_eq!(&session.selection().unwrap().instance_id, &p.instance_id);
                    }
                    (got, want) => prop_assert!(false, "pick {:?} vs brute force {:?}", got, want),
                }
            }
        }
    }
}

#[test]
fn nested_boxes_pick_the_nearer_entry() {
    let mut bundle = random_bundle(9, false);
    let frame = bundle.frames[0].frame_id.clone();
    let boxes = bundle.annotations.get_mut(&frame).unwrap();
    boxes.clear();
    boxes.push(Box3D::new(
        Vec3::new(10.0, 0.0, 0.0),
        Size::new(6.0, 6.0, 6.0),
        Quaternion::IDENTITY,
        "car",
        "b-outer",
    ));
    boxes.push(Box3D::new(
        Vec3::new(10.0, 0.0, 0.0),
        Size::new(2.0, 2.0, 2.0),
        Quaternion::IDENTITY,
        "car",
        "a-inner",
    ));
    bundle.canonicalize();
    let mut session = EditSession::new(bundle);
    let ray = Ray::new(Vec3::zeros(), Vec3::x()).unwrap();
    let pick = session.select_at(&ray, &frame).unwrap().unwrap();
    assert_eq!(pick.instance_id, "b-outer");
    assert_eq!(pick.t, 7.0);

    // Hidden by the filter: nothing is picked and the selection clears.
    session
        .set_filter(FilterSpec {
            show_ground_truth: false,
            ..FilterSpec::default()
        })
        .unwrap();
    assert!(session.selection().is_none());
    assert!(session.select_at(&ray, &frame).unwrap().is_none());
}

#[test]
fn selection_clears_when_filtered_out() {
    let mut bundle = random_bundle(10, false);
    let frame = bundle.frames[0].frame_id.clone();
    let boxes = bundle.annotations.get_mut(&frame).unwrap();
    boxes.clear();
    boxes.push(Box3D::new(
        Vec3::new(10.0, 0.0, 0.0),
        Size::new(2.0, 2.0, 2.0),
        Quaternion::IDENTITY,
        "car",
        "only",
    ));
    bundle.canonicalize();
    let mut session = EditSession::new(bundle);
    session
        .select_at(&Ray::new(Vec3::zeros(), Vec3::x()).unwrap(), &frame)
        .unwrap();
    assert!(session.selection().is_some());
    session
        .set_filter(FilterSpec {
            visible_categories: BTreeSet::from(["bus".to_string()]),
            ..FilterSpec::default()
        })
        .unwrap();
    assert!(session.selection().is_none());
}

fn changed_files(before: &std::collections::BTreeMap<String, Vec<u8>>, root: &Path) -> Vec<String> {
    let after = snapshot_tree(root).unwrap();
    assert_eq!(
        before.keys().collect::<Vec<_>>(),
        after.keys().collect::<Vec<_>>()
    );
    before
        .iter()
        .filter(|(k, v)| &after[*k] != *v)
        .map(|(k, _)| k.clone())
        .collect()
}

#[test]
fn save_rewrites_only_the_edited_frame() {
    let (dir, mut session) = saved_fixture();
    let root = root(&dir);
    let before = snapshot_tree(&root).unwrap();
    assert!(session.save(&root).unwrap().is_empty());
    assert!(changed_files(&before, &root).is_empty());

    let frame = session.bundle().frames[1].frame_id.clone();
    let id = session.bundle().boxes(&frame)[0].instance_id.clone();
    session
        .apply(EditCommand::ModifyBox {
            frame_id: frame.clone(),
            instance_id: id,
            source: BoxSource::GroundTruth,
            center: Some(Vec3::new(1.0, 2.0, 0.5)),
            size: None,
            rotation: None,
        })
        .unwrap();
    let written = session.save(&root).unwrap();
    let rel = layout::annotation_file(&frame);
    assert_eq!(written, vec![rel.clone()]);
    assert_eq!(changed_files(&before, &root), vec![rel]);
    assert!(session.dirty_frames().is_empty());
    assert_eq!(
        load_log(&root).unwrap().annotations,
        session.bundle().annotations
    );
}

#[test]
fn deleting_every_box_saves_an_empty_list() {
    let (dir, mut session) = saved_fixture();
    let root = root(&dir);
    let frame = session.bundle().frames[2].frame_id.clone();
    for id in session
        .bundle()
        .boxes(&frame)
        .iter()
        .map(|b| b.instance_id.clone())
        .collect::<Vec<_>>()
    {
        session
            .apply(EditCommand::DeleteBox {
                frame_id: frame.clone(),
                instance_id: id,
            })
            .unwrap();
    }
    session.save(&root).unwrap();
    let text = std::fs::read_to_string(root.join(layout::annotation_file(&frame))).unwrap();
    assert_eq!(
        serde_json::from_str::<Value>(&text).unwrap(),
        Value::Array(vec![])
    );
}

#[test]
fn custom_category_reaches_nuscenes_export() {
    let (dir, mut session) = saved_fixture();
    assert!(matches!(
        session.add_category("car"),
        Err(EditError::DuplicateCategory(_))
    ));
    let vocabulary = session.bundle().vocabulary.clone();
    assert!(session.add_category("").is_err());
    assert_eq!(session.bundle().vocabulary, vocabulary);

    session.add_category("traffic_light").unwrap();
    let frame = session.bundle().frames[0].frame_id.clone();
    let id = session.bundle().boxes(&frame)[0].instance_id.clone();
    session
        .apply(EditCommand::Relabel {
            frame_id: frame.clone(),
            instance_id: id.clone(),
            source: BoxSource::GroundTruth,
            category: "traffic_light".into(),
        })
        .unwrap();
    assert!(validate_bundle(session.bundle()).is_empty());

    let written = session.save(&root(&dir)).unwrap();
    assert!(written.contains(&layout::METADATA.to_string()));
    let reloaded = load_log(&root(&dir)).unwrap();
    assert!(reloaded.has_category("traffic_light"));

    let out = dir.path().join("nusc-out");
    let nusc = Registry::default();
    let nusc = nusc.get("nuscenes").unwrap();
    nusc.export(&reloaded, &out).unwrap();
    let rows: Vec<Value> =
        serde_json::from_str(&std::fs::read_to_string(out.join("sample_annotation.json")).unwrap())
            .unwrap();
    assert!(rows
        .iter()
        .any(|r| r["category_name"] == "traffic_light" && r["sample_token"] == frame.as_str()));
    let back = nusc.import(&out).unwrap().value;
    assert!(back.has_category("traffic_light"));
    assert_eq!(
        back.boxes(&frame)
            .iter()
            .find(|b| b.instance_id == id)
            .unwrap()
            .category,
        "traffic_light"
    );
}

#[test]
fn editing_a_prediction_promotes_it() {
    let (_dir, mut session) = saved_fixture();
    let frame = session.bundle().frames[0].frame_id.clone();
    let pred = session.bundle().prediction_boxes("detector", &frame)[0].clone();
    let gt_before = session.bundle().boxes(&frame).len();
    session
        .apply(EditCommand::Relabel {
            frame_id: frame.clone(),
            instance_id: pred.instance_id.clone(),
            source: BoxSource::Prediction("detector".into()),
            category: "truck".into(),
        })
        .unwrap();
    assert_eq!(session.bundle().boxes(&frame).len(), gt_before + 1);
    assert_eq!(
        session.bundle().prediction_boxes("detector", &frame).len(),
        2
    );
    let promoted = session
        .bundle()
        .boxes(&frame)
        .iter()
        .find(|b| b.category == "truck" && b.modified)
        .unwrap();
    assert!(promoted.confidence.is_none());
    assert_eq!(promoted.center, pred.center);
}
