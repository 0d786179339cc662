#![allow(dead_code)]

pub mod edits;
pub mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rebound_core::model::{Intrinsics, Payload};
use rebound_core::pointcloud::PointCloud;
use rebound_core::store::layout;
use rebound_core::{
    Box3D, CameraCalibration, FrameRecord, LogBundle, Quaternion, SE3Pose, Size, SourceDataset,
    Vec3,
};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn expected(name: &str) -> serde_json::Value {
    let text = fs::read_to_string(fixture("expected").join(format!("{name}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn copy_dir(src: &Path, dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for entry in fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let to = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &to);
        } else {
            fs::copy(entry.path(), to).unwrap();
        }
    }
}

pub fn vec3(v: &serde_json::Value) -> Vec3 {
    let a: Vec<f64> = serde_json::from_value(v.clone()).unwrap();
    Vec3::new(a[0], a[1], a[2])
}

pub fn quat(v: &serde_json::Value) -> Quaternion {
    let a: Vec<f64> = serde_json::from_value(v.clone()).unwrap();
    Quaternion::new(a[0], a[1], a[2], a[3])
}

pub fn random_rotation(rng: &mut StdRng) -> Quaternion {
    loop {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n < 1.0 {
            return q.scale(1.0 / n);
        }
    }
}

fn random_box(rng: &mut StdRng, vocabulary: &[&str], yaw_only: bool, index: usize) -> Box3D {
    let rotation = if yaw_only {
        Quaternion::from_yaw(rng.random_range(-3.1..3.1))
    } else {
        random_rotation(rng)
    };
    let mut b = Box3D::new(
        Vec3::new(
            rng.random_range(-60.0..60.0),
            rng.random_range(-60.0..60.0),
            rng.random_range(-2.0..3.0),
        ),
        Size::new(
            rng.random_range(0.2..8.0),
            rng.random_range(0.2..3.0),
            rng.random_range(0.2..4.0),
        ),
        rotation,
        vocabulary[rng.random_range(0..vocabulary.len())],
        format!("{:08x}{index:04}", rng.random::<u32>()),
    );
    if rng.random_bool(0.3) {
        b.attributes.insert("occluded".into(), "partly".into());
    }
    b
}

fn random_cloud(rng: &mut StdRng, n: usize) -> Vec<u8> {
    let points = (0..n)
        .map(|_| {
            [
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.0..1.0),
            ]
        })
        .collect();
    PointCloud { points }.encode()
}

/// A valid random bundle with in-memory payloads. Timestamps are whole
/// microseconds so every adapter carries them exactly.
pub fn random_bundle(seed: u64, yaw_only: bool) -> LogBundle {
    let mut rng = StdRng::seed_from_u64(seed);
    let vocabulary = ["bus", "car", "pedestrian", "traffic_cone"];
    let mut bundle = LogBundle::new(format!("log-{seed}"), SourceDataset::Native);
    bundle.vocabulary = vocabulary.iter().map(|s| s.to_string()).collect();
    bundle.cameras.push(CameraCalibration {
        name: "front".into(),
        extrinsic: SE3Pose::new(Vec3::new(-0.1, 1.5, -1.7), random_rotation(&mut rng)),
        intrinsic: Intrinsics {
            fx: 1000.0,
            fy: 1000.0,
            cx: 640.0,
            cy: 360.0,
        },
        width: 1280,
        height: 720,
    });
    let frames = rng.random_range(1..5);
    let mut ts: i64 = 1_600_000_000_000_000_000;
    let mut predictions = BTreeMap::new();
    for i in 0..frames {
        ts += rng.random_range(1..200_000i64) * 1000;
        let frame_id = format!("frame-{i:03}");
        let ego_rotation = if yaw_only {
            Quaternion::from_yaw(rng.random_range(-3.0..3.0))
        } else {
            random_rotation(&mut rng)
        };
        let pc = layout::pointcloud_file(&frame_id);
        let img = layout::image_file("front", &frame_id, "png");
        bundle.payloads.insert(
            pc.clone(),
            Payload::Bytes(Arc::from(random_cloud(&mut rng, 16))),
        );
        bundle.payloads.insert(
            img.clone(),
            Payload::Bytes(Arc::from(format!("image {seed} {i}").into_bytes())),
        );
        bundle.frames.push(FrameRecord {
            frame_id: frame_id.clone(),
            timestamp: ts,
            ego_pose: SE3Pose::new(
                Vec3::new(
                    rng.random_range(-500.0..500.0),
                    rng.random_range(-500.0..500.0),
                    rng.random_range(-5.0..5.0),
                ),
                ego_rotation,
            ),
            pointcloud_ref: pc,
            image_refs: BTreeMap::from([("front".to_string(), img)]),
        });
        let n = rng.random_range(0..5);
        let boxes = (0..n)
            .map(|k| random_box(&mut rng, &vocabulary, yaw_only, k))
            .collect();
        bundle.annotations.insert(frame_id.clone(), boxes);
        let n = rng.random_range(0..4);
        let preds: Vec<Box3D> = (0..n)
            .map(|k| {
                let c = f64::from(rng.random_range(0..=100u32)) / 100.0;
                random_box(&mut rng, &vocabulary, yaw_only, k).with_confidence(c)
            })
            .collect();
        predictions.insert(frame_id, preds);
    }
    bundle.predictions.insert("det".into(), predictions);
    bundle.canonicalize();
    bundle
}
