//! Waymo-style newline-delimited frame records.
//!
//! ```text
//! <root>/frames.jsonl          one JSON record per frame, in time order
//!        lidar/<ts>.bin        f32 x,y,z,intensity, vehicle frame
//!        camera/<name>/<ts>.<ext>
//! ```
//!
//! Boxes are yaw-only. Camera frames are x-forward, y-left, z-up.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

use super::common::{
    dir_name, export_payload, extension_of, finish, import_cloud, prepare_output, RawCloudFormat,
};
use super::{AdapterError, ConversionWarning, Converted, DatasetAdapter, YAW_ONLY_TOLERANCE};
use crate::geometry::{normalize_angle, Quaternion, SE3Pose, Vec3};
use crate::model::{
    Box3D, CameraCalibration, FrameRecord, Intrinsics, LogBundle, Payload, Size, SourceDataset,
};
use crate::store::layout;

const LIDAR_BIN: RawCloudFormat = RawCloudFormat {
    stride: 4,
    intensity_scale: 1.0,
};

/// Largest deviation from a rigid transform accepted in a pose matrix.
const RIGID_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameLine {
    context_name: String,
    timestamp_micros: i64,
    /// vehicle → world, row-major 4x4.
    pose: Vec<f64>,
    lidar: String,
    #[serde(default)]
    images: BTreeMap<String, String>,
    #[serde(default)]
    camera_calibrations: Vec<CameraLine>,
    #[serde(default)]
    laser_labels: Vec<LabelLine>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    predictions: BTreeMap<String, Vec<LabelLine>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraLine {
    name: String,
    /// camera → vehicle, row-major 4x4.
    extrinsic: Vec<f64>,
    /// fx, fy, cx, cy
    intrinsic: [f64; 4],
    width: u32,
    height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LabelLine {
    id: String,
    #[serde(rename = "type")]
    label_type: String,
    #[serde(rename = "box")]
    bbox: BoxLine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BoxLine {
    center_x: f64,
    center_y: f64,
    center_z: f64,
    length: f64,
    width: f64,
    height: f64,
    heading: f64,
}

/// Rotation taking x-forward camera coordinates to optical (z-forward,
/// x-right, y-down) coordinates.
fn camera_to_optical() -> SE3Pose {
    let m = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    SE3Pose::new(Vec3::zeros(), Quaternion::from_rotation_matrix(&m))
}

fn pose_from_rows(values: &[f64], context: impl Fn() -> String) -> Result<SE3Pose, AdapterError> {
    let bad = |why: &str| AdapterError::Inconsistent(format!("{}: {why}", context()));
    if values.len() != 16 {
        return Err(bad("pose must have 16 values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("pose has non-finite values"));
    }
    let m = Matrix4::from_row_slice(values);
    let pose = SE3Pose::from_matrix(&m);
    let error = (pose.to_matrix() - m).abs().max();
    if error > RIGID_TOLERANCE {
        return Err(bad("pose is not a rigid transform"));
    }
    Ok(pose)
}

fn pose_to_rows(pose: &SE3Pose) -> Vec<f64> {
    pose.to_matrix().transpose().iter().copied().collect()
}

fn label_to_box(
    label: &LabelLine,
    frame_id: &str,
    warnings: &mut Vec<ConversionWarning>,
) -> Result<Box3D, AdapterError> {
    let b = &label.bbox;
    if !b.heading.is_finite() {
        return Err(AdapterError::Inconsistent(format!(
            "frame {frame_id} box {}: heading is not finite",
            label.id
        )));
    }
    let mut heading = b.heading;
    if !(heading > -std::f64::consts::PI && heading <= std::f64::consts::PI) {
        log::warn!(
            "frame {frame_id} box {}: heading {heading} out of range",
            label.id
        );
        warnings.push(ConversionWarning::HeadingNormalized {
            frame_id: frame_id.to_string(),
            instance_id: label.id.clone(),
            heading,
        });
        heading = normalize_angle(heading);
    }
    let mut out = Box3D::new(
        Vec3::new(b.center_x, b.center_y, b.center_z),
        Size::new(b.length, b.width, b.height),
        Quaternion::from_yaw(heading),
        label.label_type.clone(),
        label.id.clone(),
    );
    out.confidence = label.score;
    out.attributes = label.attributes.clone();
    Ok(out)
}

fn box_to_label(b: &Box3D, frame_id: &str, warnings: &mut Vec<ConversionWarning>) -> LabelLine {
    let (roll, pitch, yaw) = b.rotation.roll_pitch_yaw();
    if roll.abs() > YAW_ONLY_TOLERANCE || pitch.abs() > YAW_ONLY_TOLERANCE {
        log::warn!(
            "frame {frame_id} box {}: roll {roll} pitch {pitch} dropped",
            b.instance_id
        );
        warnings.push(ConversionWarning::LossyRotation {
            frame_id: frame_id.to_string(),
            instance_id: b.instance_id.clone(),
            roll,
            pitch,
        });
    }
    LabelLine {
        id: b.instance_id.clone(),
        label_type: b.category.clone(),
        bbox: BoxLine {
            center_x: b.center.x,
            center_y: b.center.y,
            center_z: b.center.z,
            length: b.size.length,
            width: b.size.width,
            height: b.size.height,
            heading: yaw,
        },
        score: b.confidence,
        attributes: b.attributes.clone(),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WaymoAdapter;

impl DatasetAdapter for WaymoAdapter {
    fn id(&self) -> &'static str {
        "waymo"
    }

    fn import(&self, root: &Path) -> Result<Converted<LogBundle>, AdapterError> {
        let mut warnings = Vec::new();
        let path = root.join("frames.jsonl");
        let text = fs::read_to_string(&path).map_err(|source| AdapterError::Read {
            path: path.clone(),
            source,
        })?;
        let mut lines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: FrameLine =
                serde_json::from_str(line).map_err(|e| AdapterError::Parse {
                    path: path.clone(),
                    message: format!("line {}: {e}", i + 1),
                })?;
            lines.push(record);
        }

        let log_id = lines
            .first()
            .map(|l| l.context_name.clone())
            .unwrap_or_else(|| dir_name(root));
        let mut bundle = LogBundle::new(log_id, SourceDataset::WaymoStyle);
        let to_optical = camera_to_optical();
        let mut vocabulary = BTreeSet::new();

        for line in &lines {
            let timestamp = line.timestamp_micros.checked_mul(1000).ok_or_else(|| {
                AdapterError::Inconsistent(format!("timestamp {} overflows", line.timestamp_micros))
            })?;
            let frame_id = timestamp.to_string();
            let ego_pose = pose_from_rows(&line.pose, || format!("frame {frame_id} pose"))?;

            for cam in &line.camera_calibrations {
                if bundle.camera(&cam.name).is_some() {
                    continue;
                }
                let camera_to_vehicle =
                    pose_from_rows(&cam.extrinsic, || format!("camera {} extrinsic", cam.name))?;
                let [fx, fy, cx, cy] = cam.intrinsic;
                bundle.cameras.push(CameraCalibration {
                    name: cam.name.clone(),
                    extrinsic: to_optical.compose(&camera_to_vehicle.inverse()),
                    intrinsic: Intrinsics { fx, fy, cx, cy },
                    width: cam.width,
                    height: cam.height,
                });
            }

            let payload = import_cloud(
                &root.join(&line.lidar),
                LIDAR_BIN,
                &SE3Pose::identity(),
                &mut warnings,
            )?;
            let pointcloud_ref = layout::pointcloud_file(&frame_id);
            bundle.payloads.insert(pointcloud_ref.clone(), payload);

            let mut image_refs = BTreeMap::new();
            for (camera, rel) in &line.images {
                let src: PathBuf = root.join(rel);
                if !src.is_file() {
                    return Err(AdapterError::Read {
                        path: src,
                        source: std::io::ErrorKind::NotFound.into(),
                    });
                }
                let dest = layout::image_file(camera, &frame_id, extension_of(rel));
                bundle.payloads.insert(dest.clone(), Payload::File(src));
                image_refs.insert(camera.clone(), dest);
            }

            let mut boxes = Vec::with_capacity(line.laser_labels.len());
            for label in &line.laser_labels {
                let b = label_to_box(label, &frame_id, &mut warnings)?;
                vocabulary.insert(b.category.clone());
                boxes.push(b);
            }
            bundle.annotations.insert(frame_id.clone(), boxes);
            for (set, labels) in &line.predictions {
                let mut boxes = Vec::with_capacity(labels.len());
                for label in labels {
                    let b = label_to_box(label, &frame_id, &mut warnings)?;
                    vocabulary.insert(b.category.clone());
                    boxes.push(b);
                }
                bundle
                    .predictions
                    .entry(set.clone())
                    .or_default()
                    .insert(frame_id.clone(), boxes);
            }

            bundle.frames.push(FrameRecord {
                frame_id,
                timestamp,
                ego_pose,
                pointcloud_ref,
                image_refs,
            });
        }
        bundle.vocabulary = vocabulary.into_iter().collect();

        Ok(Converted {
            value: finish(bundle)?,
            warnings,
        })
    }

    fn export(&self, bundle: &LogBundle, root: &Path) -> Result<Converted<()>, AdapterError> {
        let mut warnings = Vec::new();
        prepare_output(root)?;
        let to_optical = camera_to_optical();
        let cameras: Vec<CameraLine> = bundle
            .cameras
            .iter()
            .map(|cam| {
                let k = &cam.intrinsic;
                CameraLine {
                    name: cam.name.clone(),
                    extrinsic: pose_to_rows(&cam.extrinsic.inverse().compose(&to_optical)),
                    intrinsic: [k.fx, k.fy, k.cx, k.cy],
                    width: cam.width,
                    height: cam.height,
                }
            })
            .collect();

        let mut out = Vec::new();
        for frame in &bundle.frames {
            let fid = &frame.frame_id;
            if frame.timestamp % 1000 != 0 {
                warnings.push(ConversionWarning::TimestampTruncated {
                    frame_id: fid.clone(),
                    timestamp_ns: frame.timestamp,
                });
            }
            let micros = frame.timestamp.div_euclid(1000);
            let lidar = format!("lidar/{micros}.{}", extension_of(&frame.pointcloud_ref));
            export_payload(bundle, &frame.pointcloud_ref, &root.join(&lidar))?;
            let mut images = BTreeMap::new();
            for (camera, rel) in &frame.image_refs {
                let dest = format!("camera/{camera}/{micros}.{}", extension_of(rel));
                export_payload(bundle, rel, &root.join(&dest))?;
                images.insert(camera.clone(), dest);
            }
            let laser_labels = bundle
                .boxes(fid)
                .iter()
                .map(|b| box_to_label(b, fid, &mut warnings))
                .collect();
            let mut predictions = BTreeMap::new();
            for (set, frames) in &bundle.predictions {
                let labels = frames
                    .get(fid)
                    .into_iter()
                    .flatten()
                    .map(|b| box_to_label(b, fid, &mut warnings))
                    .collect();
                predictions.insert(set.clone(), labels);
            }
            let line = FrameLine {
                context_name: bundle.log_id.clone(),
                timestamp_micros: micros,
                pose: pose_to_rows(&frame.ego_pose),
                lidar,
                images,
                camera_calibrations: cameras.clone(),
                laser_labels,
                predictions,
            };
            let value = serde_json::to_value(&line).expect("frame records serialize");
            serde_json::to_writer(&mut out, &value).expect("JSON values serialize");
            out.push(b'\n');
        }
        let path = root.join("frames.jsonl");
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|source| AdapterError::Write { path, source })?;

        Ok(Converted {
            value: (),
            warnings,
        })
    }
}
