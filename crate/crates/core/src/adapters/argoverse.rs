//! Argoverse-style flat tables.
//!
//! ```text
//! <root>/annotations.csv            ego-frame boxes, one row per box
//!        city_SE3_egovehicle.csv    ego → city poses
//!        calibration.csv            camera → ego extrinsics and intrinsics
//!        sensors/lidar/<ts>.bin     f32 x,y,z,intensity(0..255), ego frame
//!        sensors/cameras/<cam>/<ts>.<ext>
//!        predictions/<set>.csv      annotation columns plus `score`
//! ```
//!
//! Frames are the LiDAR sweeps; frame ids are the nanosecond timestamps.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::common::{
    checked_rotation, create_dir, dir_name, export_payload, extension_of, finish, import_cloud,
    prepare_output, quat_from_array, RawCloudFormat,
};
use super::{AdapterError, ConversionWarning, Converted, DatasetAdapter};
use crate::geometry::{SE3Pose, Vec3};
use crate::model::{
    Box3D, CameraCalibration, FrameBoxes, FrameRecord, Intrinsics, LogBundle, Payload, Size,
    SourceDataset,
};
use crate::store::layout;

const LIDAR_BIN: RawCloudFormat = RawCloudFormat {
    stride: 4,
    intensity_scale: 255.0,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnnotationRow {
    timestamp_ns: i64,
    track_uuid: String,
    category: String,
    tx_m: f64,
    ty_m: f64,
    tz_m: f64,
    length_m: f64,
    width_m: f64,
    height_m: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    /// JSON object, empty when the box has no attributes.
    #[serde(default)]
    attributes: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PoseRow {
    timestamp_ns: i64,
    tx: f64,
    ty: f64,
    tz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CalibrationRow {
    sensor_name: String,
    tx_m: f64,
    ty_m: f64,
    tz_m: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    fx_px: f64,
    fy_px: f64,
    cx_px: f64,
    cy_px: f64,
    width_px: u32,
    height_px: u32,
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, AdapterError> {
    let parse = |e: csv::Error| AdapterError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = fs::File::open(path).map_err(|source| AdapterError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(parse)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), AdapterError> {
    let write_err = |e: csv::Error| AdapterError::Write {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(write_err)?;
    writer.write_record(header).map_err(write_err)?;
    for row in rows {
        writer.serialize(row).map_err(write_err)?;
    }
    writer.flush().map_err(|source| AdapterError::Write {
        path: path.to_path_buf(),
        source,
    })
}

const ANNOTATION_HEADER: &[&str] = &[
    "timestamp_ns",
    "track_uuid",
    "category",
    "tx_m",
    "ty_m",
    "tz_m",
    "length_m",
    "width_m",
    "height_m",
    "qw",
    "qx",
    "qy",
    "qz",
    "attributes",
];

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>, AdapterError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| AdapterError::Read {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .collect();
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn row_to_box(
    row: &AnnotationRow,
    context: impl Fn() -> String,
    warnings: &mut Vec<ConversionWarning>,
) -> Result<Box3D, AdapterError> {
    let rotation = checked_rotation(
        quat_from_array([row.qw, row.qx, row.qy, row.qz]),
        context,
        warnings,
    )?;
    let mut b = Box3D::new(
        Vec3::new(row.tx_m, row.ty_m, row.tz_m),
        Size::new(row.length_m, row.width_m, row.height_m),
        rotation,
        row.category.clone(),
        row.track_uuid.clone(),
    );
    if !row.attributes.is_empty() {
        b.attributes = serde_json::from_str(&row.attributes).map_err(|e| {
            AdapterError::Inconsistent(format!("box {}: bad attributes: {e}", row.track_uuid))
        })?;
    }
    b.confidence = row.score;
    Ok(b)
}

fn box_to_row(timestamp_ns: i64, b: &Box3D) -> AnnotationRow {
    AnnotationRow {
        timestamp_ns,
        track_uuid: b.instance_id.clone(),
        category: b.category.clone(),
        tx_m: b.center.x,
        ty_m: b.center.y,
        tz_m: b.center.z,
        length_m: b.size.length,
        width_m: b.size.width,
        height_m: b.size.height,
        qw: b.rotation.w,
        qx: b.rotation.x,
        qy: b.rotation.y,
        qz: b.rotation.z,
        attributes: if b.attributes.is_empty() {
            String::new()
        } else {
            serde_json::to_string(&b.attributes).expect("string maps serialize")
        },
        score: b.confidence,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ArgoverseAdapter;

impl ArgoverseAdapter {
    fn read_boxes(
        path: &Path,
        frames: &BTreeMap<i64, String>,
        poses: &BTreeMap<i64, SE3Pose>,
        vocabulary: &mut BTreeSet<String>,
        warnings: &mut Vec<ConversionWarning>,
    ) -> Result<FrameBoxes, AdapterError> {
        let mut out = FrameBoxes::new();
        for (i, row) in read_csv::<AnnotationRow>(path)?.iter().enumerate() {
            if !poses.contains_key(&row.timestamp_ns) {
                return Err(AdapterError::MissingEgoPose(row.timestamp_ns));
            }
            let Some(frame_id) = frames.get(&row.timestamp_ns) else {
                return Err(AdapterError::Inconsistent(format!(
                    "{} row {}: no lidar sweep at {}",
                    path.display(),
                    i + 1,
                    row.timestamp_ns
                )));
            };
            let ctx = || format!("{} row {}", path.display(), i + 1);
            let b = row_to_box(row, ctx, warnings)?;
            vocabulary.insert(b.category.clone());
            out.entry(frame_id.clone()).or_default().push(b);
        }
        Ok(out)
    }
}

impl DatasetAdapter for ArgoverseAdapter {
    fn id(&self) -> &'static str {
        "argoverse"
    }

    fn import(&self, root: &Path) -> Result<Converted<LogBundle>, AdapterError> {
        let mut warnings = Vec::new();
        let mut bundle = LogBundle::new(dir_name(root), SourceDataset::ArgoverseStyle);

        let mut poses = BTreeMap::new();
        let pose_file = root.join("city_SE3_egovehicle.csv");
        for (i, row) in read_csv::<PoseRow>(&pose_file)?.into_iter().enumerate() {
            let ctx = || format!("{} row {}", pose_file.display(), i + 1);
            let rotation = checked_rotation(
                quat_from_array([row.qw, row.qx, row.qy, row.qz]),
                ctx,
                &mut warnings,
            )?;
            let pose = SE3Pose::new(Vec3::new(row.tx, row.ty, row.tz), rotation);
            if poses.insert(row.timestamp_ns, pose).is_some() {
                return Err(AdapterError::Inconsistent(format!(
                    "two ego poses at {}",
                    row.timestamp_ns
                )));
            }
        }

        let calib_file = root.join("calibration.csv");
        for (i, row) in read_csv::<CalibrationRow>(&calib_file)?
            .into_iter()
            .enumerate()
        {
            let ctx = || format!("{} row {}", calib_file.display(), i + 1);
            let rotation = checked_rotation(
                quat_from_array([row.qw, row.qx, row.qy, row.qz]),
                ctx,
                &mut warnings,
            )?;
            let camera_to_ego = SE3Pose::new(Vec3::new(row.tx_m, row.ty_m, row.tz_m), rotation);
            bundle.cameras.push(CameraCalibration {
                name: row.sensor_name,
                extrinsic: camera_to_ego.inverse(),
                intrinsic: Intrinsics {
                    fx: row.fx_px,
                    fy: row.fy_px,
                    cx: row.cx_px,
                    cy: row.cy_px,
                },
                width: row.width_px,
                height: row.height_px,
            });
        }

        let mut sweeps = BTreeMap::new();
        for path in list_dir(&root.join("sensors/lidar"))? {
            let Ok(ts) = stem(&path).parse::<i64>() else {
                continue;
            };
            if sweeps.insert(ts, path.clone()).is_some() {
                return Err(AdapterError::Inconsistent(format!(
                    "two lidar sweeps at {ts}"
                )));
            }
        }
        let mut images: BTreeMap<(String, i64), PathBuf> = BTreeMap::new();
        for cam in &bundle.cameras {
            for path in list_dir(&root.join("sensors/cameras").join(&cam.name))? {
                if let Ok(ts) = stem(&path).parse::<i64>() {
                    images.insert((cam.name.clone(), ts), path);
                }
            }
        }

        let mut frame_ids = BTreeMap::new();
        for (&ts, path) in &sweeps {
            let Some(ego_pose) = poses.get(&ts) else {
                return Err(AdapterError::MissingEgoPose(ts));
            };
            let frame_id = ts.to_string();
            let payload = import_cloud(path, LIDAR_BIN, &SE3Pose::identity(), &mut warnings)?;
            let pointcloud_ref = layout::pointcloud_file(&frame_id);
            bundle.payloads.insert(pointcloud_ref.clone(), payload);
            let mut image_refs = BTreeMap::new();
            for cam in &bundle.cameras {
                if let Some(path) = images.get(&(cam.name.clone(), ts)) {
                    let rel = layout::image_file(
                        &cam.name,
                        &frame_id,
                        extension_of(&path.to_string_lossy()),
                    );
                    bundle
                        .payloads
                        .insert(rel.clone(), Payload::File(path.clone()));
                    image_refs.insert(cam.name.clone(), rel);
                }
            }
            bundle.frames.push(FrameRecord {
                frame_id: frame_id.clone(),
                timestamp: ts,
                ego_pose: *ego_pose,
                pointcloud_ref,
                image_refs,
            });
            frame_ids.insert(ts, frame_id);
        }

        let mut vocabulary = BTreeSet::new();
        bundle.annotations = Self::read_boxes(
            &root.join("annotations.csv"),
            &frame_ids,
            &poses,
            &mut vocabulary,
            &mut warnings,
        )?;
        for path in list_dir(&root.join("predictions"))? {
            if path.extension().is_some_and(|e| e == "csv") {
                let boxes =
                    Self::read_boxes(&path, &frame_ids, &poses, &mut vocabulary, &mut warnings)?;
                bundle.predictions.insert(stem(&path), boxes);
            }
        }
        bundle.vocabulary = vocabulary.into_iter().collect();

        Ok(Converted {
            value: finish(bundle)?,
            warnings,
        })
    }

    fn export(&self, bundle: &LogBundle, root: &Path) -> Result<Converted<()>, AdapterError> {
        prepare_output(root)?;

        let mut poses = Vec::new();
        let mut rows = Vec::new();
        for frame in &bundle.frames {
            let ts = frame.timestamp;
            let p = &frame.ego_pose;
            poses.push(PoseRow {
                timestamp_ns: ts,
                tx: p.translation.x,
                ty: p.translation.y,
                tz: p.translation.z,
                qw: p.rotation.w,
                qx: p.rotation.x,
                qy: p.rotation.y,
                qz: p.rotation.z,
            });
            rows.extend(
                bundle
                    .boxes(&frame.frame_id)
                    .iter()
                    .map(|b| box_to_row(ts, b)),
            );

            let dest = root
                .join("sensors/lidar")
                .join(format!("{ts}.{}", extension_of(&frame.pointcloud_ref)));
            export_payload(bundle, &frame.pointcloud_ref, &dest)?;
            for (camera, rel) in &frame.image_refs {
                let dest = root
                    .join("sensors/cameras")
                    .join(camera)
                    .join(format!("{ts}.{}", extension_of(rel)));
                export_payload(bundle, rel, &dest)?;
            }
        }

        let calibration: Vec<CalibrationRow> = bundle
            .cameras
            .iter()
            .map(|cam| {
                let to_ego = cam.extrinsic.inverse();
                CalibrationRow {
                    sensor_name: cam.name.clone(),
                    tx_m: to_ego.translation.x,
                    ty_m: to_ego.translation.y,
                    tz_m: to_ego.translation.z,
                    qw: to_ego.rotation.w,
                    qx: to_ego.rotation.x,
                    qy: to_ego.rotation.y,
                    qz: to_ego.rotation.z,
                    fx_px: cam.intrinsic.fx,
                    fy_px: cam.intrinsic.fy,
                    cx_px: cam.intrinsic.cx,
                    cy_px: cam.intrinsic.cy,
                    width_px: cam.width,
                    height_px: cam.height,
                }
            })
            .collect();

        write_csv(&root.join("annotations.csv"), &rows, ANNOTATION_HEADER)?;
        write_csv(
            &root.join("city_SE3_egovehicle.csv"),
            &poses,
            &["timestamp_ns", "tx", "ty", "tz", "qw", "qx", "qy", "qz"],
        )?;
        write_csv(
            &root.join("calibration.csv"),
            &calibration,
            &[
                "sensor_name",
                "tx_m",
                "ty_m",
                "tz_m",
                "qw",
                "qx",
                "qy",
                "qz",
                "fx_px",
                "fy_px",
                "cx_px",
                "cy_px",
                "width_px",
                "height_px",
            ],
        )?;

        if !bundle.predictions.is_empty() {
            create_dir(&root.join("predictions"))?;
        }
        let mut header = ANNOTATION_HEADER.to_vec();
        header.push("score");
        for (set, frames) in &bundle.predictions {
            let rows: Vec<AnnotationRow> = bundle
                .frames
                .iter()
                .flat_map(|f| {
                    frames
                        .get(&f.frame_id)
                        .into_iter()
                        .flatten()
                        .map(|b| box_to_row(f.timestamp, b))
                })
                .collect();
            write_csv(
                &root.join("predictions").join(format!("{set}.csv")),
                &rows,
                &header,
            )?;
        }

        Ok(Converted {
            value: (),
            warnings: Vec::new(),
        })
    }
}
