//! nuScenes-style relational tables.
//!
//! ```text
//! <root>/sample.json  sample_data.json  sample_annotation.json
//!        ego_pose.json  calibrated_sensor.json
//!        category.json  scene.json            (optional)
//!        samples/<CHANNEL>/<file>
//!        predictions/<set>.json               (optional, detection results)
//! ```
//!
//! Annotations are in the global frame with sizes ordered (width, length,
//! height). Timestamps are microseconds. Calibrated sensors map sensor → ego.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::common::{
    checked_rotation, create_dir, derived_token, dir_name, export_payload, extension_of, finish,
    import_cloud, prepare_output, quat_from_array, quat_to_array, read_json, write_json,
    RawCloudFormat,
};
use super::{AdapterError, ConversionWarning, Converted, DatasetAdapter};
use crate::geometry::{SE3Pose, Vec3};
use crate::model::{
    Box3D, CameraCalibration, FrameBoxes, FrameRecord, Intrinsics, LogBundle, Payload, Size,
    SourceDataset,
};
use crate::store::layout;

pub const LIDAR_CHANNEL: &str = "LIDAR_TOP";
const PCD_BIN: RawCloudFormat = RawCloudFormat {
    stride: 5,
    intensity_scale: 255.0,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sample {
    token: String,
    timestamp: i64,
    prev: String,
    next: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EgoPose {
    token: String,
    timestamp: i64,
    translation: [f64; 3],
    rotation: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CalibratedSensor {
    token: String,
    channel: String,
    modality: String,
    translation: [f64; 3],
    rotation: [f64; 4],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    camera_intrinsic: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleData {
    token: String,
    sample_token: String,
    ego_pose_token: String,
    calibrated_sensor_token: String,
    timestamp: i64,
    filename: String,
    #[serde(default = "default_true")]
    is_key_frame: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleAnnotation {
    token: String,
    sample_token: String,
    instance_token: String,
    translation: [f64; 3],
    /// (width, length, height)
    size: [f64; 3],
    rotation: [f64; 4],
    category_name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Category {
    token: String,
    name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Scene {
    token: String,
    name: String,
    first_sample_token: String,
    last_sample_token: String,
    nbr_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectionResults {
    #[serde(default)]
    meta: BTreeMap<String, serde_json::Value>,
    results: BTreeMap<String, Vec<Detection>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Detection {
    sample_token: String,
    #[serde(default)]
    instance_token: Option<String>,
    translation: [f64; 3],
    size: [f64; 3],
    rotation: [f64; 4],
    detection_name: String,
    detection_score: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attributes: BTreeMap<String, String>,
}

fn index<'a, T>(
    table: &'static str,
    rows: &'a [T],
    token: impl Fn(&T) -> &str,
) -> Result<HashMap<&'a str, &'a T>, AdapterError> {
    let mut map = HashMap::with_capacity(rows.len());
    for row in rows {
        if map.insert(token(row), row).is_some() {
            return Err(AdapterError::DuplicateToken {
                table,
                token: token(row).to_string(),
            });
        }
    }
    Ok(map)
}

fn resolve<'a, T>(
    table: &'static str,
    map: &HashMap<&str, &'a T>,
    token: &str,
) -> Result<&'a T, AdapterError> {
    map.get(token)
        .copied()
        .ok_or_else(|| AdapterError::DanglingToken {
            table,
            token: token.to_string(),
        })
}

/// Walks the prev/next links and returns samples in order.
fn sample_chain<'a>(
    samples: &'a [Sample],
    by_token: &HashMap<&str, &'a Sample>,
) -> Result<Vec<&'a Sample>, AdapterError> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    for s in samples {
        for link in [&s.prev, &s.next] {
            if !link.is_empty() {
                resolve("sample", by_token, link)?;
            }
        }
    }
    let heads: Vec<&Sample> = samples.iter().filter(|s| s.prev.is_empty()).collect();
    let [head] = heads.as_slice() else {
        return Err(AdapterError::BrokenChain(format!(
            "{} samples without prev, expected 1",
            heads.len()
        )));
    };
    let mut chain = vec![*head];
    let mut current = *head;
    while !current.next.is_empty() {
        let next = by_token[current.next.as_str()];
        if next.prev != current.token {
            return Err(AdapterError::BrokenChain(format!(
                "{}.next = {} but {}.prev = '{}'",
                current.token, next.token, next.token, next.prev
            )));
        }
        if chain.len() >= samples.len() {
            return Err(AdapterError::BrokenChain("cycle".into()));
        }
        chain.push(next);
        current = next;
    }
    if chain.len() != samples.len() {
        return Err(AdapterError::BrokenChain(format!(
            "{} of {} samples reachable from {}",
            chain.len(),
            samples.len(),
            head.token
        )));
    }
    Ok(chain)
}

fn pose_of(
    translation: [f64; 3],
    rotation: [f64; 4],
    context: impl Fn() -> String,
    warnings: &mut Vec<ConversionWarning>,
) -> Result<SE3Pose, AdapterError> {
    let rotation = checked_rotation(quat_from_array(rotation), context, warnings)?;
    Ok(SE3Pose::new(Vec3::from(translation), rotation))
}

fn is_lidar(c: &CalibratedSensor) -> bool {
    c.modality == "lidar"
}

fn is_camera(c: &CalibratedSensor) -> bool {
    c.modality == "camera"
}

fn read_optional<T: serde::de::DeserializeOwned + Default>(path: &Path) -> Result<T, AdapterError> {
    if path.exists() {
        read_json(path)
    } else {
        Ok(T::default())
    }
}

/// Global-frame boxes of one sample, converted to the ego frame.
fn to_ego_box(
    ego: &SE3Pose,
    translation: [f64; 3],
    size: [f64; 3],
    rotation: [f64; 4],
    context: impl Fn() -> String,
    warnings: &mut Vec<ConversionWarning>,
) -> Result<(Vec3, Size, crate::geometry::Quaternion), AdapterError> {
    let rotation = checked_rotation(quat_from_array(rotation), context, warnings)?;
    let to_ego = ego.inverse();
    let center = to_ego.apply(&Vec3::from(translation));
    let rotation = to_ego.rotation * rotation;
    let [w, l, h] = size;
    Ok((center, Size::new(l, w, h), rotation))
}

fn to_global(ego: &SE3Pose, b: &Box3D) -> ([f64; 3], [f64; 3], [f64; 4]) {
    let center = ego.apply(&b.center);
    let rotation = ego.rotation * b.rotation;
    (
        [center.x, center.y, center.z],
        [b.size.width, b.size.length, b.size.height],
        quat_to_array(&rotation),
    )
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NuscenesAdapter;

impl DatasetAdapter for NuscenesAdapter {
    fn id(&self) -> &'static str {
        "nuscenes"
    }

    fn import(&self, root: &Path) -> Result<Converted<LogBundle>, AdapterError> {
        let mut warnings = Vec::new();
        let samples: Vec<Sample> = read_json(&root.join("sample.json"))?;
        let sample_data: Vec<SampleData> = read_json(&root.join("sample_data.json"))?;
        let annotations: Vec<SampleAnnotation> = read_json(&root.join("sample_annotation.json"))?;
        let ego_poses: Vec<EgoPose> = read_json(&root.join("ego_pose.json"))?;
        let sensors: Vec<CalibratedSensor> = read_json(&root.join("calibrated_sensor.json"))?;
        let categories: Vec<Category> = read_optional(&root.join("category.json"))?;
        let scenes: Vec<Scene> = read_optional(&root.join("scene.json"))?;

        let sample_by = index("sample", &samples, |s| &s.token)?;
        index("sample_data", &sample_data, |s| &s.token)?;
        index("sample_annotation", &annotations, |s| &s.token)?;
        let pose_by = index("ego_pose", &ego_poses, |s| &s.token)?;
        let sensor_by = index("calibrated_sensor", &sensors, |s| &s.token)?;
        index("category", &categories, |s| &s.token)?;

        let log_id = scenes
            .first()
            .map(|s| s.name.clone())
            .unwrap_or_else(|| dir_name(root));
        let mut bundle = LogBundle::new(log_id, SourceDataset::NuscenesStyle);

        for sensor in sensors.iter().filter(|c| is_camera(c)) {
            let ctx = || format!("calibrated_sensor {}", sensor.token);
            let sensor_to_ego = pose_of(sensor.translation, sensor.rotation, ctx, &mut warnings)?;
            let k = &sensor.camera_intrinsic;
            if k.len() != 3 {
                return Err(AdapterError::Inconsistent(format!(
                    "calibrated_sensor {}: camera_intrinsic must be 3x3",
                    sensor.token
                )));
            }
            if bundle.camera(&sensor.channel).is_some() {
                return Err(AdapterError::Inconsistent(format!(
                    "channel {} has more than one calibration",
                    sensor.channel
                )));
            }
            bundle.cameras.push(CameraCalibration {
                name: sensor.channel.clone(),
                extrinsic: sensor_to_ego.inverse(),
                intrinsic: Intrinsics {
                    fx: k[0][0],
                    fy: k[1][1],
                    cx: k[0][2],
                    cy: k[1][2],
                },
                width: sensor.width.unwrap_or(0),
                height: sensor.height.unwrap_or(0),
            });
        }

        let mut data_of: HashMap<&str, Vec<&SampleData>> = HashMap::new();
        for d in &sample_data {
            resolve("sample_data", &sample_by, &d.sample_token)?;
            resolve("sample_data", &pose_by, &d.ego_pose_token)?;
            resolve("sample_data", &sensor_by, &d.calibrated_sensor_token)?;
            if d.is_key_frame {
                data_of.entry(&d.sample_token).or_default().push(d);
            }
        }

        let mut ego_of: HashMap<&str, SE3Pose> = HashMap::new();
        for sample in sample_chain(&samples, &sample_by)? {
            let frame_id = sample.token.clone();
            let mut data = data_of.remove(sample.token.as_str()).unwrap_or_default();
            data.sort_by_key(|d| {
                (
                    !is_lidar(sensor_by[d.calibrated_sensor_token.as_str()]),
                    &d.filename,
                )
            });
            let Some(first) = data.first() else {
                return Err(AdapterError::Inconsistent(format!(
                    "sample {frame_id} has no key-frame sample_data"
                )));
            };
            let ego_row = pose_by[first.ego_pose_token.as_str()];
            let ctx = || format!("ego_pose {}", ego_row.token);
            let ego_pose = pose_of(ego_row.translation, ego_row.rotation, ctx, &mut warnings)?;

            let mut pointcloud_ref = None;
            let mut image_refs = BTreeMap::new();
            for d in &data {
                let sensor = sensor_by[d.calibrated_sensor_token.as_str()];
                let path = root.join(&d.filename);
                if is_lidar(sensor) {
                    if pointcloud_ref.is_some() {
                        continue;
                    }
                    let ctx = || format!("calibrated_sensor {}", sensor.token);
                    let lidar_to_ego =
                        pose_of(sensor.translation, sensor.rotation, ctx, &mut warnings)?;
                    let payload = import_cloud(&path, PCD_BIN, &lidar_to_ego, &mut warnings)?;
                    let rel = layout::pointcloud_file(&frame_id);
                    bundle.payloads.insert(rel.clone(), payload);
                    pointcloud_ref = Some(rel);
                } else if is_camera(sensor) {
                    if !path.is_file() {
                        return Err(AdapterError::Read {
                            path,
                            source: std::io::ErrorKind::NotFound.into(),
                        });
                    }
                    let rel =
                        layout::image_file(&sensor.channel, &frame_id, extension_of(&d.filename));
                    bundle.payloads.insert(rel.clone(), Payload::File(path));
                    image_refs.insert(sensor.channel.clone(), rel);
                }
            }
            let Some(pointcloud_ref) = pointcloud_ref else {
                return Err(AdapterError::Inconsistent(format!(
                    "sample {frame_id} has no lidar sweep"
                )));
            };
            let timestamp = sample.timestamp.checked_mul(1000).ok_or_else(|| {
                AdapterError::Inconsistent(format!("sample {frame_id}: timestamp overflows"))
            })?;
            ego_of.insert(&sample.token, ego_pose);
            bundle.frames.push(FrameRecord {
                frame_id,
                timestamp,
                ego_pose,
                pointcloud_ref,
                image_refs,
            });
        }

        let mut vocabulary: BTreeSet<String> = categories.into_iter().map(|c| c.name).collect();
        for a in &annotations {
            resolve("sample_annotation", &sample_by, &a.sample_token)?;
            let ego = &ego_of[a.sample_token.as_str()];
            let ctx = || format!("sample_annotation {}", a.token);
            let (center, size, rotation) =
                to_ego_box(ego, a.translation, a.size, a.rotation, ctx, &mut warnings)?;
            let mut b = Box3D::new(
                center,
                size,
                rotation,
                a.category_name.clone(),
                a.instance_token.clone(),
            );
            b.attributes = a.attributes.clone();
            vocabulary.insert(a.category_name.clone());
            bundle
                .annotations
                .entry(a.sample_token.clone())
                .or_default()
                .push(b);
        }

        let pred_dir = root.join("predictions");
        if pred_dir.is_dir() {
            let mut files: Vec<_> = fs::read_dir(&pred_dir)
                .map_err(|source| AdapterError::Read {
                    path: pred_dir.clone(),
                    source,
                })?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            files.sort();
            for file in files {
                let set = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let results: DetectionResults = read_json(&file)?;
                let mut boxes = FrameBoxes::new();
                for (sample_token, detections) in &results.results {
                    resolve("predictions", &sample_by, sample_token)?;
                    let ego = &ego_of[sample_token.as_str()];
                    for (i, d) in detections.iter().enumerate() {
                        if d.sample_token != *sample_token {
                            return Err(AdapterError::Inconsistent(format!(
                                "{}: detection filed under {sample_token} names sample {}",
                                file.display(),
                                d.sample_token
                            )));
                        }
                        let ctx = || format!("prediction set {set} sample {sample_token} #{i}");
                        let (center, size, rotation) =
                            to_ego_box(ego, d.translation, d.size, d.rotation, ctx, &mut warnings)?;
                        let id = d.instance_token.clone().unwrap_or_else(|| {
                            derived_token(&[&set, sample_token, &i.to_string()])
                        });
                        let mut b =
                            Box3D::new(center, size, rotation, d.detection_name.clone(), id)
                                .with_confidence(d.detection_score);
                        b.attributes = d.attributes.clone();
                        vocabulary.insert(d.detection_name.clone());
                        boxes.entry(sample_token.clone()).or_default().push(b);
                    }
                }
                bundle.predictions.insert(set, boxes);
            }
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

        let lidar_token = derived_token(&["calibrated_sensor", "lidar", LIDAR_CHANNEL]);
        let mut sensors = vec![CalibratedSensor {
            token: lidar_token.clone(),
            channel: LIDAR_CHANNEL.into(),
            modality: "lidar".into(),
            translation: [0.0; 3],
            rotation: quat_to_array(&crate::geometry::Quaternion::IDENTITY),
            camera_intrinsic: Vec::new(),
            width: None,
            height: None,
        }];
        let mut camera_token = BTreeMap::new();
        for cam in &bundle.cameras {
            let token = derived_token(&["calibrated_sensor", "camera", &cam.name]);
            let to_ego = cam.extrinsic.inverse();
            let k = &cam.intrinsic;
            sensors.push(CalibratedSensor {
                token: token.clone(),
                channel: cam.name.clone(),
                modality: "camera".into(),
                translation: to_ego.translation.into(),
                rotation: quat_to_array(&to_ego.rotation),
                camera_intrinsic: vec![[k.fx, 0.0, k.cx], [0.0, k.fy, k.cy], [0.0, 0.0, 1.0]],
                width: Some(cam.width),
                height: Some(cam.height),
            });
            camera_token.insert(cam.name.as_str(), token);
        }

        let mut samples = Vec::new();
        let mut ego_poses = Vec::new();
        let mut sample_data = Vec::new();
        for (i, frame) in bundle.frames.iter().enumerate() {
            let fid = &frame.frame_id;
            if frame.timestamp % 1000 != 0 {
                warnings.push(ConversionWarning::TimestampTruncated {
                    frame_id: fid.clone(),
                    timestamp_ns: frame.timestamp,
                });
            }
            let timestamp = frame.timestamp.div_euclid(1000);
            let link = |j: Option<usize>| {
                j.and_then(|j| bundle.frames.get(j))
                    .map(|f| f.frame_id.clone())
                    .unwrap_or_default()
            };
            samples.push(Sample {
                token: fid.clone(),
                timestamp,
                prev: link(i.checked_sub(1)),
                next: link(Some(i + 1)),
            });
            let ego_token = derived_token(&["ego_pose", fid]);
            ego_poses.push(EgoPose {
                token: ego_token.clone(),
                timestamp,
                translation: frame.ego_pose.translation.into(),
                rotation: quat_to_array(&frame.ego_pose.rotation),
            });

            let filename = format!(
                "samples/{LIDAR_CHANNEL}/{fid}.{}",
                extension_of(&frame.pointcloud_ref)
            );
            export_payload(bundle, &frame.pointcloud_ref, &root.join(&filename))?;
            sample_data.push(SampleData {
                token: derived_token(&["sample_data", fid, LIDAR_CHANNEL]),
                sample_token: fid.clone(),
                ego_pose_token: ego_token.clone(),
                calibrated_sensor_token: lidar_token.clone(),
                timestamp,
                filename,
                is_key_frame: true,
            });
            for (camera, rel) in &frame.image_refs {
                let filename = format!("samples/{camera}/{fid}.{}", extension_of(rel));
                export_payload(bundle, rel, &root.join(&filename))?;
                let sensor_token = camera_token.get(camera.as_str()).cloned().ok_or_else(|| {
                    AdapterError::Inconsistent(format!("unknown camera {camera}"))
                })?;
                sample_data.push(SampleData {
                    token: derived_token(&["sample_data", fid, camera]),
                    sample_token: fid.clone(),
                    ego_pose_token: ego_token.clone(),
                    calibrated_sensor_token: sensor_token,
                    timestamp,
                    filename,
                    is_key_frame: true,
                });
            }
        }

        let mut annotations = Vec::new();
        for frame in &bundle.frames {
            for b in bundle.boxes(&frame.frame_id) {
                let (translation, size, rotation) = to_global(&frame.ego_pose, b);
                annotations.push(SampleAnnotation {
                    token: derived_token(&["sample_annotation", &frame.frame_id, &b.instance_id]),
                    sample_token: frame.frame_id.clone(),
                    instance_token: b.instance_id.clone(),
                    translation,
                    size,
                    rotation,
                    category_name: b.category.clone(),
                    attributes: b.attributes.clone(),
                });
            }
        }

        let categories: Vec<Category> = bundle
            .vocabulary
            .iter()
            .map(|name| Category {
                token: derived_token(&["category", name]),
                name: name.clone(),
            })
            .collect();
        let scenes = vec![Scene {
            token: derived_token(&["scene", &bundle.log_id]),
            name: bundle.log_id.clone(),
            first_sample_token: samples.first().map(|s| s.token.clone()).unwrap_or_default(),
            last_sample_token: samples.last().map(|s| s.token.clone()).unwrap_or_default(),
            nbr_samples: samples.len(),
        }];

        write_json(&root.join("sample.json"), &samples)?;
        write_json(&root.join("sample_data.json"), &sample_data)?;
        write_json(&root.join("sample_annotation.json"), &annotations)?;
        write_json(&root.join("ego_pose.json"), &ego_poses)?;
        write_json(&root.join("calibrated_sensor.json"), &sensors)?;
        write_json(&root.join("category.json"), &categories)?;
        write_json(&root.join("scene.json"), &scenes)?;

        if !bundle.predictions.is_empty() {
            create_dir(&root.join("predictions"))?;
        }
        for (set, frames) in &bundle.predictions {
            let mut results = BTreeMap::new();
            for frame in &bundle.frames {
                let list = frames
                    .get(&frame.frame_id)
                    .map(Vec::as_slice)
                    .unwrap_or(&[])
                    .iter()
                    .map(|b| {
                        let (translation, size, rotation) = to_global(&frame.ego_pose, b);
                        Detection {
                            sample_token: frame.frame_id.clone(),
                            instance_token: Some(b.instance_id.clone()),
                            translation,
                            size,
                            rotation,
                            detection_name: b.category.clone(),
                            detection_score: b.confidence.unwrap_or(0.0),
                            attributes: b.attributes.clone(),
                        }
                    })
                    .collect();
                results.insert(frame.frame_id.clone(), list);
            }
            let file = DetectionResults {
                meta: BTreeMap::from([("use_lidar".to_string(), serde_json::Value::Bool(true))]),
                results,
            };
            write_json(&root.join("predictions").join(format!("{set}.json")), &file)?;
        }

        Ok(Converted {
            value: (),
            warnings,
        })
    }
}
