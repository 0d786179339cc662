//! Domain types of the native interchange format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::{Quaternion, SE3Pose, Vec3};

/// Box extents in meters. `length` runs along the box-local x axis.
///
/// Serialized as `[length, width, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Size {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Size {
    pub const fn new(length: f64, width: f64, height: f64) -> Self {
        Self {
            length,
            width,
            height,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.length > 0.0 && self.width > 0.0 && self.height > 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.length.is_finite() && self.width.is_finite() && self.height.is_finite()
    }

    pub fn half_extents(&self) -> Vec3 {
        Vec3::new(self.length, self.width, self.height) * 0.5
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.length, self.width, self.height]
    }
}

impl Serialize for Size {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.as_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Size {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [l, w, h] = <[f64; 3]>::deserialize(deserializer)?;
        Ok(Size::new(l, w, h))
    }
}

/// Oriented 3D cuboid annotation, expressed in the ego frame of its frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Vec3,
    pub size: Size,
    pub rotation: Quaternion,
    pub category: String,
    #[serde(default)]
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    #[serde(default)]
    pub modified: bool,
}

impl Box3D {
    pub fn new(
        center: Vec3,
        size: Size,
        rotation: Quaternion,
        category: impl Into<String>,
        instance_id: impl Into<String>,
    ) -> Self {
        Self {
            center,
            size,
            rotation,
            category: category.into(),
            instance_id: instance_id.into(),
            confidence: None,
            attributes: BTreeMap::new(),
            modified: false,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = Some(confidence);
        self
    }

    /// Euclidean distance of the center from the ego origin.
    pub fn ego_distance(&self) -> f64 {
        self.center.norm()
    }
}

/// Fresh 128-bit random id rendered as 32 lowercase hex digits.
pub fn new_instance_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Pinhole camera. `extrinsic` maps ego coordinates into the camera's optical
/// frame (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraCalibration {
    pub name: String,
    pub extrinsic: SE3Pose,
    pub intrinsic: Intrinsics,
    pub width: u32,
    pub height: u32,
}

impl CameraCalibration {
    pub fn has_valid_intrinsics(&self) -> bool {
        let k = &self.intrinsic;
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        k.fx > 0.0 && k.fy > 0.0 && k.cx > 0.0 && k.cx < w && k.cy > 0.0 && k.cy < h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    /// Nanoseconds.
    pub timestamp: i64,
    /// ego → global.
    pub ego_pose: SE3Pose,
    pub pointcloud_ref: String,
    #[serde(default)]
    pub image_refs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceDataset {
    NuscenesStyle,
    ArgoverseStyle,
    WaymoStyle,
    Native,
}

impl SourceDataset {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceDataset::NuscenesStyle => "nuscenes_style",
            SourceDataset::ArgoverseStyle => "argoverse_style",
            SourceDataset::WaymoStyle => "waymo_style",
            SourceDataset::Native => "native",
        }
    }
}

impl fmt::Display for SourceDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceDataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nuscenes_style" => Ok(SourceDataset::NuscenesStyle),
            "argoverse_style" => Ok(SourceDataset::ArgoverseStyle),
            "waymo_style" => Ok(SourceDataset::WaymoStyle),
            "native" => Ok(SourceDataset::Native),
            other => Err(format!("unknown source dataset '{other}'")),
        }
    }
}

/// frame_id → boxes of that frame.
pub type FrameBoxes = BTreeMap<String, Vec<Box3D>>;

/// Where the bytes of a sensor file live.
#[derive(Debug, Clone)]
pub enum Payload {
    File(PathBuf),
    Bytes(Arc<[u8]>),
}

impl Payload {
    pub fn read(&self) -> std::io::Result<Vec<u8>> {
        match self {
            Payload::File(path) => std::fs::read(path),
            Payload::Bytes(bytes) => Ok(bytes.to_vec()),
        }
    }

    /// Writes the payload to `dest`, hard-linking when the source is a file.
    pub fn materialize(&self, dest: &Path) -> std::io::Result<()> {
        match self {
            Payload::File(src) => {
                if src == dest {
                    return Ok(());
                }
                if std::fs::hard_link(src, dest).is_err() {
                    std::fs::copy(src, dest)?;
                }
                Ok(())
            }
            Payload::Bytes(bytes) => std::fs::write(dest, bytes),
        }
    }
}

/// One converted driving log.
///
/// `payloads` maps the relative sensor paths referenced by frames to their
/// bytes and takes no part in equality.
#[derive(Debug, Clone)]
pub struct LogBundle {
    pub log_id: String,
    pub source_dataset: SourceDataset,
    pub cameras: Vec<CameraCalibration>,
    pub frames: Vec<FrameRecord>,
    pub annotations: FrameBoxes,
    pub predictions: BTreeMap<String, FrameBoxes>,
    pub vocabulary: Vec<String>,
    pub payloads: BTreeMap<String, Payload>,
}

impl PartialEq for LogBundle {
    fn eq(&self, other: &Self) -> bool {
        self.log_id == other.log_id
            && self.source_dataset == other.source_dataset
            && self.cameras == other.cameras
            && self.frames == other.frames
            && self.annotations == other.annotations
            && self.predictions == other.predictions
            && self.vocabulary == other.vocabulary
    }
}

impl LogBundle {
    pub fn new(log_id: impl Into<String>, source_dataset: SourceDataset) -> Self {
        Self {
            log_id: log_id.into(),
            source_dataset,
            cameras: Vec::new(),
            frames: Vec::new(),
            annotations: BTreeMap::new(),
            predictions: BTreeMap::new(),
            vocabulary: Vec::new(),
            payloads: BTreeMap::new(),
        }
    }

    pub fn frame(&self, frame_id: &str) -> Option<&FrameRecord> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    pub fn has_frame(&self, frame_id: &str) -> bool {
        self.frame(frame_id).is_some()
    }

    pub fn camera(&self, name: &str) -> Option<&CameraCalibration> {
        self.cameras.iter().find(|c| c.name == name)
    }

    pub fn boxes(&self, frame_id: &str) -> &[Box3D] {
        self.annotations
            .get(frame_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn prediction_boxes(&self, set: &str, frame_id: &str) -> &[Box3D] {
        self.predictions
            .get(set)
            .and_then(|s| s.get(frame_id))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn has_category(&self, label: &str) -> bool {
        self.vocabulary
            .binary_search_by(|v| v.as_str().cmp(label))
            .is_ok()
    }

    /// Inserts `label` keeping the vocabulary sorted. Returns false if present.
    pub fn insert_category(&mut self, label: &str) -> bool {
        match self.vocabulary.binary_search_by(|v| v.as_str().cmp(label)) {
            Ok(_) => false,
            Err(pos) => {
                self.vocabulary.insert(pos, label.to_string());
                true
            }
        }
    }

    pub fn box_count(&self) -> usize {
        self.annotations.values().map(Vec::len).sum()
    }

    /// Puts the bundle in canonical form: per-frame box lists sorted by
    /// instance id, an entry for every frame in the annotation map and in
    /// every prediction set, and a sorted, de-duplicated vocabulary.
    pub fn canonicalize(&mut self) {
        for frame in &self.frames {
            self.annotations.entry(frame.frame_id.clone()).or_default();
            for set in self.predictions.values_mut() {
                set.entry(frame.frame_id.clone()).or_default();
            }
        }
        for boxes in self.annotations.values_mut() {
            sort_boxes(boxes);
        }
        for set in self.predictions.values_mut() {
            for boxes in set.values_mut() {
                sort_boxes(boxes);
            }
        }
        self.vocabulary.sort();
        self.vocabulary.dedup();
    }
}

pub fn sort_boxes(boxes: &mut [Box3D]) {
    boxes.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
}

/// Frame ids double as file names in the native layout.
pub fn is_valid_file_stem(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && !id.contains(['/', '\\', '\0'])
        && id.chars().all(|c| !c.is_control())
}
