//! Invariant checks over a [`LogBundle`]. Violations are data, not errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::model::{is_valid_file_stem, Box3D, FrameBoxes, LogBundle};
use crate::store::layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(into = "&'static str")]
pub enum Rule {
    MissingFile,
    MalformedFile,
    MissingPayload,
    MalformedPointCloud,
    NonFinitePoint,
    IntensityOutOfRange,
    InvalidLogId,
    DuplicateFrame,
    InvalidFrameId,
    TimestampsNotIncreasing,
    EgoPoseNotNormalized,
    DuplicateCamera,
    InvalidCameraName,
    InvalidIntrinsics,
    ExtrinsicNotNormalized,
    UnknownCamera,
    UnknownFrame,
    InvalidPredictionSet,
    NonPositiveSize,
    NonFiniteValue,
    RotationNotNormalized,
    UnknownCategory,
    DuplicateInstanceId,
    UnexpectedConfidence,
    MissingConfidence,
    ConfidenceOutOfRange,
    InvalidCategory,
    DuplicateCategory,
    InvalidInstanceId,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::MissingFile => "missing file",
            Rule::MalformedFile => "malformed file",
            Rule::MissingPayload => "missing payload",
            Rule::MalformedPointCloud => "malformed point cloud",
            Rule::NonFinitePoint => "non-finite point",
            Rule::IntensityOutOfRange => "intensity out of range",
            Rule::InvalidLogId => "invalid log id",
            Rule::DuplicateFrame => "duplicate frame",
            Rule::InvalidFrameId => "invalid frame id",
            Rule::TimestampsNotIncreasing => "timestamps not increasing",
            Rule::EgoPoseNotNormalized => "ego pose not normalized",
            Rule::DuplicateCamera => "duplicate camera",
            Rule::InvalidCameraName => "invalid camera name",
            Rule::InvalidIntrinsics => "invalid intrinsics",
            Rule::ExtrinsicNotNormalized => "extrinsic not normalized",
            Rule::UnknownCamera => "unknown camera",
            Rule::UnknownFrame => "unknown frame",
            Rule::InvalidPredictionSet => "invalid prediction set",
            Rule::NonPositiveSize => "non-positive size",
            Rule::NonFiniteValue => "non-finite value",
            Rule::RotationNotNormalized => "rotation not normalized",
            Rule::UnknownCategory => "unknown category",
            Rule::DuplicateInstanceId => "duplicate instance id",
            Rule::UnexpectedConfidence => "unexpected confidence",
            Rule::MissingConfidence => "missing confidence",
            Rule::ConfidenceOutOfRange => "confidence out of range",
            Rule::InvalidCategory => "invalid category",
            Rule::DuplicateCategory => "duplicate category",
            Rule::InvalidInstanceId => "invalid instance id",
        }
    }
}

impl From<Rule> for &'static str {
    fn from(rule: Rule) -> Self {
        rule.name()
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One broken invariant, located by file (relative to the log root) and,
/// where applicable, frame and box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub file: String,
    pub frame_id: Option<String>,
    pub instance_id: Option<String>,
    pub rule: Rule,
    pub detail: String,
}

impl Violation {
    pub fn new(rule: Rule, file: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            file: file.into(),
            frame_id: None,
            instance_id: None,
            rule,
            detail: detail.into(),
        }
    }

    pub fn in_frame(mut self, frame_id: impl Into<String>) -> Self {
        self.frame_id = Some(frame_id.into());
        self
    }

    pub fn on_box(mut self, instance_id: impl Into<String>) -> Self {
        self.instance_id = Some(instance_id.into());
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.file, self.rule)?;
        if let Some(frame) = &self.frame_id {
            write!(f, " [frame {frame}]")?;
        }
        if let Some(id) = &self.instance_id {
            write!(f, " [box {id}]")?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of the bundle. Sensor payload contents
/// are checked separately by [`crate::store::validate_log`].
pub fn validate_bundle(bundle: &LogBundle) -> Vec<Violation> {
    let mut out = Vec::new();

    if !is_valid_file_stem(&bundle.log_id) {
        out.push(Violation::new(
            Rule::InvalidLogId,
            layout::METADATA,
            format!("'{}'", bundle.log_id),
        ));
    }
    check_vocabulary(bundle, &mut out);
    check_cameras(bundle, &mut out);
    check_frames(bundle, &mut out);

    let frames: BTreeSet<&str> = bundle.frames.iter().map(|f| f.frame_id.as_str()).collect();
    check_frame_boxes(bundle, &frames, &bundle.annotations, None, &mut out);
    for (set, boxes) in &bundle.predictions {
        if !is_valid_file_stem(set) {
            out.push(Violation::new(
                Rule::InvalidPredictionSet,
                format!("{}/{set}", layout::PREDICTIONS_DIR),
                format!("'{set}'"),
            ));
        }
        check_frame_boxes(bundle, &frames, boxes, Some(set), &mut out);
    }
    out
}

fn check_vocabulary(bundle: &LogBundle, out: &mut Vec<Violation>) {
    let mut seen = BTreeSet::new();
    for label in &bundle.vocabulary {
        if label.trim().is_empty() {
            out.push(Violation::new(
                Rule::InvalidCategory,
                layout::METADATA,
                "empty category label",
            ));
        }
        if !seen.insert(label) {
            out.push(Violation::new(
                Rule::DuplicateCategory,
                layout::METADATA,
                format!("'{label}'"),
            ));
        }
    }
}

fn check_cameras(bundle: &LogBundle, out: &mut Vec<Violation>) {
    let mut seen = BTreeSet::new();
    for cam in &bundle.cameras {
        if !seen.insert(cam.name.as_str()) {
            out.push(Violation::new(
                Rule::DuplicateCamera,
                layout::METADATA,
                format!("'{}'", cam.name),
            ));
        }
        if !is_valid_file_stem(&cam.name) {
            out.push(Violation::new(
                Rule::InvalidCameraName,
                layout::METADATA,
                format!("'{}'", cam.name),
            ));
        }
        if !cam.has_valid_intrinsics() {
            out.push(Violation::new(
                Rule::InvalidIntrinsics,
                layout::METADATA,
                format!(
                    "camera '{}': fx={} fy={} cx={} cy={} for {}x{}",
                    cam.name,
                    cam.intrinsic.fx,
                    cam.intrinsic.fy,
                    cam.intrinsic.cx,
                    cam.intrinsic.cy,
                    cam.width,
                    cam.height
                ),
            ));
        }
        if !cam.extrinsic.is_finite() || !cam.extrinsic.rotation.is_unit() {
            out.push(Violation::new(
                Rule::ExtrinsicNotNormalized,
                layout::METADATA,
                format!("camera '{}'", cam.name),
            ));
        }
    }
}

fn check_frames(bundle: &LogBundle, out: &mut Vec<Violation>) {
    let mut seen = BTreeSet::new();
    let mut previous: Option<i64> = None;
    for frame in &bundle.frames {
        let fid = frame.frame_id.as_str();
        if !seen.insert(fid) {
            out.push(Violation::new(Rule::DuplicateFrame, layout::FRAMES, "").in_frame(fid));
        }
        if !is_valid_file_stem(fid) {
            out.push(
                Violation::new(Rule::InvalidFrameId, layout::FRAMES, format!("'{fid}'"))
                    .in_frame(fid),
            );
        }
        if let Some(prev) = previous {
            if frame.timestamp <= prev {
                out.push(
                    Violation::new(
                        Rule::TimestampsNotIncreasing,
                        layout::FRAMES,
                        format!("{} follows {}", frame.timestamp, prev),
                    )
                    .in_frame(fid),
                );
            }
        }
        previous = Some(frame.timestamp);
        if !frame.ego_pose.is_finite() || !frame.ego_pose.rotation.is_unit() {
            out.push(Violation::new(Rule::EgoPoseNotNormalized, layout::FRAMES, "").in_frame(fid));
        }
        for camera in frame.image_refs.keys() {
            if bundle.camera(camera).is_none() {
                out.push(
                    Violation::new(Rule::UnknownCamera, layout::FRAMES, format!("'{camera}'"))
                        .in_frame(fid),
                );
            }
        }
    }
}

fn check_frame_boxes(
    bundle: &LogBundle,
    frames: &BTreeSet<&str>,
    boxes: &FrameBoxes,
    prediction_set: Option<&str>,
    out: &mut Vec<Violation>,
) {
    for (frame_id, list) in boxes {
        let file = match prediction_set {
            Some(set) => layout::prediction_file(set, frame_id),
            None => layout::annotation_file(frame_id),
        };
        if !frames.contains(frame_id.as_str()) {
            out.push(Violation::new(Rule::UnknownFrame, &file, "").in_frame(frame_id));
        }
        let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
        for b in list {
            *ids.entry(b.instance_id.as_str()).or_default() += 1;
            check_box(bundle, b, prediction_set.is_some(), &file, frame_id, out);
        }
        for (id, count) in ids {
            if count > 1 {
                out.push(
                    Violation::new(Rule::DuplicateInstanceId, &file, format!("{count} boxes"))
                        .in_frame(frame_id)
                        .on_box(id),
                );
            }
        }
    }
}

fn check_box(
    bundle: &LogBundle,
    b: &Box3D,
    is_prediction: bool,
    file: &str,
    frame_id: &str,
    out: &mut Vec<Violation>,
) {
    let at = |rule: Rule, detail: String| {
        Violation::new(rule, file, detail)
            .in_frame(frame_id)
            .on_box(&b.instance_id)
    };
    let finite = b.center.iter().all(|v| v.is_finite())
        && b.size.is_finite()
        && b.rotation.is_finite()
        && b.confidence.is_none_or(f64::is_finite);
    if !finite {
        out.push(at(Rule::NonFiniteValue, String::new()));
    }
    if b.instance_id.is_empty() {
        out.push(at(Rule::InvalidInstanceId, "empty instance id".into()));
    }
    if !b.size.is_positive() {
        out.push(at(
            Rule::NonPositiveSize,
            format!(
                "length={} width={} height={}",
                b.size.length, b.size.width, b.size.height
            ),
        ));
    }
    if !b.rotation.is_unit() {
        out.push(at(
            Rule::RotationNotNormalized,
            format!("norm {}", b.rotation.norm()),
        ));
    }
    if !bundle.has_category(&b.category) {
        out.push(at(Rule::UnknownCategory, format!("'{}'", b.category)));
    }
    match (is_prediction, b.confidence) {
        (false, Some(_)) => out.push(at(Rule::UnexpectedConfidence, String::new())),
        (true, None) => out.push(at(Rule::MissingConfidence, String::new())),
        (true, Some(c)) if !(0.0..=1.0).contains(&c) => {
            out.push(at(Rule::ConfidenceOutOfRange, format!("{c}")))
        }
        _ => {}
    }
}
