//! The native on-disk layout.
//!
//! ```text
//! <log_root>/metadata.json
//! <log_root>/frames.json
//! <log_root>/pointclouds/<frame_id>.rbpc
//! <log_root>/images/<camera>/<frame_id>.png|jpg
//! <log_root>/annotations/<frame_id>.json
//! <log_root>/predictions/<set_name>/<frame_id>.json
//! ```
//!
//! JSON is written with sorted keys and shortest round-trip float
//! formatting, so saving the same bundle twice produces identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Box3D, CameraCalibration, FrameBoxes, FrameRecord, LogBundle, Payload, SourceDataset,
};
use crate::pointcloud::PointCloud;
use crate::validate::{validate_bundle, Rule, Violation};

pub mod layout {
    pub const METADATA: &str = "metadata.json";
    pub const FRAMES: &str = "frames.json";
    pub const POINTCLOUDS_DIR: &str = "pointclouds";
    pub const IMAGES_DIR: &str = "images";
    pub const ANNOTATIONS_DIR: &str = "annotations";
    pub const PREDICTIONS_DIR: &str = "predictions";

    pub fn annotation_file(frame_id: &str) -> String {
        format!("{ANNOTATIONS_DIR}/{frame_id}.json")
    }

    pub fn prediction_file(set: &str, frame_id: &str) -> String {
        format!("{PREDICTIONS_DIR}/{set}/{frame_id}.json")
    }

    pub fn pointcloud_file(frame_id: &str) -> String {
        format!("{POINTCLOUDS_DIR}/{frame_id}.rbpc")
    }

    pub fn image_file(camera: &str, frame_id: &str, extension: &str) -> String {
        format!("{IMAGES_DIR}/{camera}/{frame_id}.{extension}")
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("invalid log ({} violations), first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error("bundle references {0} but carries no payload for it")]
    MissingPayload(String),
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed {}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
}

impl StoreError {
    fn write(path: impl Into<PathBuf>, source: io::Error) -> Self {
        StoreError::Write {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    log_id: String,
    source_dataset: SourceDataset,
    vocabulary: Vec<String>,
    cameras: Vec<CameraCalibration>,
}

/// Serializes with sorted object keys, two-space indent, trailing newline.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("domain types serialize to JSON");
    let mut out = serde_json::to_vec_pretty(&value).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(
        ".{name}.tmp-{}",
        &crate::model::new_instance_id()[..8]
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Loads and fully validates a native log.
pub fn load_log(root: &Path) -> Result<LogBundle, StoreError> {
    let (bundle, violations) = scan_log(root);
    if violations.is_empty() {
        if let Some(bundle) = bundle {
            return Ok(bundle);
        }
    }
    if let Some(missing) = violations
        .iter()
        .find(|v| matches!(v.rule, Rule::MissingFile | Rule::MissingPayload))
    {
        return Err(StoreError::MissingFile(root.join(&missing.file)));
    }
    Err(StoreError::Invalid(violations))
}

/// Every invariant violation found under `root`. Empty iff [`load_log`]
/// succeeds.
pub fn validate_log(root: &Path) -> Vec<Violation> {
    scan_log(root).1
}

fn read_json<T: for<'de> Deserialize<'de>>(
    root: &Path,
    rel: &str,
    violations: &mut Vec<Violation>,
) -> Option<T> {
    let path = root.join(rel);
    let bytes = match fs::read(&path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            violations.push(Violation::new(Rule::MissingFile, rel, "not found"));
            return None;
        }
        Err(e) => {
            violations.push(Violation::new(Rule::MalformedFile, rel, e.to_string()));
            return None;
        }
    };
    match serde_json::from_slice(&bytes) {
        Ok(v) => Some(v),
        Err(e) => {
            violations.push(Violation::new(Rule::MalformedFile, rel, e.to_string()));
            None
        }
    }
}

fn json_stems(dir: &Path) -> io::Result<Vec<String>> {
    let mut stems = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            if let Some(stem) = path.file_stem() {
                let stem = stem.to_string_lossy().into_owned();
                if !stem.starts_with('.') {
                    stems.push(stem);
                }
            }
        }
    }
    stems.sort();
    Ok(stems)
}

fn read_box_dir(root: &Path, rel_dir: &str, violations: &mut Vec<Violation>) -> FrameBoxes {
    let mut out = FrameBoxes::new();
    let dir = root.join(rel_dir);
    if !dir.is_dir() {
        return out;
    }
    let stems = match json_stems(&dir) {
        Ok(stems) => stems,
        Err(e) => {
            violations.push(Violation::new(Rule::MalformedFile, rel_dir, e.to_string()));
            return out;
        }
    };
    for stem in stems {
        let rel = format!("{rel_dir}/{stem}.json");
        if let Some(boxes) = read_json::<Vec<Box3D>>(root, &rel, violations) {
            out.insert(stem, boxes);
        } else if let Some(v) = violations.last_mut() {
            v.frame_id = Some(stem);
        }
    }
    out
}

fn is_contained_relative(rel: &str) -> bool {
    let path = Path::new(rel);
    !rel.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_)))
}

fn check_payloads(root: &Path, bundle: &mut LogBundle, violations: &mut Vec<Violation>) {
    for frame in &bundle.frames {
        let fid = &frame.frame_id;
        let refs = std::iter::once((&frame.pointcloud_ref, true))
            .chain(frame.image_refs.values().map(|r| (r, false)));
        for (rel, is_cloud) in refs {
            if !is_contained_relative(rel) {
                violations.push(
                    Violation::new(
                        Rule::MissingPayload,
                        rel.as_str(),
                        "path escapes the log root",
                    )
                    .in_frame(fid),
                );
                continue;
            }
            let path = root.join(rel);
            if !path.is_file() {
                violations.push(
                    Violation::new(Rule::MissingPayload, rel.as_str(), "not found").in_frame(fid),
                );
                continue;
            }
            if is_cloud {
                check_cloud(&path, rel, fid, violations);
            }
            bundle.payloads.insert(rel.clone(), Payload::File(path));
        }
    }
}

fn check_cloud(path: &Path, rel: &str, fid: &str, violations: &mut Vec<Violation>) {
    let cloud = match fs::read(path)
        .map_err(|e| e.to_string())
        .and_then(|b| PointCloud::decode(&b).map_err(|e| e.to_string()))
    {
        Ok(cloud) => cloud,
        Err(e) => {
            violations.push(Violation::new(Rule::MalformedPointCloud, rel, e).in_frame(fid));
            return;
        }
    };
    if let Some(i) = cloud.first_non_finite() {
        violations
            .push(Violation::new(Rule::NonFinitePoint, rel, format!("point {i}")).in_frame(fid));
    }
    if let Some(i) = cloud.first_intensity_out_of_range() {
        violations.push(
            Violation::new(
                Rule::IntensityOutOfRange,
                rel,
                format!("point {i}: {}", cloud.points[i][3]),
            )
            .in_frame(fid),
        );
    }
}

fn scan_log(root: &Path) -> (Option<LogBundle>, Vec<Violation>) {
    let mut violations = Vec::new();
    let metadata: Option<Metadata> = read_json(root, layout::METADATA, &mut violations);
    let frames: Option<Vec<FrameRecord>> = read_json(root, layout::FRAMES, &mut violations);
    let (Some(metadata), Some(frames)) = (metadata, frames) else {
        return (None, violations);
    };

    let mut bundle = LogBundle::new(metadata.log_id, metadata.source_dataset);
    bundle.vocabulary = metadata.vocabulary;
    bundle.cameras = metadata.cameras;
    bundle.frames = frames;
    bundle.annotations = read_box_dir(root, layout::ANNOTATIONS_DIR, &mut violations);

    let pred_root = root.join(layout::PREDICTIONS_DIR);
    if pred_root.is_dir() {
        match fs::read_dir(&pred_root) {
            Ok(entries) => {
                let mut sets: Vec<String> = entries
                    .filter_map(Result::ok)
                    .filter(|e| e.path().is_dir())
                    .map(|e| e.file_name().to_string_lossy().into_owned())
                    .filter(|n| !n.starts_with('.'))
                    .collect();
                sets.sort();
                for set in sets {
                    let rel = format!("{}/{set}", layout::PREDICTIONS_DIR);
                    let boxes = read_box_dir(root, &rel, &mut violations);
                    bundle.predictions.insert(set, boxes);
                }
            }
            Err(e) => violations.push(Violation::new(
                Rule::MalformedFile,
                layout::PREDICTIONS_DIR,
                e.to_string(),
            )),
        }
    }

    // Sorting and filling empty frames happens after validation so that
    // unknown-frame files are still reported.
    violations.extend(validate_bundle(&bundle));
    check_payloads(root, &mut bundle, &mut violations);
    bundle.canonicalize();
    (Some(bundle), violations)
}

/// Reads a directory of `<frame_id>.json` box files.
pub fn read_frame_boxes(dir: &Path) -> Result<FrameBoxes, StoreError> {
    if !dir.is_dir() {
        return Err(StoreError::MissingFile(dir.to_path_buf()));
    }
    let stems = json_stems(dir).map_err(|source| StoreError::Read {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = FrameBoxes::new();
    for stem in stems {
        let path = dir.join(format!("{stem}.json"));
        let bytes = fs::read(&path).map_err(|source| StoreError::Read {
            path: path.clone(),
            source,
        })?;
        let boxes = serde_json::from_slice(&bytes).map_err(|e| StoreError::Malformed {
            path: path.clone(),
            message: e.to_string(),
        })?;
        out.insert(stem, boxes);
    }
    Ok(out)
}

/// Writes one box file in canonical form (sorted by instance id).
pub fn write_box_file(path: &Path, boxes: &[Box3D]) -> io::Result<()> {
    let mut sorted = boxes.to_vec();
    crate::model::sort_boxes(&mut sorted);
    atomic_write(path, &to_canonical_json(&sorted))
}

fn metadata_bytes(bundle: &LogBundle) -> Vec<u8> {
    to_canonical_json(&Metadata {
        log_id: bundle.log_id.clone(),
        source_dataset: bundle.source_dataset,
        vocabulary: bundle.vocabulary.clone(),
        cameras: bundle.cameras.clone(),
    })
}

fn sibling(root: &Path, tag: &str) -> PathBuf {
    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "log".into());
    let suffix = &crate::model::new_instance_id()[..12];
    root.with_file_name(format!(".{name}.{tag}-{suffix}"))
}

/// Writes the complete log under `root`, replacing anything there.
///
/// The log is assembled in a sibling temp directory and swapped in with
/// renames. If writing fails the temp directory is left in place for
/// inspection and `root` is untouched.
pub fn save_log(bundle: &LogBundle, root: &Path) -> Result<(), StoreError> {
    let violations = validate_bundle(bundle);
    if !violations.is_empty() {
        return Err(StoreError::Invalid(violations));
    }
    let mut payload_refs = Vec::new();
    for frame in &bundle.frames {
        payload_refs.push(&frame.pointcloud_ref);
        payload_refs.extend(frame.image_refs.values());
    }
    for rel in &payload_refs {
        if !bundle.payloads.contains_key(rel.as_str()) || !is_contained_relative(rel) {
            return Err(StoreError::MissingPayload((*rel).clone()));
        }
    }

    if let Some(parent) = root.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| StoreError::write(parent, e))?;
    }
    let staging = sibling(root, "tmp");
    if let Err(e) = write_tree(bundle, &payload_refs, &staging) {
        if staging.exists() {
            log::warn!("partial log left at {}", staging.display());
        }
        return Err(e);
    }

    if root.exists() {
        let old = sibling(root, "old");
        fs::rename(root, &old).map_err(|e| StoreError::write(root, e))?;
        if let Err(e) = fs::rename(&staging, root) {
            let _ = fs::rename(&old, root);
            return Err(StoreError::write(root, e));
        }
        if let Err(e) = fs::remove_dir_all(&old) {
            log::warn!("could not remove {}: {e}", old.display());
        }
    } else {
        fs::rename(&staging, root).map_err(|e| StoreError::write(root, e))?;
    }
    Ok(())
}

fn write_tree(bundle: &LogBundle, payload_refs: &[&String], dir: &Path) -> Result<(), StoreError> {
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| StoreError::write(p, e));
    let write = |rel: &str, bytes: &[u8]| {
        let path = dir.join(rel);
        fs::write(&path, bytes).map_err(|e| StoreError::write(path, e))
    };
    mkdir(dir)?;
    write(layout::METADATA, &metadata_bytes(bundle))?;
    write(layout::FRAMES, &to_canonical_json(&bundle.frames))?;

    mkdir(&dir.join(layout::ANNOTATIONS_DIR))?;
    for frame in &bundle.frames {
        let rel = layout::annotation_file(&frame.frame_id);
        let mut boxes = bundle.boxes(&frame.frame_id).to_vec();
        crate::model::sort_boxes(&mut boxes);
        write(&rel, &to_canonical_json(&boxes))?;
    }
    for set in bundle.predictions.keys() {
        mkdir(&dir.join(layout::PREDICTIONS_DIR).join(set))?;
        for frame in &bundle.frames {
            let rel = layout::prediction_file(set, &frame.frame_id);
            let mut boxes = bundle.prediction_boxes(set, &frame.frame_id).to_vec();
            crate::model::sort_boxes(&mut boxes);
            write(&rel, &to_canonical_json(&boxes))?;
        }
    }

    let mut made = BTreeSet::new();
    for rel in payload_refs {
        let dest = dir.join(rel.as_str());
        if let Some(parent) = dest.parent() {
            if made.insert(parent.to_path_buf()) {
                mkdir(parent)?;
            }
        }
        bundle.payloads[rel.as_str()]
            .materialize(&dest)
            .map_err(|e| StoreError::write(&dest, e))?;
    }
    Ok(())
}

/// Rewrites the annotation files of `frames` in place, and `metadata.json`
/// when `metadata` is set. Returns the relative paths written.
pub fn save_frames(
    bundle: &LogBundle,
    root: &Path,
    frames: &BTreeSet<String>,
    metadata: bool,
) -> Result<Vec<String>, StoreError> {
    let mut written = Vec::new();
    if metadata {
        let path = root.join(layout::METADATA);
        atomic_write(&path, &metadata_bytes(bundle)).map_err(|e| StoreError::write(path, e))?;
        written.push(layout::METADATA.to_string());
    }
    if !frames.is_empty() {
        let dir = root.join(layout::ANNOTATIONS_DIR);
        fs::create_dir_all(&dir).map_err(|e| StoreError::write(&dir, e))?;
    }
    for frame_id in frames {
        let rel = layout::annotation_file(frame_id);
        let path = root.join(&rel);
        write_box_file(&path, bundle.boxes(frame_id)).map_err(|e| StoreError::write(path, e))?;
        written.push(rel);
    }
    Ok(written)
}

/// Relative paths of all files under `root`, mapped to their bytes.
pub fn snapshot_tree(root: &Path) -> io::Result<BTreeMap<String, Vec<u8>>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) -> io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(base, &path, out)?;
            } else {
                let rel = path
                    .strip_prefix(base)
                    .expect("walked path is under base")
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, fs::read(&path)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}
