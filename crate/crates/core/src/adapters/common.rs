use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AdapterError, ConversionWarning, RENORMALIZE_LIMIT};
use crate::geometry::{Quaternion, SE3Pose};
use crate::model::{Box3D, FrameBoxes, LogBundle, Payload};
use crate::pointcloud::{self, PointCloud};
use crate::store::to_canonical_json;
use crate::validate::validate_bundle;

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, AdapterError> {
    fs::read(path).map_err(|source| AdapterError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, AdapterError> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| AdapterError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), AdapterError> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|source| AdapterError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize + ?Sized>(
    path: &Path,
    value: &T,
) -> Result<(), AdapterError> {
    write_bytes(path, &to_canonical_json(value))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), AdapterError> {
    fs::create_dir_all(path).map_err(|source| AdapterError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Creates `root`, which must not exist or be an empty directory.
pub(crate) fn prepare_output(root: &Path) -> Result<(), AdapterError> {
    if root.exists() {
        let mut entries = fs::read_dir(root).map_err(|source| AdapterError::Write {
            path: root.to_path_buf(),
            source,
        })?;
        if entries.next().is_some() {
            return Err(AdapterError::Write {
                path: root.to_path_buf(),
                source: std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "output directory is not empty",
                ),
            });
        }
    }
    create_dir(root)
}

/// Deterministic 32-hex-digit token derived from `parts`.
pub(crate) fn derived_token(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(&hasher.finalize()[..16])
}

/// Accepts unit quaternions as-is, renormalizes slightly-off ones with a
/// warning, and rejects the rest.
pub(crate) fn checked_rotation(
    q: Quaternion,
    context: impl Fn() -> String,
    warnings: &mut Vec<ConversionWarning>,
) -> Result<Quaternion, AdapterError> {
    if q.is_unit() {
        return Ok(q);
    }
    let norm = q.norm();
    if !norm.is_finite() || (norm - 1.0).abs() >= RENORMALIZE_LIMIT {
        return Err(AdapterError::NonUnitRotation {
            context: context(),
            norm,
        });
    }
    let context = context();
    log::warn!("{context}: renormalizing rotation with norm {norm}");
    warnings.push(ConversionWarning::RotationRenormalized { context, norm });
    Ok(q.scale(1.0 / norm))
}

pub(crate) fn quat_from_array(a: [f64; 4]) -> Quaternion {
    Quaternion::new(a[0], a[1], a[2], a[3])
}

pub(crate) fn quat_to_array(q: &Quaternion) -> [f64; 4] {
    [q.w, q.x, q.y, q.z]
}

/// How a dataset stores raw LiDAR sweeps other than `.rbpc`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RawCloudFormat {
    pub stride: usize,
    pub intensity_scale: f32,
}

/// Converts a sweep file into an ego-frame `.rbpc` payload. `.rbpc` inputs
/// already in the ego frame with valid intensities are passed through
/// untouched.
pub(crate) fn import_cloud(
    path: &Path,
    raw: RawCloudFormat,
    sensor_to_ego: &SE3Pose,
    warnings: &mut Vec<ConversionWarning>,
) -> Result<Payload, AdapterError> {
    let bytes = read_bytes(path)?;
    let parse_err = |e: pointcloud::RbpcError| AdapterError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let is_rbpc = path.extension().is_some_and(|e| e == "rbpc");
    let (cloud, clamped) = if is_rbpc {
        let mut cloud = PointCloud::decode(&bytes).map_err(parse_err)?;
        let mut clamped = 0;
        for p in &mut cloud.points {
            let i = if p[3].is_nan() {
                0.0
            } else {
                p[3].clamp(0.0, 1.0)
            };
            if i != p[3] {
                clamped += 1;
                p[3] = i;
            }
        }
        if clamped == 0 && *sensor_to_ego == SE3Pose::identity() {
            return Ok(Payload::File(path.to_path_buf()));
        }
        (cloud, clamped)
    } else {
        pointcloud::from_raw_f32(&bytes, raw.stride, raw.intensity_scale).map_err(parse_err)?
    };
    if clamped > 0 {
        let file = path.display().to_string();
        log::warn!("{file}: clamped {clamped} intensities");
        warnings.push(ConversionWarning::IntensityClamped {
            file,
            count: clamped,
        });
    }
    let cloud = if *sensor_to_ego == SE3Pose::identity() {
        cloud
    } else {
        cloud.transformed(sensor_to_ego)
    };
    Ok(Payload::Bytes(Arc::from(cloud.encode())))
}

pub(crate) fn payload<'a>(bundle: &'a LogBundle, rel: &str) -> Result<&'a Payload, AdapterError> {
    bundle
        .payloads
        .get(rel)
        .ok_or_else(|| AdapterError::MissingPayload(rel.to_string()))
}

/// Copies a payload to `dest`, creating parent directories.
pub(crate) fn export_payload(
    bundle: &LogBundle,
    rel: &str,
    dest: &Path,
) -> Result<(), AdapterError> {
    let payload = payload(bundle, rel)?;
    if let Some(parent) = dest.parent() {
        create_dir(parent)?;
    }
    if dest.exists() {
        // Replace rather than write through a hard link shared with the source.
        fs::remove_file(dest).map_err(|source| AdapterError::Write {
            path: dest.to_path_buf(),
            source,
        })?;
    }
    payload
        .materialize(dest)
        .map_err(|source| AdapterError::Write {
            path: dest.to_path_buf(),
            source,
        })
}

pub(crate) fn extension_of(rel: &str) -> &str {
    Path::new(rel)
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("bin")
}

pub(crate) fn dir_name(root: &Path) -> String {
    root.canonicalize()
        .unwrap_or_else(|_| PathBuf::from(root))
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "log".into())
}

/// Canonicalizes and validates a freshly imported bundle.
pub(crate) fn finish(mut bundle: LogBundle) -> Result<LogBundle, AdapterError> {
    bundle.canonicalize();
    let violations = validate_bundle(&bundle);
    if violations.is_empty() {
        Ok(bundle)
    } else {
        Err(AdapterError::Invalid(violations))
    }
}

pub fn rotation_tolerance_equal(a: &Quaternion, b: &Quaternion, tolerance: f64) -> bool {
    a.angle_to(b) <= tolerance
}

#[derive(Debug, Error, PartialEq)]
#[error("{0}")]
pub struct ComparisonError(pub String);

fn compare_sets(
    label: &str,
    frame_index: usize,
    a: &[Box3D],
    b: &[Box3D],
    tol_m: f64,
    tol_rad: f64,
) -> Result<(), ComparisonError> {
    let fail = |msg: String| {
        Err(ComparisonError(format!(
            "{label} frame #{frame_index}: {msg}"
        )))
    };
    if a.len() != b.len() {
        return fail(format!("{} boxes vs {}", a.len(), b.len()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    crate::model::sort_boxes(&mut a);
    crate::model::sort_boxes(&mut b);
    for (x, y) in a.iter().zip(&b) {
        let id = &x.instance_id;
        if x.instance_id != y.instance_id {
            return fail(format!("id {} vs {}", x.instance_id, y.instance_id));
        }
        if x.category != y.category {
            return fail(format!(
                "box {id}: category {} vs {}",
                x.category, y.category
            ));
        }
        let dc = (x.center - y.center).norm();
        if dc > tol_m {
            return fail(format!("box {id}: center off by {dc}"));
        }
        let ds = x
            .size
            .as_array()
            .iter()
            .zip(y.size.as_array())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        if ds > tol_m {
            return fail(format!("box {id}: size off by {ds}"));
        }
        let dr = x.rotation.angle_to(&y.rotation);
        if dr > tol_rad {
            return fail(format!("box {id}: rotation off by {dr} rad"));
        }
        match (x.confidence, y.confidence) {
            (None, None) => {}
            (Some(p), Some(q)) if (p - q).abs() <= 1e-12 => {}
            (p, q) => return fail(format!("box {id}: confidence {p:?} vs {q:?}")),
        }
        if x.attributes != y.attributes {
            return fail(format!("box {id}: attributes differ"));
        }
    }
    Ok(())
}

fn compare_frame_boxes(
    label: &str,
    a_bundle: &LogBundle,
    a: Option<&FrameBoxes>,
    b_bundle: &LogBundle,
    b: Option<&FrameBoxes>,
    tol_m: f64,
    tol_rad: f64,
) -> Result<(), ComparisonError> {
    for (i, (fa, fb)) in a_bundle.frames.iter().zip(&b_bundle.frames).enumerate() {
        let get =
            |m: Option<&FrameBoxes>, f: &str| m.and_then(|m| m.get(f)).cloned().unwrap_or_default();
        compare_sets(
            label,
            i,
            &get(a, &fa.frame_id),
            &get(b, &fb.frame_id),
            tol_m,
            tol_rad,
        )?;
    }
    Ok(())
}

/// Compares the ground truth and predictions of two bundles frame by frame,
/// aligning frames by position (frame ids may differ between datasets).
/// Boxes are matched by instance id; the `modified` flag is ignored.
pub fn annotations_equivalent(
    a: &LogBundle,
    b: &LogBundle,
    tol_m: f64,
    tol_rad: f64,
) -> Result<(), ComparisonError> {
    if a.frames.len() != b.frames.len() {
        return Err(ComparisonError(format!(
            "{} frames vs {}",
            a.frames.len(),
            b.frames.len()
        )));
    }
    compare_frame_boxes(
        "annotations",
        a,
        Some(&a.annotations),
        b,
        Some(&b.annotations),
        tol_m,
        tol_rad,
    )?;
    let sets: std::collections::BTreeSet<&String> =
        a.predictions.keys().chain(b.predictions.keys()).collect();
    for set in sets {
        compare_frame_boxes(
            &format!("prediction set {set}"),
            a,
            a.predictions.get(set),
            b,
            b.predictions.get(set),
            tol_m,
            tol_rad,
        )?;
    }
    Ok(())
}
