//! `.rbpc` point-cloud files.
//!
//! Layout, little-endian: the magic `RBPC`, a `u16` version (1), a `u32`
//! point count `N`, then `N` records of four `f32` (x, y, z, intensity).

use thiserror::Error;

use crate::geometry::SE3Pose;
use crate::Vec3;

pub const MAGIC: &[u8; 4] = b"RBPC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 10;
const RECORD_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RbpcError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after the last point")]
    TrailingBytes(usize),
}

/// Points in the ego frame as `[x, y, z, intensity]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 4]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * self.points.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.points.len() as u32).to_le_bytes());
        for p in &self.points {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, RbpcError> {
        if bytes.len() < HEADER_LEN {
            return Err(RbpcError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(RbpcError::BadMagic);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(RbpcError::UnsupportedVersion(version));
        }
        let count = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
        let expected = HEADER_LEN + count * RECORD_LEN;
        if bytes.len() < expected {
            return Err(RbpcError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(RbpcError::TrailingBytes(bytes.len() - expected));
        }
        let points = bytes[HEADER_LEN..]
            .chunks_exact(RECORD_LEN)
            .map(|rec| {
                let f = |i: usize| {
                    f32::from_le_bytes([rec[i * 4], rec[i * 4 + 1], rec[i * 4 + 2], rec[i * 4 + 3]])
                };
                [f(0), f(1), f(2), f(3)]
            })
            .collect();
        Ok(Self { points })
    }

    /// Index of the first point with a non-finite coordinate.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.points
            .iter()
            .position(|p| p.iter().any(|v| !v.is_finite()))
    }

    /// Index of the first point whose intensity is outside `[0, 1]`.
    pub fn first_intensity_out_of_range(&self) -> Option<usize> {
        self.points
            .iter()
            .position(|p| !(0.0..=1.0).contains(&p[3]))
    }

    pub fn transformed(&self, pose: &SE3Pose) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| {
                let q = pose.apply(&Vec3::new(
                    f64::from(p[0]),
                    f64::from(p[1]),
                    f64::from(p[2]),
                ));
                [q.x as f32, q.y as f32, q.z as f32, p[3]]
            })
            .collect();
        Self { points }
    }
}

/// Builds a cloud from a raw little-endian `f32` array with `stride` values
/// per point (x, y, z, intensity first). Intensities are divided by
/// `intensity_scale` and clamped into `[0, 1]`; the number of clamped
/// values is returned alongside.
pub fn from_raw_f32(
    bytes: &[u8],
    stride: usize,
    intensity_scale: f32,
) -> Result<(PointCloud, usize), RbpcError> {
    let record = stride * 4;
    if !bytes.len().is_multiple_of(record) {
        return Err(RbpcError::TrailingBytes(bytes.len() % record));
    }
    let mut clamped = 0;
    let points = bytes
        .chunks_exact(record)
        .map(|rec| {
            let f = |i: usize| {
                f32::from_le_bytes([rec[i * 4], rec[i * 4 + 1], rec[i * 4 + 2], rec[i * 4 + 3]])
            };
            let raw = f(3) / intensity_scale;
            let intensity = if raw.is_nan() {
                0.0
            } else {
                raw.clamp(0.0, 1.0)
            };
            if intensity != raw {
                clamped += 1;
            }
            [f(0), f(1), f(2), intensity]
        })
        .collect();
    Ok((PointCloud { points }, clamped))
}
