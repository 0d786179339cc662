//! Conversion between the native format and dataset-specific layouts.
//!
//! Each dataset is one [`DatasetAdapter`] registered in a [`Registry`] under a
//! short id. Supporting a new dataset means implementing the trait and
//! registering it; every conversion between two datasets goes through the
//! native [`LogBundle`].

mod argoverse;
mod common;
mod nuscenes;
mod waymo;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use argoverse::ArgoverseAdapter;
pub use common::{annotations_equivalent, rotation_tolerance_equal, ComparisonError};
pub use nuscenes::NuscenesAdapter;
pub use waymo::WaymoAdapter;

use crate::model::LogBundle;
use crate::validate::Violation;

/// Rotations whose norm error is below this are renormalized with a warning;
/// larger errors reject the input.
pub const RENORMALIZE_LIMIT: f64 = 1e-3;

/// Roll or pitch beyond this (radians) makes a yaw-only export lossy.
pub const YAW_ONLY_TOLERANCE: f64 = 1e-3;

/// Something the conversion changed or dropped without failing.
#[derive(Debug, Clone, PartialEq)]
pub enum ConversionWarning {
    RotationRenormalized {
        context: String,
        norm: f64,
    },
    HeadingNormalized {
        frame_id: String,
        instance_id: String,
        heading: f64,
    },
    LossyRotation {
        frame_id: String,
        instance_id: String,
        roll: f64,
        pitch: f64,
    },
    IntensityClamped {
        file: String,
        count: usize,
    },
    TimestampTruncated {
        frame_id: String,
        timestamp_ns: i64,
    },
}

impl fmt::Display for ConversionWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConversionWarning::RotationRenormalized { context, norm } => {
                write!(f, "{context}: rotation with norm {norm} renormalized")
            }
            ConversionWarning::HeadingNormalized {
                frame_id,
                instance_id,
                heading,
            } => write!(
                f,
                "frame {frame_id} box {instance_id}: heading {heading} wrapped into (-pi, pi]"
            ),
            ConversionWarning::LossyRotation {
                frame_id,
                instance_id,
                roll,
                pitch,
            } => write!(
                f,
                "frame {frame_id} box {instance_id}: roll {roll} / pitch {pitch} dropped, yaw only written"
            ),
            ConversionWarning::IntensityClamped { file, count } => {
                write!(f, "{file}: {count} intensities clamped into [0, 1]")
            }
            ConversionWarning::TimestampTruncated {
                frame_id,
                timestamp_ns,
            } => write!(
                f,
                "frame {frame_id}: timestamp {timestamp_ns} ns truncated to microseconds"
            ),
        }
    }
}

/// A conversion result with the warnings it produced.
#[derive(Debug, Clone)]
pub struct Converted<T> {
    pub value: T,
    pub warnings: Vec<ConversionWarning>,
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("table {table}: token '{token}' does not resolve")]
    DanglingToken { table: &'static str, token: String },
    #[error("table {table}: duplicate token '{token}'")]
    DuplicateToken { table: &'static str, token: String },
    #[error("sample chain: {0}")]
    BrokenChain(String),
    #[error("{context}: rotation norm {norm} is too far from 1")]
    NonUnitRotation { context: String, norm: f64 },
    #[error("annotation timestamp {0} has no ego pose")]
    MissingEgoPose(i64),
    #[error("{0}")]
    Inconsistent(String),
    #[error("bundle references {0} but carries no payload for it")]
    MissingPayload(String),
    #[error("converted log is invalid ({} violations), first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
}

/// Importer and exporter for one dataset layout.
pub trait DatasetAdapter: Send + Sync {
    /// Short id used on the command line, e.g. `nuscenes`.
    fn id(&self) -> &'static str;

    fn import(&self, root: &Path) -> Result<Converted<LogBundle>, AdapterError>;

    /// Writes `bundle` in this layout under `root`. Sensor payloads are copied
    /// byte-for-byte.
    fn export(&self, bundle: &LogBundle, root: &Path) -> Result<Converted<()>, AdapterError>;
}

/// Adapters keyed by id.
pub struct Registry {
    adapters: BTreeMap<&'static str, Box<dyn DatasetAdapter>>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(NuscenesAdapter));
        registry.register(Box::new(ArgoverseAdapter));
        registry.register(Box::new(WaymoAdapter));
        registry
    }
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            adapters: BTreeMap::new(),
        }
    }

    /// Adds or replaces the adapter for `adapter.id()`.
    pub fn register(&mut self, adapter: Box<dyn DatasetAdapter>) {
        self.adapters.insert(adapter.id(), adapter);
    }

    pub fn get(&self, id: &str) -> Option<&dyn DatasetAdapter> {
        self.adapters.get(id).map(Box::as_ref)
    }

    pub fn ids(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.adapters.keys().copied()
    }
}
