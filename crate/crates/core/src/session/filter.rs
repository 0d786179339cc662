use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{Box3D, LogBundle};

/// Review range beyond which annotations are known to be sparse.
pub const FAR_FIELD_RANGE_M: f64 = 50.0;

/// Which set a box lives in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxSource {
    #[default]
    GroundTruth,
    Prediction(String),
}

impl BoxSource {
    pub fn is_prediction(&self) -> bool {
        matches!(self, BoxSource::Prediction(_))
    }
}

/// Visibility predicate over ground truth and prediction sets.
///
/// An empty `visible_categories` admits every category. The range limit
/// applies to ground truth and predictions alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub visible_categories: BTreeSet<String>,
    pub min_confidence: f64,
    pub max_range_m: Option<f64>,
    pub show_ground_truth: bool,
    pub visible_prediction_sets: BTreeSet<String>,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            visible_categories: BTreeSet::new(),
            min_confidence: 0.0,
            max_range_m: None,
            show_ground_truth: true,
            visible_prediction_sets: BTreeSet::new(),
        }
    }
}

impl FilterSpec {
    /// Ground truth plus every prediction set of `bundle`.
    pub fn show_all(bundle: &LogBundle) -> Self {
        Self {
            visible_prediction_sets: bundle.predictions.keys().cloned().collect(),
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(format!(
                "min_confidence {} outside [0, 1]",
                self.min_confidence
            ));
        }
        if let Some(r) = self.max_range_m {
            if r.is_nan() || r < 0.0 {
                return Err(format!("max_range_m {r} must be non-negative"));
            }
        }
        Ok(())
    }

    fn category_passes(&self, b: &Box3D) -> bool {
        self.visible_categories.is_empty() || self.visible_categories.contains(&b.category)
    }

    fn range_passes(&self, b: &Box3D) -> bool {
        self.max_range_m.is_none_or(|r| b.ego_distance() <= r)
    }

    /// Whether `b`, drawn from `source`, is shown.
    pub fn admits(&self, source: &BoxSource, b: &Box3D) -> bool {
        let source_passes = match source {
            BoxSource::GroundTruth => self.show_ground_truth,
            BoxSource::Prediction(set) => {
                self.visible_prediction_sets.contains(set)
                    && b.confidence.unwrap_or(0.0) >= self.min_confidence
            }
        };
        source_passes && self.category_passes(b) && self.range_passes(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisibleBox<'a> {
    pub source: BoxSource,
    #[serde(rename = "box")]
    pub bbox: &'a Box3D,
}

/// Boxes of `frame_id` admitted by `filter`: ground truth first, then each
/// prediction set in name order; within a set, by instance id.
pub fn visible_boxes<'a>(
    bundle: &'a LogBundle,
    filter: &FilterSpec,
    frame_id: &str,
) -> Vec<VisibleBox<'a>> {
    let gt = bundle
        .boxes(frame_id)
        .iter()
        .map(|b| (BoxSource::GroundTruth, b));
    let preds = bundle.predictions.iter().flat_map(|(set, frames)| {
        frames
            .get(frame_id)
            .into_iter()
            .flatten()
            .map(move |b| (BoxSource::Prediction(set.clone()), b))
    });
    gt.chain(preds)
        .filter(|(source, b)| filter.admits(source, b))
        .map(|(source, bbox)| VisibleBox { source, bbox })
        .collect()
}
