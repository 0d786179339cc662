//! Tab-separated summary of a log: per-category counts and a histogram of
//! ego distance, each with one column per box source.

use std::collections::BTreeMap;
use std::fmt::Write;

use rebound_core::session::{BoxSource, FilterSpec};
use rebound_core::{Box3D, LogBundle};

pub const BIN_WIDTH_M: f64 = 10.0;
/// Boxes at or beyond `BIN_COUNT * BIN_WIDTH_M` share the last bin.
pub const BIN_COUNT: usize = 10;

fn bin(b: &Box3D) -> usize {
    ((b.ego_distance() / BIN_WIDTH_M) as usize).min(BIN_COUNT)
}

fn bin_label(i: usize) -> String {
    let lo = i as f64 * BIN_WIDTH_M;
    if i == BIN_COUNT {
        format!("{lo}+")
    } else {
        format!("{lo}-{}", lo + BIN_WIDTH_M)
    }
}

pub fn render(bundle: &LogBundle, min_confidence: f64, max_range: Option<f64>) -> String {
    let filter = FilterSpec {
        min_confidence,
        max_range_m: max_range,
        ..FilterSpec::show_all(bundle)
    };
    let mut columns = vec![("ground_truth".to_string(), BoxSource::GroundTruth)];
    columns.extend(
        bundle
            .predictions
            .keys()
            .map(|set| (set.clone(), BoxSource::Prediction(set.clone()))),
    );

    let mut categories: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut bins = vec![vec![0usize; columns.len()]; BIN_COUNT + 1];
    for (col, (_, source)) in columns.iter().enumerate() {
        for frame in &bundle.frames {
            let boxes = match source {
                BoxSource::GroundTruth => bundle.boxes(&frame.frame_id),
                BoxSource::Prediction(set) => bundle.prediction_boxes(set, &frame.frame_id),
            };
            for b in boxes.iter().filter(|b| filter.admits(source, b)) {
                categories
                    .entry(&b.category)
                    .or_insert_with(|| vec![0; columns.len()])[col] += 1;
                bins[bin(b)][col] += 1;
            }
        }
    }
    let last_bin = bins
        .iter()
        .rposition(|row| row.iter().any(|&n| n > 0))
        .unwrap_or(0);

    let header = |first: &str| {
        let names: Vec<&str> = columns.iter().map(|(n, _)| n.as_str()).collect();
        format!("{first}\t{}\n", names.join("\t"))
    };
    let row = |counts: &[usize]| {
        counts
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("\t")
    };

    let mut out = String::new();
    let _ = writeln!(out, "log\t{}", bundle.log_id);
    let _ = writeln!(out, "dataset\t{}", bundle.source_dataset.as_str());
    let _ = writeln!(out, "frames\t{}", bundle.frames.len());
    out.push('\n');
    out.push_str(&header("category"));
    for (category, counts) in &categories {
        let _ = writeln!(out, "{category}\t{}", row(counts));
    }
    out.push('\n');
    out.push_str(&header("range_m"));
    for (i, counts) in bins.iter().enumerate().take(last_bin + 1) {
        let _ = writeln!(out, "{}\t{}", bin_label(i), row(counts));
    }
    out
}
