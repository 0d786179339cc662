mod support;

use std::fs;
use std::path::Path;

use rebound_core::adapters::annotations_equivalent;
use rebound_core::store::{layout, load_log, read_frame_boxes, snapshot_tree};
use support::*;
use tempfile::TempDir;

fn convert(from: &str, input: &Path, output: &Path) {
    let out = rebound(&[
        "convert",
        "--from",
        from,
        "--input",
        s(input),
        "--output",
        s(output),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn convert_matches_golden_native_log() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    convert("nuscenes", &fixtures().join("nusc"), &out);
    let golden = snapshot_tree(&fixtures().join("native")).unwrap();
    let got = snapshot_tree(&out).unwrap();
    assert_eq!(
        got.keys().collect::<Vec<_>>(),
        golden.keys().collect::<Vec<_>>()
    );
    for (rel, bytes) in &golden {
        assert!(got[rel] == *bytes, "{rel} differs from the golden copy");
    }

    let v = rebound(&["validate", s(&out)]);
    assert_eq!(code(&v), 0);
    assert_eq!(stdout(&v), "0 violations\n");
}

#[test]
fn convert_is_byte_stable() {
    let tmp = TempDir::new().unwrap();
    for (from, dir) in [
        ("nuscenes", "nusc"),
        ("argoverse", "argo"),
        ("waymo", "waymo"),
    ] {
        let a = tmp.path().join(format!("{dir}-a"));
        let b = tmp.path().join(format!("{dir}-b"));
        convert(from, &fixtures().join(dir), &a);
        convert(from, &fixtures().join(dir), &b);
        assert_eq!(
            snapshot_tree(&a).unwrap(),
            snapshot_tree(&b).unwrap(),
            "{from}"
        );
        // Converting again over an existing log replaces it with the same bytes.
        convert(from, &fixtures().join(dir), &a);
        assert_eq!(
            snapshot_tree(&a).unwrap(),
            snapshot_tree(&b).unwrap(),
            "{from}"
        );
    }
}

#[test]
fn export_is_byte_stable_and_round_trips() {
    let tmp = TempDir::new().unwrap();
    let native = fixtures().join("native");
    for to in ["nuscenes", "argoverse", "waymo"] {
        let a = tmp.path().join(format!("{to}-a"));
        let b = tmp.path().join(format!("{to}-b"));
        for dest in [&a, &b] {
            let out = rebound(&[
                "export",
                "--to",
                to,
                "--input",
                s(&native),
                "--output",
                s(dest),
            ]);
            assert_eq!(code(&out), 0, "{to}: {}", stderr(&out));
        }
        assert_eq!(
            snapshot_tree(&a).unwrap(),
            snapshot_tree(&b).unwrap(),
            "{to}"
        );

        // Frame ids differ between datasets, so frames are aligned by position.
        let back = tmp.path().join(format!("{to}-native"));
        convert(to, &a, &back);
        annotations_equivalent(
            &load_log(&native).unwrap(),
            &load_log(&back).unwrap(),
            1e-9,
            1e-9,
        )
        .unwrap_or_else(|e| panic!("{to}: {e}"));
    }
}

#[test]
fn diff_reports_edits() {
    let tmp = TempDir::new().unwrap();
    let native = fixtures().join("native");
    let out = rebound(&[
        "diff",
        s(&native.join("annotations")),
        s(&native.join("annotations")),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "0 added, 0 removed, 0 moved, 0 relabeled\n");

    let edited = tmp.path().join("ann");
    fs::create_dir(&edited).unwrap();
    let mut boxes = read_frame_boxes(&native.join(layout::ANNOTATIONS_DIR)).unwrap();
    let (frame, list) = boxes.iter_mut().next().unwrap();
    let frame = frame.clone();
    list[0].category = "bus".into();
    list[1].center.x += 1.0;
    let removed = list.pop().unwrap();
    for (f, list) in &boxes {
        rebound_core::store::write_box_file(&edited.join(format!("{f}.json")), list).unwrap();
    }
    let out = rebound(&["diff", s(&native), s(&edited)]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    // Two boxes per frame: the relabeled one is also the only one left.
    assert_eq!(
        lines[0], "0 added, 1 removed, 0 moved, 1 relabeled",
        "{text}"
    );
    assert!(lines.contains(
        &format!(
            "removed\t{frame}\t{}\t{}",
            removed.instance_id, removed.category
        )
        .as_str()
    ));
}

#[test]
fn validate_reports_violations_with_exit_1() {
    let tmp = TempDir::new().unwrap();
    let log = tmp.path().join("log");
    convert("nuscenes", &fixtures().join("nusc"), &log);
    let bundle = load_log(&log).unwrap();
    let rel = layout::annotation_file(&bundle.frames[0].frame_id);
    let path = log.join(&rel);
    let mut boxes: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    boxes[0]["size"][0] = (-1.0).into();
    fs::write(&path, boxes.to_string()).unwrap();

    let out = rebound(&["validate", "--input", s(&log)]);
    assert_eq!(code(&out), 1, "{}", stdout(&out));
    let report = stdout(&out);
    assert!(report.contains(&rel), "{report}");
    assert!(report.ends_with("1 violations\n"), "{report}");
}

#[test]
fn filter_keeps_boxes_at_the_threshold() {
    let tmp = TempDir::new().unwrap();
    let native = fixtures().join("native");
    let dest = tmp.path().join("kept");
    let out = rebound(&[
        "filter",
        "--input",
        s(&native),
        "--min-confidence",
        "0.5",
        "--output",
        s(&dest),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("kept 2 of 3 boxes from prediction set 'detector'"));
    let kept = read_frame_boxes(&dest).unwrap();
    assert_eq!(kept.len(), 3);
    let mut conf: Vec<f64> = kept
        .values()
        .flatten()
        .map(|b| b.confidence.unwrap())
        .collect();
    conf.sort_by(f64::total_cmp);
    assert_eq!(conf, [0.5, 0.9]);

    let near = tmp.path().join("near");
    let out = rebound(&[
        "filter",
        "--input",
        s(&native),
        "--prediction-set",
        "detector",
        "--max-range",
        "50",
        "--output",
        s(&near),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("kept 2 of 3"), "{}", stdout(&out));
}

#[test]
fn stats_output_is_stable() {
    let native = fixtures().join("native");
    let a = rebound(&["stats", s(&native)]);
    let b = rebound(&["stats", "--input", s(&native)]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(
        text.starts_with("log\tscene-0001\ndataset\tnuscenes_style\nframes\t3\n"),
        "{text}"
    );
    assert!(
        text.contains("category\tground_truth\tdetector\n"),
        "{text}"
    );
    assert!(
        text.contains("range_m\tground_truth\tdetector\n0-10\t"),
        "{text}"
    );
}

#[test]
fn bad_invocations_exit_2_and_touch_nothing() {
    let tmp = TempDir::new().unwrap();
    let log = tmp.path().join("log");
    convert("nuscenes", &fixtures().join("nusc"), &log);
    let before = snapshot_tree(tmp.path()).unwrap();
    for (args, needle) in BAD_INVOCATIONS {
        let args = expand(args, &log, tmp.path());
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = rebound(&argv);
        assert_eq!(code(&out), 2, "{argv:?}: {}", stderr(&out));
        let needle = needle.replace("{log}", s(&log));
        assert!(
            stderr(&out).contains(&needle),
            "{argv:?}: stderr lacks '{needle}':\n{}",
            stderr(&out)
        );
        assert_eq!(
            snapshot_tree(tmp.path()).unwrap(),
            before,
            "{argv:?} touched the filesystem"
        );
        assert!(!tmp.path().join("a").exists());
    }
}

#[test]
fn help_and_version_exit_0() {
    for args in [&["--help"][..], &["--version"], &["convert", "--help"]] {
        assert_eq!(code(&rebound(args)), 0, "{args:?}");
    }
}
