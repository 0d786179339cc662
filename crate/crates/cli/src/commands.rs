use std::fs;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use rebound_core::adapters::{ConversionWarning, DatasetAdapter, Registry};
use rebound_core::diff::diff_annotations;
use rebound_core::session::{BoxSource, FilterSpec};
use rebound_core::store::{self, layout};
use rebound_core::FrameBoxes;

use crate::{stats, Command, Dataset};

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Convert {
            from,
            input,
            output,
        } => convert(from, &input, &output),
        Command::Export { to, input, output } => export(to, &input, &output),
        Command::Validate(target) => validate(target.path()),
        Command::Diff { left, right } => diff(&left, &right),
        Command::Filter {
            input,
            output,
            prediction_set,
            min_confidence,
            max_range,
        } => filter(
            &input,
            &output,
            prediction_set.as_deref(),
            min_confidence,
            max_range,
        ),
        Command::Stats {
            target,
            min_confidence,
            max_range,
        } => {
            let bundle = load(target.path())?;
            print!("{}", stats::render(&bundle, min_confidence, max_range));
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { input, port } => serve(input, port),
    }
}

fn adapter(registry: &Registry, dataset: Dataset) -> Result<&dyn DatasetAdapter> {
    registry
        .get(dataset.id())
        .ok_or_else(|| anyhow!("no adapter registered for '{}'", dataset.id()))
}

fn require_dir(path: &Path, flag: &str) -> Result<()> {
    if !path.is_dir() {
        bail!("{flag} {}: no such directory", path.display());
    }
    Ok(())
}

fn is_empty_dir(path: &Path) -> Result<bool> {
    Ok(fs::read_dir(path)
        .with_context(|| format!("cannot read {}", path.display()))?
        .next()
        .is_none())
}

/// Output directories must be absent or empty, except that an existing native
/// log may be replaced.
fn check_output(path: &Path, allow_log: bool) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    if !path.is_dir() {
        bail!("--output {}: exists and is not a directory", path.display());
    }
    if is_empty_dir(path)? || (allow_log && path.join(layout::METADATA).is_file()) {
        return Ok(());
    }
    bail!("--output {}: directory is not empty", path.display())
}

fn print_warnings(warnings: &[ConversionWarning]) {
    for w in warnings {
        println!("warning: {w}");
    }
}

fn load(root: &Path) -> Result<rebound_core::LogBundle> {
    require_dir(root, "log")?;
    store::load_log(root).with_context(|| format!("cannot load log {}", root.display()))
}

fn convert(from: Dataset, input: &Path, output: &Path) -> Result<ExitCode> {
    require_dir(input, "--input")?;
    check_output(output, true)?;
    let registry = Registry::default();
    let converted = adapter(&registry, from)?
        .import(input)
        .with_context(|| format!("cannot import {} as {}", input.display(), from.id()))?;
    print_warnings(&converted.warnings);
    let bundle = converted.value;
    store::save_log(&bundle, output)
        .with_context(|| format!("cannot write {}", output.display()))?;
    println!(
        "converted {} ({}): {} frames, {} boxes -> {}",
        bundle.log_id,
        from.id(),
        bundle.frames.len(),
        bundle.box_count(),
        output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn export(to: Dataset, input: &Path, output: &Path) -> Result<ExitCode> {
    check_output(output, false)?;
    let bundle = load(input)?;
    let registry = Registry::default();
    let converted = adapter(&registry, to)?
        .export(&bundle, output)
        .with_context(|| format!("cannot export to {}", output.display()))?;
    print_warnings(&converted.warnings);
    println!(
        "exported {} ({}): {} frames, {} boxes -> {}",
        bundle.log_id,
        to.id(),
        bundle.frames.len(),
        bundle.box_count(),
        output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn validate(root: &Path) -> Result<ExitCode> {
    require_dir(root, "log")?;
    let violations = store::validate_log(root);
    for v in &violations {
        println!("{v}");
    }
    println!("{} violations", violations.len());
    Ok(if violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// A native log root stands for its annotations directory.
fn annotation_dir(path: &Path) -> PathBuf {
    if path.join(layout::METADATA).is_file() {
        path.join(layout::ANNOTATIONS_DIR)
    } else {
        path.to_path_buf()
    }
}

fn read_boxes(path: &Path) -> Result<FrameBoxes> {
    require_dir(path, "diff")?;
    let dir = annotation_dir(path);
    store::read_frame_boxes(&dir)
        .with_context(|| format!("cannot read annotations in {}", dir.display()))
}

fn diff(left: &Path, right: &Path) -> Result<ExitCode> {
    let a = read_boxes(left)?;
    let b = read_boxes(right)?;
    print!("{}", diff_annotations(&a, &b)?);
    Ok(ExitCode::SUCCESS)
}

fn filter(
    input: &Path,
    output: &Path,
    set: Option<&str>,
    min_confidence: f64,
    max_range: Option<f64>,
) -> Result<ExitCode> {
    check_output(output, false)?;
    let bundle = load(input)?;
    let available: Vec<&str> = bundle.predictions.keys().map(String::as_str).collect();
    let set = match (set, available.as_slice()) {
        (Some(s), _) if available.contains(&s) => s.to_string(),
        (Some(s), _) => bail!(
            "--prediction-set '{s}': not in {} (available: {})",
            input.display(),
            available.join(", ")
        ),
        (None, [only]) => only.to_string(),
        (None, []) => bail!("{} has no prediction sets", input.display()),
        (None, _) => bail!(
            "--prediction-set is required, {} has several: {}",
            input.display(),
            available.join(", ")
        ),
    };
    let spec = FilterSpec {
        show_ground_truth: false,
        visible_prediction_sets: [set.clone()].into(),
        min_confidence,
        max_range_m: max_range,
        ..FilterSpec::default()
    };
    let source = BoxSource::Prediction(set.clone());

    fs::create_dir_all(output).with_context(|| format!("cannot create {}", output.display()))?;
    let (mut kept, mut total) = (0, 0);
    for frame in &bundle.frames {
        let boxes = bundle.prediction_boxes(&set, &frame.frame_id);
        let survivors: Vec<_> = boxes
            .iter()
            .filter(|b| spec.admits(&source, b))
            .cloned()
            .collect();
        total += boxes.len();
        kept += survivors.len();
        let path = output.join(format!("{}.json", frame.frame_id));
        store::write_box_file(&path, &survivors)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    println!(
        "kept {kept} of {total} boxes from prediction set '{set}' -> {}",
        output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn serve(root: PathBuf, port: u16) -> Result<ExitCode> {
    require_dir(&root, "--input")?;
    let runtime = tokio::runtime::Runtime::new().context("cannot start the async runtime")?;
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    runtime
        .block_on(rebound_service::serve(
            rebound_service::AppState::new(root),
            addr,
        ))
        .with_context(|| format!("--port {port}: server failed"))?;
    Ok(ExitCode::SUCCESS)
}
