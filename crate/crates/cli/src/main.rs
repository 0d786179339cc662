//! `rebound`: convert, check and inspect driving logs in the native layout.
//!
//! Exit codes: 0 on success, 1 when `validate` finds violations, 2 on bad
//! arguments or I/O errors.

mod commands;
mod stats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "rebound", version, about = "3D box re-annotation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Import a dataset layout into a native log.
    Convert {
        #[arg(long, value_name = "DATASET")]
        from: Dataset,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a native log out in a dataset layout.
    Export {
        #[arg(long, value_name = "DATASET")]
        to: Dataset,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// List every rule violation in a native log.
    Validate(Target),
    /// Compare two annotation directories (or two native logs).
    Diff { left: PathBuf, right: PathBuf },
    /// Write one prediction set, pruned by confidence and range.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Required when the log has more than one prediction set.
        #[arg(long, value_name = "NAME")]
        prediction_set: Option<String>,
        #[arg(long, value_name = "FLOAT", value_parser = parse_confidence, allow_negative_numbers = true, default_value_t = 0.0)]
        min_confidence: f64,
        #[arg(long, value_name = "METERS", value_parser = parse_range, allow_negative_numbers = true)]
        max_range: Option<f64>,
    },
    /// Per-category box counts and a range histogram.
    Stats {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_name = "FLOAT", value_parser = parse_confidence, allow_negative_numbers = true, default_value_t = 0.0)]
        min_confidence: f64,
        #[arg(long, value_name = "METERS", value_parser = parse_range, allow_negative_numbers = true)]
        max_range: Option<f64>,
    },
    /// Serve every native log under a data root over HTTP.
    Serve {
        #[arg(long, value_name = "DATA_ROOT")]
        input: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

/// A log given either positionally or with `--input`.
#[derive(Args, Debug)]
struct Target {
    #[arg(
        value_name = "LOG",
        required_unless_present = "input",
        conflicts_with = "input"
    )]
    path: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
}

impl Target {
    fn path(&self) -> &PathBuf {
        self.path
            .as_ref()
            .or(self.input.as_ref())
            .expect("clap requires one of them")
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Dataset {
    Nuscenes,
    Argoverse,
    Waymo,
}

impl Dataset {
    fn id(self) -> &'static str {
        match self {
            Dataset::Nuscenes => "nuscenes",
            Dataset::Argoverse => "argoverse",
            Dataset::Waymo => "waymo",
        }
    }
}

fn parse_confidence(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_range(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be a non-negative distance in meters"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
