//! `hlab`: run one experiment config or the whole verification suite.
//!
//! Exit codes: 0 all checks pass, 1 a check failed or was indeterminate,
//! 2 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use homothetic::experiment::{self, RunConfig};
use homothetic::report::{CheckRecord, Status, VerificationSummary};
use homothetic::suite;
use serde_json::json;

#[derive(Parser)]
#[command(name = "hlab", about = "Homothetic field experiments and their verification suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every shipped experiment and collect one summary.
    VerifyAll {
        /// `smoke`, or a comma-separated list of experiment kinds.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value = "runs/verify-all")]
        out: PathBuf,
    },
    /// Print the version.
    Version,
}

/// A failure that maps to exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::VerifyAll { filter, out } => verify_all(filter.as_deref(), &out),
        Command::Version => {
            println!("hlab {}", env!("CARGO_PKG_VERSION"));
            Ok(Status::Pass)
        }
    };
    match outcome {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() { ExitCode::from(2) } else { ExitCode::from(1) }
        }
    }
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn print_records(records: &[CheckRecord]) {
    for r in records {
        let tag = match r.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Indeterminate => "INDT",
        };
        println!("{tag}  {:<20} {:<60} {:>12.4e}  {:?}", r.module, r.name, r.measured, r.threshold);
        if let Some(note) = &r.note {
            println!("      note: {note}");
        }
    }
}

fn print_totals(s: &VerificationSummary) {
    println!("{:?}: {} passed, {} failed, {} indeterminate", s.status, s.passed, s.failed, s.indeterminate);
}

fn run(config: &Path, out: Option<PathBuf>) -> Result<Status> {
    let text = fs::read_to_string(config).map_err(|e| ConfigError(format!("reading {}: {e}", config.display())))?;
    let cfg = RunConfig::from_toml(&text).map_err(|e| ConfigError(format!("{}: {e}", config.display())))?;
    let exp = cfg.experiment;
    let dir = out.or_else(|| exp.output().map(PathBuf::from)).unwrap_or_else(|| {
        let stem = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
        Path::new("runs").join(stem)
    });

    let started = unix_seconds();
    let clock = Instant::now();
    let output = experiment::run(&exp).map_err(|e| match e {
        homothetic::Error::Config(m) => anyhow::Error::new(ConfigError(format!("{}: {m}", config.display()))),
        other => anyhow::Error::new(other).context(format!("running {}", exp.kind())),
    })?;
    let wall = clock.elapsed().as_secs_f64();

    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir, "report.json", &output.report_json(&exp))?;
    write(&dir, "summary.json", &output.summary_json())?;
    for a in &output.artifacts {
        write(&dir, &a.name, &a.contents)?;
    }
    let meta = json!({
        "tool": "hlab",
        "version": env!("CARGO_PKG_VERSION"),
        "kind": exp.kind(),
        "config": config.display().to_string(),
        "started_unix": started,
        "finished_unix": unix_seconds(),
        "wall_seconds": wall,
    });
    write(&dir, "metadata.json", &serde_json::to_string_pretty(&meta)?)?;

    print_records(&output.summary.records);
    print_totals(&output.summary);
    println!("outputs in {}", dir.display());
    Ok(output.summary.status)
}

fn verify_all(filter: Option<&str>, out: &Path) -> Result<Status> {
    if let Some(f) = filter {
        let known = f == "smoke" || f.split(',').all(|k| experiment::KINDS.contains(&k.trim()));
        if !known {
            return Err(ConfigError(format!("unknown filter {f:?}; use smoke or kinds from {:?}", experiment::KINDS)).into());
        }
    }
    let started = unix_seconds();
    let clock = Instant::now();
    let report = suite::verify_all(filter);
    let wall = clock.elapsed().as_secs_f64();

    for e in &report.entries {
        println!("== {} ({:.2} s)", e.kind, e.seconds);
        print_records(&e.summary.records);
    }
    print_totals(&report.summary);
    println!("modules covered: {}", report.summary.modules().join(", "));

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(out, "summary.json", &serde_json::to_string_pretty(&serde_json::to_value(&report.summary)?)?)?;
    let timings: Vec<_> = report.entries.iter().map(|e| json!({ "kind": e.kind, "seconds": e.seconds })).collect();
    let meta = json!({
        "tool": "hlab",
        "version": env!("CARGO_PKG_VERSION"),
        "filter": filter,
        "started_unix": started,
        "finished_unix": unix_seconds(),
        "wall_seconds": wall,
        "entries": timings,
    });
    write(out, "metadata.json", &serde_json::to_string_pretty(&meta)?)?;
    Ok(report.summary.status)
}
