//! `utn`: configuration-driven pipeline over transit origin-destination data.
//!
//! Each subcommand is one stage. Stages read their upstream artifacts from the
//! output directory, write their own CSV/JSON files (each stamped with the config
//! hash and root seed) and append one record to `manifest.jsonl`.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::artifacts::{append_manifest, Context, ManifestRecord};
use crate::config::LoadedConfig;
use crate::error::ExitStatus;

#[derive(Debug, Parser)]
#[command(name = "utn", version, about = "Transit origin-destination flow analysis pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "utn.toml")]
    pub config: PathBuf,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Read trips or taps, validate, keep working days.
    Ingest,
    /// Per-date, per-period origin-destination matrices.
    Flows,
    /// Consensus community snapshot per date and period.
    Communities,
    /// Contingency-coefficient matrix between daily snapshots.
    Variability,
    /// Gaussian-mixture clustering of daily snapshots.
    Cluster,
    /// Worker chains, place labels and pattern distribution.
    Activity,
    /// Attraction model, gravity baseline and their correlations.
    Spatial,
    /// Evening volume recurrence fits and additive models.
    Temporal,
    /// Simulate evening volumes from the fitted recurrences.
    Simulate,
    /// Write a synthetic city (inputs plus ground truth).
    Synth,
    /// Collate correlation tables, pattern shares and curves.
    Report,
    /// Every analysis stage from ingest to report, in order.
    Pipeline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Flows => "flows",
            Command::Communities => "communities",
            Command::Variability => "variability",
            Command::Cluster => "cluster",
            Command::Activity => "activity",
            Command::Spatial => "spatial",
            Command::Temporal => "temporal",
            Command::Simulate => "simulate",
            Command::Synth => "synth",
            Command::Report => "report",
            Command::Pipeline => "pipeline",
        }
    }

    /// Stages run by `pipeline`.
    pub const STAGES: [Command; 10] = [
        Command::Ingest,
        Command::Flows,
        Command::Communities,
        Command::Variability,
        Command::Cluster,
        Command::Activity,
        Command::Spatial,
        Command::Temporal,
        Command::Simulate,
        Command::Report,
    ];
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitStatus::Validation as i32 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitStatus::Runtime as i32;
        }
    };
    let loaded = match LoadedConfig::from_file(&cli.config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return e.status() as i32;
        }
    };
    let stages: Vec<Command> = match cli.command {
        Command::Pipeline => Command::STAGES.to_vec(),
        c => vec![c],
    };
    for stage in stages {
        let ctx = Context::new(loaded.clone(), cli.seed, cli.out.clone());
        let code = pool.install(|| run_stage(stage, &ctx));
        if code != 0 {
            return code;
        }
    }
    0
}

fn run_stage(command: Command, ctx: &Context) -> i32 {
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    let clock = Instant::now();
    let result = commands::validate(command, ctx).and_then(|()| commands::execute(command, ctx));
    let (status, label) = match &result {
        Ok(()) => (ExitStatus::Success, "ok"),
        Err(e) => {
            eprintln!("error: {command_name}: {e}", command_name = command.name());
            let s = e.status();
            (
                s,
                match s {
                    ExitStatus::Validation => "validation-error",
                    ExitStatus::NonConvergence => "non-convergence",
                    _ => "runtime-error",
                },
            )
        }
    };
    let record = ManifestRecord {
        command: command.name(),
        config_hash: &ctx.hash,
        seed: ctx.seed,
        status: label,
        exit_code: status as i32,
        started_at,
        elapsed_ms: clock.elapsed().as_millis(),
        threads: rayon::current_num_threads(),
        outputs: ctx.written(),
        warnings: ctx.warnings(),
    };
    if let Err(e) = append_manifest(&ctx.out, &record) {
        eprintln!("error: cannot append to the run manifest: {e}");
        if status == ExitStatus::Success {
            return ExitStatus::Runtime as i32;
        }
    }
    status as i32
}

pub use error::CliResult;
