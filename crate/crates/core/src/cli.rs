//! Command-line front end: `run`, `trust-report` and `verify`.
//!
//! Exit codes: 0 success, 1 the ledger is invalid, 2 usage, config or
//! I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;

use crate::config::ScenarioConfig;
use crate::report::{RunReport, TrustReport};
use crate::sim::log::parse_jsonl;
use crate::sim::World;
use crate::verify::{verify_path, VerifyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fedtrust", version, about = "Trust-weighted federated CSP simulator")]
pub struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write ledger, event log and report.
    Run {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Print per-CSP trust recomputed from a ledger file.
    TrustReport {
        ledger: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Re-validate a ledger file from genesis.
    Verify { ledger: PathBuf },
}

/// Files written by a run.
#[derive(Clone, Debug)]
pub struct RunOutputs {
    pub ledger: PathBuf,
    pub events: PathBuf,
    pub report: PathBuf,
    pub summary: RunReport,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs a scenario and writes its artifacts.
pub fn run_scenario(mut cfg: ScenarioConfig, out_dir: Option<&Path>) -> Result<RunOutputs, RunError> {
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let ledger = dir.join(&cfg.output.ledger);
    let events = dir.join(&cfg.output.events);
    let report = dir.join(&cfg.output.report);
    cfg.output.dir = dir.to_string_lossy().into_owned();
    let mut world = World::new(cfg)?;
    info!("running {} nodes for {} ms", world.node_count(), world.cfg.duration_ms);
    world.run();
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let file = world.ledger_file();
    std::fs::write(&ledger, file.to_bytes()).map_err(io_err(&ledger))?;
    let jsonl = world.log.to_jsonl();
    std::fs::write(&events, &jsonl).map_err(io_err(&events))?;
    let parsed = parse_jsonl(&jsonl).expect("log lines are valid json");
    let summary = RunReport::build(&world.params, &file.blocks, &parsed);
    let text = serde_json::to_string_pretty(&summary).expect("report serializes");
    std::fs::write(&report, text + "\n").map_err(io_err(&report))?;
    info!("wrote {}", dir.display());
    Ok(RunOutputs {
        ledger,
        events,
        report,
        summary,
    })
}

/// Executes a parsed command line.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            seed_override,
        } => {
            let cfg = match ScenarioConfig::load(&config) {
                Ok(mut c) => {
                    if let Some(s) = seed_override {
                        c.seed = s;
                    }
                    c
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", config.display());
                    return EXIT_USAGE;
                }
            };
            match run_scenario(cfg, out_dir.as_deref()) {
                Ok(o) => {
                    let s = &o.summary;
                    let _ = writeln!(
                        out,
                        "height {}  tip {}  mean interval {:.1} ms  forks switched {}  granted {}  denied {}",
                        s.height,
                        s.tip,
                        s.block_intervals.mean_ms,
                        s.fork_switches,
                        s.requests.granted + s.requests.local_grants,
                        s.requests.denied.values().sum::<u64>()
                    );
                    let _ = writeln!(out, "ledger  {}", o.ledger.display());
                    let _ = writeln!(out, "events  {}", o.events.display());
                    let _ = writeln!(out, "report  {}", o.report.display());
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_USAGE
                }
            }
        }
        Command::TrustReport { ledger, json } => match verify_path(&ledger) {
            Ok(v) => {
                let rep = TrustReport::from_chain(&v.params, &v.blocks);
                if json {
                    let _ = writeln!(
                        out,
                        "{}",
                        serde_json::to_string_pretty(&rep).expect("report serializes")
                    );
                } else {
                    let _ = write!(out, "{}", rep.to_text());
                }
                EXIT_OK
            }
            Err(e) => report_verify_error(&ledger, &e, err),
        },
        Command::Verify { ledger } => match verify_path(&ledger) {
            Ok(v) => {
                let _ = writeln!(
                    out,
                    "OK height {} tip {} blocks {}",
                    v.tip.height(),
                    v.tip.hash().to_hex(),
                    v.blocks.len()
                );
                EXIT_OK
            }
            Err(e) => report_verify_error(&ledger, &e, err),
        },
    }
}

fn report_verify_error(path: &Path, e: &VerifyError, err: &mut dyn Write) -> i32 {
    match e.failure() {
        Some(f) => {
            let _ = writeln!(err, "INVALID {f}");
            EXIT_INVALID
        }
        None => {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            EXIT_USAGE
        }
    }
}

/// Parses `args` (program name first) and executes them.
pub fn run_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, out, err),
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{e}");
                EXIT_OK
            }
        }
    }
}
