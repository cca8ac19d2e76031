//! The `trace` command line: run scenarios, audit journals, query lineage and
//! serve the HTTP API.
//!
//! Machine output goes to stdout as JSON or DOT; diagnostics go to stderr.
//! Exit status is 0 on success, 1 on a domain error (invalid data, unknown
//! message, failed audit) and 2 on usage or I/O errors.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::bus::{journal_replay_with, verify_journal, Bus, BusConfig, BusError, JournalError};
use crate::engine::{export_dot, export_json, export_replay_json, replay_order, trace, trace_back, Depth, Direction};
use crate::json::ParseMode;
use crate::scenario::{canonical_breakup_scenario, run_with, DriveMode, ScenarioError, ScenarioSpec};
use crate::schema::MessageId;
use crate::service::{self, ServiceConfig, ServiceError, DEFAULT_POLL_INTERVAL};
use crate::store::{NodeId, Palette, ProvenanceGraph, StoreConfig, StoreError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Palette used when none is given: the subsystems of the built-in scenario.
pub const DEFAULT_PALETTE: &str = "sensing=orange,processing=yellow,decision=blue";

#[derive(Debug, Parser)]
#[command(name = "trace", version, about = "Provenance tracing for message-driven pipelines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run simulated scenarios.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Inspect journal files.
    #[command(subcommand)]
    Journal(JournalCommand),
    /// Trace lineage of a message recorded in a journal.
    Query(QueryArgs),
    /// Serve the read-only HTTP API over a journal.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run a scenario, write its journal, and print the run report.
    Run(SimRunArgs),
}

#[derive(Debug, Args)]
pub struct SimRunArgs {
    /// Scenario file, or `canonical` for the built-in breakup scenario.
    #[arg(long, default_value = "canonical")]
    pub scenario: String,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Journal to write.
    #[arg(long)]
    pub journal: PathBuf,
    /// Continue an existing non-empty journal instead of refusing it.
    #[arg(long)]
    pub append: bool,
    /// Drive each process on its own thread.
    #[arg(long)]
    pub concurrent: bool,
}

#[derive(Debug, Subcommand)]
pub enum JournalCommand {
    /// Audit a journal; exits 1 when any violation is found.
    Verify {
        path: PathBuf,
        /// Ignore unknown fields instead of reporting them.
        #[arg(long)]
        lenient: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryKind {
    Back,
    Forward,
    Both,
    /// Ordered replay plan of the message's full backward lineage.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Dot,
    Json,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub kind: QueryKind,
    pub message_id: String,
    #[arg(long)]
    pub journal: PathBuf,
    /// Hop limit, or `unlimited`.
    #[arg(long, default_value = "unlimited")]
    pub depth: Depth,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub lenient: bool,
    #[arg(long)]
    pub allow_dangling_parents: bool,
    /// Subsystem colors as `subsystem=color,...`.
    #[arg(long, default_value = DEFAULT_PALETTE)]
    pub palette: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "TRACE_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "TRACE_JOURNAL")]
    pub journal: PathBuf,
    /// Reject unknown fields in journal records.
    #[arg(
        long,
        env = "TRACE_STRICT",
        action = ArgAction::Set,
        num_args = 0..=1,
        default_value_t = true,
        default_missing_value = "true"
    )]
    pub strict: bool,
    #[arg(long, env = "TRACE_ALLOW_DANGLING_PARENTS")]
    pub allow_dangling_parents: bool,
    /// Depth for trace requests that do not give one: at least 1, or `unlimited`.
    #[arg(long, env = "TRACE_MAX_DEPTH", default_value = "unlimited")]
    pub max_depth: Depth,
    /// Directory of static assets served for paths outside the API.
    #[arg(long, env = "TRACE_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
    /// Journal poll interval in milliseconds.
    #[arg(long, env = "TRACE_POLL_INTERVAL_MS", default_value_t = DEFAULT_POLL_INTERVAL.as_millis() as u64)]
    pub poll_interval_ms: u64,
    /// Subsystem colors as `subsystem=color,...`.
    #[arg(long, env = "TRACE_PALETTE", default_value = DEFAULT_PALETTE)]
    pub palette: String,
}

/// A failed command: its exit status and the message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self { code: EXIT_USAGE, message: message.to_string() }
    }

    fn domain(message: impl ToString) -> Self {
        Self { code: EXIT_DOMAIN, message: message.to_string() }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Sim(SimCommand::Run(args)) => sim_run(args, out),
        Command::Journal(JournalCommand::Verify { path, lenient }) => journal_verify(&path, lenient, out),
        Command::Query(args) => query(args, out),
        Command::Serve(args) => serve(args),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes())
        .and_then(|()| if text.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") })
        .and_then(|()| out.flush())
        .map_err(|e| Failure::usage(format!("writing output: {e}")))
}

pub fn parse_palette(text: &str) -> Result<Palette, String> {
    let mut palette = Palette::default();
    for entry in text.split(',').map(str::trim).filter(|e| !e.is_empty()) {
        let (subsystem, color) = entry
            .split_once('=')
            .filter(|(s, c)| !s.is_empty() && !c.is_empty())
            .ok_or_else(|| format!("palette entry {entry:?} is not subsystem=color"))?;
        palette.0.insert(subsystem.to_string(), color.to_string());
    }
    Ok(palette)
}

fn load_scenario(name: &str) -> Result<ScenarioSpec, Failure> {
    if name == "canonical" {
        return Ok(canonical_breakup_scenario());
    }
    let bytes = fs::read(name).map_err(|e| Failure::usage(format!("{name}: {e}")))?;
    ScenarioSpec::from_json(&bytes).map_err(|e| Failure::usage(format!("{name}: {e}")))
}

fn bus_failure(e: BusError) -> Failure {
    match e {
        BusError::Journal(JournalError::Io { .. }) => Failure::usage(e),
        other => Failure::domain(other),
    }
}

fn sim_run(args: SimRunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut spec = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.plan().map_err(Failure::usage)?;

    let existing = fs::metadata(&args.journal).map(|m| m.len()).unwrap_or(0);
    if existing > 0 && !args.append {
        return Err(Failure::usage(format!(
            "{} already holds {existing} bytes; pass --append to continue it",
            args.journal.display()
        )));
    }
    let config =
        BusConfig { subsystems: Some(spec.subsystems()), enforce_topic_registry: true, ..BusConfig::default() };
    let bus = Bus::open(&args.journal, config).map_err(bus_failure)?;
    let mode = if args.concurrent { DriveMode::Concurrent } else { DriveMode::Sequential };
    let mut report = run_with(&spec, &bus, mode).map_err(|e| match e {
        ScenarioError::Bus(b) => bus_failure(b),
        other => Failure::domain(other),
    })?;
    report.journal_path = Some(args.journal.clone());
    emit(out, &report.to_json())?;
    Ok(EXIT_OK)
}

fn journal_verify(path: &Path, lenient: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let report = verify_journal(path, mode).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    emit(out, &report.to_json())?;
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_DOMAIN })
}

/// Rebuilds the lineage graph recorded in a journal.
pub fn load_graph(
    path: &Path,
    mode: ParseMode,
    allow_dangling_parents: bool,
    palette: Palette,
) -> Result<ProvenanceGraph, Failure> {
    let replay = journal_replay_with(path, mode).map_err(|e| match e {
        JournalError::Io { .. } => Failure::usage(e),
        other => Failure::domain(other),
    })?;
    ProvenanceGraph::rebuild(replay, StoreConfig { allow_dangling_parents, palette }).map_err(|e| match e {
        StoreError::Journal(JournalError::Io { .. }) => Failure::usage(e),
        other => Failure::domain(other),
    })
}

fn query(args: QueryArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let id = MessageId::parse(&args.message_id).map_err(Failure::usage)?;
    let palette = parse_palette(&args.palette).map_err(Failure::usage)?;
    let mode = if args.lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let graph = load_graph(&args.journal, mode, args.allow_dangling_parents, palette)?;
    let focus = NodeId::Message(id);

    let (direction, depth) = match args.kind {
        QueryKind::Back => (Direction::Backward, args.depth),
        QueryKind::Forward => (Direction::Forward, args.depth),
        QueryKind::Both => (Direction::Both, args.depth),
        QueryKind::Replay => {
            let sub = trace_back(&graph, &focus, Depth::Unlimited).map_err(Failure::domain)?;
            let plan = replay_order(&sub).map_err(Failure::domain)?;
            emit(out, &export_replay_json(&plan))?;
            return Ok(EXIT_OK);
        }
    };
    let sub = trace(&graph, &focus, direction, depth).map_err(Failure::domain)?;
    let text = match args.format {
        Format::Dot => export_dot(&sub),
        Format::Json => export_json(&sub),
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

fn serve(args: ServeArgs) -> Result<i32, Failure> {
    if args.max_depth == Depth::Limited(0) {
        return Err(Failure::usage("--max-depth must be at least 1"));
    }
    if args.poll_interval_ms == 0 {
        return Err(Failure::usage("--poll-interval-ms must be positive"));
    }
    let config = ServiceConfig {
        listen: args.listen,
        journal: args.journal,
        parse_mode: if args.strict { ParseMode::Strict } else { ParseMode::Lenient },
        allow_dangling_parents: args.allow_dangling_parents,
        max_depth: args.max_depth,
        static_dir: args.static_dir,
        poll_interval: Duration::from_millis(args.poll_interval_ms),
        palette: parse_palette(&args.palette).map_err(Failure::usage)?,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::usage(format!("starting runtime: {e}")))?;
    runtime.block_on(service::serve(config)).map_err(|e| match e {
        ServiceError::Tail(t) => Failure::domain(t),
        other => Failure::usage(other),
    })?;
    Ok(EXIT_OK)
}

/// Entry point for the `trace` binary.
pub fn main() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
