//! Command-line front end: `run`, `sweep`, `fig4` and `report`.
//!
//! Exit codes: 0 success, 1 simulation failure, 2 configuration error,
//! 3 I/O error, 4 unreadable report input.

pub mod config;
pub mod output;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::harness::{aggregate_all, run, sweep, RunRow, Scenario, SimulationError};
use crate::network::run_traced;
use config::{load_config, Config, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "dtcsim", version, about = "TCP segment caching on lossy multi-hop chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One run per grid cell using the base seed; prints the metrics.
    Run {
        #[command(flatten)]
        opts: Opts,
        /// Also write a per-event trace log for each run.
        #[arg(long)]
        trace: bool,
    },
    /// Full sweep; writes runs.csv and summary.csv.
    Sweep {
        #[command(flatten)]
        opts: Opts,
    },
    /// Per-node load at 11 hops and 10% loss, both modes; adds nodes.csv.
    Fig4 {
        #[command(flatten)]
        opts: Opts,
    },
    /// Prints tables from a directory of CSVs written by sweep or fig4.
    Report {
        /// Directory holding summary.csv (defaults to the configured output).
        dir: Option<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Debug, Args)]
struct Opts {
    /// Hop counts: `6,8,11` or the inclusive range `6..11`.
    #[arg(long)]
    hops: Option<String>,
    /// Per-hop data loss probabilities, comma separated.
    #[arg(long)]
    loss: Option<String>,
    /// on, off or both.
    #[arg(long)]
    dtc: Option<String>,
    #[arg(long)]
    segments: Option<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    /// Base seed; run i of a cell uses seed + i.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "hop-latency-ms")]
    hop_latency_ms: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// `key = value` file; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

impl Opts {
    fn load(&self) -> Result<Config, ConfigError> {
        let flags = [
            ("hops", &self.hops),
            ("loss", &self.loss),
            ("dtc", &self.dtc),
            ("segments", &self.segments),
            ("window", &self.window),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("hop_latency_ms", &self.hop_latency_ms),
            ("out", &self.out),
        ];
        let overrides: Vec<(&str, String)> = flags
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (*k, v.clone())))
            .collect();
        load_config(self.config.as_deref(), &overrides)
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Report(String),
    Simulation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Simulation(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Report(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Report(m) | CliError::Simulation(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Scenario(e) => CliError::Config(e.to_string()),
            e => CliError::Simulation(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Normal output goes to `out`, diagnostics
/// to `err`.
pub fn main_with(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Run { opts, trace } => cmd_run(&opts.load()?, trace, out),
        Command::Sweep { opts } => cmd_sweep(&opts.load()?, out).map(|_| ()),
        Command::Fig4 { opts } => cmd_fig4(opts.load()?, out),
        Command::Report { dir, opts } => {
            let dir = match dir {
                Some(d) => d,
                None => opts.load()?.out,
            };
            let text = report::render(&dir).map_err(CliError::Report)?;
            out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn template(cfg: &Config) -> Result<Scenario, CliError> {
    // Grid fields are filled per cell; validate the rest up front.
    let probe = Scenario {
        hops: cfg.hops[0],
        p_data: cfg.loss[0],
        ..cfg.scenario.clone()
    };
    probe.validate().map_err(SimulationError::from)?;
    Ok(cfg.scenario.clone())
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn cmd_run(cfg: &Config, trace: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let t = template(cfg)?;
    prepare_out(&cfg.out)?;
    let mut rows = Vec::new();
    for key in cfg.grid() {
        let s = Scenario {
            hops: key.hops,
            p_data: key.p_data,
            dtc_enabled: key.dtc_enabled,
            seed: cfg.seed,
            ..t.clone()
        };
        s.validate().map_err(SimulationError::from)?;
        let metrics = if trace {
            let (m, log) = run_traced(&s).map_err(SimulationError::from)?;
            let path = cfg.out.join(format!("trace_{}_s{}.log", key.id(), s.seed));
            fs::write(&path, log).map_err(|e| io_err(&path, e))?;
            m
        } else {
            run(&s)?
        };
        writeln!(
            out,
            "{} seed={} e2e_retx={} sender_data_tx={} local_retx={} completion_time_us={} nodes={:?}",
            key.id(),
            s.seed,
            metrics.e2e_retransmissions,
            metrics.sender_data_tx,
            metrics.local_retransmissions_total,
            metrics.completion_time.as_micros(),
            metrics.per_node_data_tx
        )
        .map_err(|e| CliError::Io(e.to_string()))?;
        rows.push(RunRow {
            key,
            seed: s.seed,
            metrics,
        });
    }
    let path = cfg.out.join("runs.csv");
    output::write_runs(&path, &rows).map_err(|e| io_err(&path, e))
}

fn cmd_sweep(cfg: &Config, out: &mut dyn Write) -> Result<Vec<crate::harness::Aggregate>, CliError> {
    let t = template(cfg)?;
    prepare_out(&cfg.out)?;
    let rows = sweep(&t, &cfg.grid(), cfg.runs, cfg.seed)?;
    let aggs = aggregate_all(&rows)?;
    let runs_path = cfg.out.join("runs.csv");
    output::write_runs(&runs_path, &rows).map_err(|e| io_err(&runs_path, e))?;
    let summary_path = cfg.out.join("summary.csv");
    output::write_summary(&summary_path, &aggs).map_err(|e| io_err(&summary_path, e))?;
    writeln!(
        out,
        "wrote {} runs over {} cells to {}",
        rows.len(),
        aggs.len(),
        cfg.out.display()
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(aggs)
}

fn cmd_fig4(mut cfg: Config, out: &mut dyn Write) -> Result<(), CliError> {
    cfg.hops = vec![11];
    cfg.loss = vec![0.10];
    cfg.dtc = config::DtcMode::Both;
    let aggs = cmd_sweep(&cfg, out)?;
    let path = cfg.out.join("nodes.csv");
    output::write_nodes(&path, &aggs).map_err(|e| io_err(&path, e))
}
