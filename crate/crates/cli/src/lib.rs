//! Library behind the `coupler-lab` binary. Commands are pure with respect
//! to (config, seed): the same inputs produce byte-identical artifacts.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod commands;
pub mod config;

pub use config::{parse_device_config, DeviceConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Config file did not parse; position is 1-based line/column.
    #[error("{path}:{line}:{column}: {detail}", path = .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        detail: String,
    },
    /// Config parsed but is semantically invalid. All violations are listed.
    #[error("invalid config: {}", .violations.join("; "))]
    Validation { violations: Vec<String> },
    /// A module error, tagged with the subcommand it happened under.
    #[error("{command}: {detail}")]
    Command {
        command: &'static str,
        detail: String,
    },
}

/// The ten subcommands. Each maps onto one simulated figure or table of the
/// modeled device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Reduce,
    DistanceSweep,
    Crosstalk,
    Zzmap,
    Zzfit,
    GateCal,
    GateSim,
    Coherence,
    RbSim,
    RbFit,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Reduce => "reduce",
            CommandKind::DistanceSweep => "distance-sweep",
            CommandKind::Crosstalk => "crosstalk",
            CommandKind::Zzmap => "zzmap",
            CommandKind::Zzfit => "zzfit",
            CommandKind::GateCal => "gate-cal",
            CommandKind::GateSim => "gate-sim",
            CommandKind::Coherence => "coherence",
            CommandKind::RbSim => "rb-sim",
            CommandKind::RbFit => "rb-fit",
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where inputs resolve from and outputs go to, plus the seed override.
#[derive(Debug, Clone)]
pub struct RunContext {
    /// Directory of the config file; relative input paths resolve here.
    pub config_dir: PathBuf,
    pub out_dir: PathBuf,
    /// --seed flag; falls back to the config's `seed` key.
    pub seed: Option<u64>,
}

/// Run one subcommand. Returns the artifact paths written.
pub fn run(
    cmd: CommandKind,
    cfg: &DeviceConfig,
    ctx: &RunContext,
) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        CommandKind::Reduce => commands::reduce(cfg, ctx),
        CommandKind::DistanceSweep => commands::distance_sweep(cfg, ctx),
        CommandKind::Crosstalk => commands::crosstalk(cfg, ctx),
        CommandKind::Zzmap => commands::zzmap(cfg, ctx),
        CommandKind::Zzfit => commands::zzfit(cfg, ctx),
        CommandKind::GateCal => commands::gate_cal(cfg, ctx),
        CommandKind::GateSim => commands::gate_sim(cfg, ctx),
        CommandKind::Coherence => commands::coherence(cfg, ctx),
        CommandKind::RbSim => commands::rb_sim(cfg, ctx),
        CommandKind::RbFit => commands::rb_fit(cfg, ctx),
    }
}

/// Tag a module error with its command for the exit message.
pub(crate) fn cmd_err(command: CommandKind, err: impl fmt::Display) -> CliError {
    CliError::Command {
        command: command.name(),
        detail: err.to_string(),
    }
}

/// Write bytes to `dir/name` atomically: a temp file in the same directory
/// is flushed and renamed over the target, so readers never see a partial
/// artifact.
pub(crate) fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let io = |source| CliError::Io {
        path: dir.join(name),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    let path = dir.join(name);
    tmp.persist(&path)
        .map_err(|e| io(e.error))
        .map(|_| path.clone())?;
    Ok(path)
}

/// Pretty JSON artifact with a trailing newline.
pub(crate) fn write_json<T: serde::Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
) -> Result<PathBuf, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
    bytes.push(b'\n');
    write_atomic(dir, name, &bytes)
}

/// CSV artifact: header row with units, `.` decimals, `\n` line ends.
/// Numbers are formatted with the shortest round-trip representation.
pub(crate) fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io {
        path: dir.join(name),
        source: std::io::Error::other(e),
    };
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().expect("in-memory writer");
    write_atomic(dir, name, &bytes)
}

/// Shortest round-trip decimal form; NaN cells become "nan".
pub(crate) fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x}")
    }
}

/// `n` evenly spaced values over [lo, hi] inclusive.
pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
