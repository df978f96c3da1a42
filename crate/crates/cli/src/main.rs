use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coupler_lab::{parse_device_config, run, CliError, CommandKind, RunContext};

/// Simulation front end for a floating-transmon tunable coupler: circuit
/// reduction, coupling sweeps, ZZ maps and fits, CZ-gate calibration,
/// coherence budgets, and randomized benchmarking. Artifacts are CSV/JSON
/// files; identical config and seed give byte-identical output.
#[derive(Parser)]
#[command(name = "coupler-lab", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file (JSON) driving every subcommand
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default: config `out_dir`, else the config's directory)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for stochastic commands; overrides the config `seed`
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a capacitance netlist to the effective three-mode circuit
    Reduce,
    /// Coupling rates vs qubit-qubit distance for the extender geometry
    DistanceSweep,
    /// Drive-crosstalk ratios of a transmission line crossing the device
    Crosstalk,
    /// ZZ strength over a (coupler frequency, qubit detuning) grid
    Zzmap,
    /// Fit coupling rates to a ZZ-vs-coupler-frequency curve
    Zzfit,
    /// Calibrate the diabatic CZ gate (operating point and pulse)
    GateCal,
    /// Propagate a gate pulse and report phases and leakage
    GateSim,
    /// Hybridized qubit coherence vs coupler frequency
    Coherence,
    /// Simulate (interleaved) randomized-benchmarking decays [needs --seed]
    RbSim,
    /// Fit RB decays and extract per-CZ error
    RbFit,
}

impl Command {
    fn kind(&self) -> CommandKind {
        match self {
            Command::Reduce => CommandKind::Reduce,
            Command::DistanceSweep => CommandKind::DistanceSweep,
            Command::Crosstalk => CommandKind::Crosstalk,
            Command::Zzmap => CommandKind::Zzmap,
            Command::Zzfit => CommandKind::Zzfit,
            Command::GateCal => CommandKind::GateCal,
            Command::GateSim => CommandKind::GateSim,
            Command::Coherence => CommandKind::Coherence,
            Command::RbSim => CommandKind::RbSim,
            Command::RbFit => CommandKind::RbFit,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("COUPLER_LAB_LOG", "warn"),
    )
    .init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let kind = cli.command.kind();
    let Some(config_path) = &cli.config else {
        return Err(CliError::Command {
            command: kind.name(),
            detail: "--config <PATH> is required".into(),
        });
    };
    let cfg = parse_device_config(config_path)?;
    let config_dir = config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let out_dir = match (&cli.out, &cfg.out_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => coupler_lab::config::resolve(&config_dir, o),
        (None, None) => config_dir.clone(),
    };
    let ctx = RunContext {
        config_dir,
        out_dir,
        seed: cli.seed,
    };
    run(kind, &cfg, &ctx)
}
