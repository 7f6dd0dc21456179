//! `collisim`: ground states, collision sweeps, memory-kernel fits and phase scans.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use collisim_core::error::{Error, Result};
use collisim_core::parallel::Exec;

use collisim_cli::commands::{self, Context};
use collisim_cli::config::ExperimentConfig;

const WORKERS_ENV: &str = "COLLISIM_WORKERS";

#[derive(Parser)]
#[command(name = "collisim", version, about = "Collisional probing of correlated boson chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core). COLLISIM_WORKERS takes precedence.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// DMRG ground state, correlation profiles and the direct correlation length.
    GroundState(Common),
    /// Sweep the probe through a stored ground state.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/ground_state.json`.
        #[arg(long)]
        ground_state: Option<PathBuf>,
    },
    /// Fit the correlation ansatz to a stored trajectory.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/trajectory.csv`.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Ground state to report the direct correlation length against.
        #[arg(long)]
        ground_state: Option<PathBuf>,
    },
    /// Integrate the memory-kernel master equation on its own.
    Me {
        #[command(flatten)]
        common: Common,
        /// Correlation-set CSV; otherwise `me.correlations` or `me.ansatz` from the config.
        #[arg(long)]
        correlations: Option<PathBuf>,
    },
    /// Ground state, sweep and fit at every scan point.
    PhaseScan(Common),
}

fn workers(flag: Option<usize>) -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("{WORKERS_ENV}={v:?} is not a worker count"))),
        Err(_) => Ok(flag.unwrap_or(0)),
    }
}

fn context(common: &Common) -> Result<Context> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let exec = match workers(common.workers)? {
        1 => Exec::sequential(),
        n => Exec::parallel(n)?,
    };
    Context::new(cfg, out, exec)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GroundState(c) => commands::ground_state(&context(&c)?),
        Command::Sweep { common, ground_state } => commands::run_sweep(&context(&common)?, ground_state.as_deref()),
        Command::Fit {
            common,
            trajectory,
            ground_state,
        } => commands::fit(&context(&common)?, trajectory.as_deref(), ground_state.as_deref()),
        Command::Me { common, correlations } => commands::me(&context(&common)?, correlations.as_deref()),
        Command::PhaseScan(c) => commands::phase_scan(&context(&c)?),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.tag() {
        "E_NUMERIC" => 3,
        "E_RESOURCE" => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("E_INPUT {}", msg.lines().next().unwrap_or("bad arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("{} {msg}", e.tag());
            ExitCode::from(exit_code(&e))
        }
    }
}
