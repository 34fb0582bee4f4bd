//! `qdephase`: Fisher information of monitored dephasing qubits from the
//! command line.

mod config;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use qdephase::metrology::{fisher_over_time, ultimate_qfi, unconditional_qfi, ConditionalStates, MonitorOptions, StateDerivative};
use qdephase::verify::{self, Rescaling, Scale};

use config::{Overrides, SimConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(#[from] qdephase::Error),
    #[error("output error: {0}")]
    Io(#[from] io::Error),
    #[error("{0} verification check(s) failed")]
    Verify(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Verify(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qdephase", version, about = "Fisher information of continuously monitored dephasing qubits")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config file, or a previous report whose echoed config is reused.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    /// Worker threads for the trajectory batch (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the report columns and exit.
    #[arg(long = "describe-columns", global = true)]
    describe_columns: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Unconditional and ultimate QFI at each sample time.
    Unconditional,
    /// Monte Carlo Fisher estimates for the monitored system.
    Monitor,
    /// Run the self-check suite.
    Verify {
        /// Use the full acceptance sizes instead of the reduced ones.
        #[arg(long)]
        full: bool,
        /// Use kappa instead of (1 - eta) kappa in the closed-form reference.
        #[arg(long = "inject-wrong-rescaling")]
        inject_wrong_rescaling: bool,
    },
}

fn load_config(cli: &Cli) -> Result<SimConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => config::read_config(path)?,
        None => SimConfig::default(),
    };
    config.apply(&cli.overrides);
    config.validate()?;
    Ok(config)
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Config(format!("--out {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_unconditional(config: &SimConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let rho0 = config.initial_state()?;
    let p = config.params()?;
    let mut rows = Vec::new();
    for t in config.grid()?.sample_times() {
        let ultimate = match ultimate_qfi(&rho0, &p, t) {
            Ok(q) => Some(q),
            Err(qdephase::Error::ImpureState(_)) => None,
            Err(e) => return Err(e.into()),
        };
        rows.push((t, unconditional_qfi(&rho0, &p, t)?, ultimate));
    }
    output::write_unconditional(out, config, &rows)?;
    Ok(())
}

fn cmd_monitor(config: &SimConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let rho0 = config.initial_state()?;
    let p = config.params()?;
    let u = config.unravelling()?;
    let grid = config.grid()?;
    let options = if u.is_noise_only() {
        MonitorOptions { dt: config.dt, states: ConditionalStates::ClosedForm, derivative: StateDerivative::Analytic }
    } else {
        MonitorOptions { dt: config.dt, states: ConditionalStates::StepIntegrated, derivative: StateDerivative::Tangent }
    };
    let rows = fisher_over_time(&rho0, &p, &u, &grid, config.trajectories, config.seed, &options)?;
    output::write_monitor(out, config, &rows)?;
    Ok(())
}

fn cmd_verify(full: bool, wrong_rescaling: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let scale = if full { Scale::Full } else { Scale::Reduced };
    let reports = if wrong_rescaling {
        vec![verify::check_equivalence(scale, Rescaling::Unrescaled)?]
    } else {
        verify::run_all(scale)?
    };
    for r in &reports {
        writeln!(out, "{}", r.line())?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    writeln!(out, "{} of {} checks passed", reports.len() - failed, reports.len())?;
    out.flush()?;
    if failed > 0 {
        return Err(CliError::Verify(failed));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.describe_columns {
        let text = match cli.command {
            Command::Unconditional => output::describe(output::UNCONDITIONAL_COLUMNS),
            Command::Monitor => output::describe(output::MONITOR_COLUMNS),
            Command::Verify { .. } => "one line per check: PASS|FAIL [id] name: detail\n".to_string(),
        };
        print!("{text}");
        return Ok(());
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("--workers: {e}")))?;

    let started = Instant::now();
    let result = pool.install(|| -> Result<(), CliError> {
        match &cli.command {
            Command::Verify { full, inject_wrong_rescaling } => {
                cmd_verify(*full, *inject_wrong_rescaling, &mut *open_output(&cli.out)?)
            }
            Command::Unconditional => {
                let config = load_config(&cli)?;
                let mut out = open_output(&cli.out)?;
                cmd_unconditional(&config, &mut *out)?;
                Ok(out.flush()?)
            }
            Command::Monitor => {
                let config = load_config(&cli)?;
                log::info!("{} trajectories on {} worker(s)", config.trajectories, rayon::current_num_threads());
                let mut out = open_output(&cli.out)?;
                cmd_monitor(&config, &mut *out)?;
                Ok(out.flush()?)
            }
        }
    });
    log::info!("wall clock {:.3} s", started.elapsed().as_secs_f64());
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).target(env_logger::Target::Stderr).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
