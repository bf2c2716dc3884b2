//! `gridsim` — command-line studies of coordinated charging-load attacks on
//! a transmission grid: static branch loadings, transient frequency runs,
//! parameter sweeps and a combined markdown report.
//!
//! Exit codes: 0 on success (including "target unreachable" findings), 1 on
//! numerical failure (divergence, loss of synchronism), 2 on bad input.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gridsim::attack::AttackError;
use gridsim::dynamics::DynamicsError;
use gridsim::grid::GridError;
use gridsim::powerflow::PowerFlowError;

pub const EXIT_NUMERICAL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "gridsim",
    version,
    about = "Power-grid studies of coordinated EV-charging load attacks"
)]
pub struct Cli {
    /// Grid case file.
    #[arg(long, global = true, default_value = "datasets/manhattan12/grid.dat")]
    pub case: PathBuf,

    /// Charging-fleet dataset.
    #[arg(long, global = true, default_value = "datasets/manhattan12/fleet.dat")]
    pub fleet: PathBuf,

    /// Directory receiving generated artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Charging power factor (lagging) for static snapshots and sweep
    /// templates; scenario files carry their own.
    #[arg(long, global = true, default_value_t = 0.98)]
    pub pf: f64,

    /// Suppress the human-readable tables on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the static power flow and report branch loadings.
    Powerflow {
        /// Fleet snapshot year, or `none` for the bare case.
        #[arg(long, default_value = "none")]
        year: String,
        /// Whose chargers are connected: `all` or a comma-separated list.
        #[arg(long, default_value = "all")]
        operators: String,
        /// Loading CSV path (default: <out-dir>/loading.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate an attack scenario and write its traces.
    Transient {
        /// Scenario file.
        #[arg(long)]
        scenario: PathBuf,
        /// Also emit a gnuplot script next to the traces.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Sweep attack parameters: per operator, per year, or the smallest
    /// power reaching a frequency target.
    Sweep {
        #[arg(long, value_enum)]
        mode: SweepMode,
        /// Peak-frequency target for `min-power` mode, Hz.
        #[arg(long, default_value_t = 61.2)]
        target_hz: f64,
        /// Scenario template (default: whole fleet, year 2030, shutdown at 5 s).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Result CSV path (default: <out-dir>/sweep_<mode>.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render loading, operator and trend tables into one markdown report.
    Report {
        /// Report path (default: <out-dir>/report.md).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    Operator,
    Year,
    MinPower,
}

/// A malformed command-line value; always classified as an input error.
#[derive(Debug)]
pub struct BadArgument(pub String);

impl std::fmt::Display for BadArgument {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadArgument {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if !(cli.pf > 0.0 && cli.pf <= 1.0) {
        return Err(BadArgument(format!("--pf {} outside (0, 1]", cli.pf)).into());
    }
    match &cli.command {
        Command::Powerflow { year, operators, out } => {
            commands::cmd_powerflow(cli, year, operators, out.as_deref())
        }
        Command::Transient { scenario, gnuplot } => {
            commands::cmd_transient(cli, scenario, *gnuplot)
        }
        Command::Sweep { mode, target_hz, scenario, out } => {
            commands::cmd_sweep(cli, *mode, *target_hz, scenario.as_deref(), out.as_deref())
        }
        Command::Report { out } => commands::cmd_report(cli, out.as_deref()),
    }
}

/// Maps the outermost domain error in the chain onto the exit-code contract.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<GridError>().is_some() {
            return EXIT_INPUT;
        }
        if cause.downcast_ref::<BadArgument>().is_some() {
            return EXIT_INPUT;
        }
        if let Some(e) = cause.downcast_ref::<AttackError>() {
            return exit_code_for_attack(e);
        }
        if let Some(e) = cause.downcast_ref::<PowerFlowError>() {
            return exit_code_for_powerflow(e);
        }
        if let Some(e) = cause.downcast_ref::<DynamicsError>() {
            return exit_code_for_dynamics(e);
        }
    }
    EXIT_NUMERICAL
}

pub fn exit_code_for_attack(err: &AttackError) -> u8 {
    match err {
        AttackError::PowerFlow(e) => exit_code_for_powerflow(e),
        AttackError::Dynamics(e) => exit_code_for_dynamics(e),
        // Unreachable targets are normally reported as data; if one escapes
        // it is still a numerical finding, not bad input.
        AttackError::TargetUnreachable { .. } => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

fn exit_code_for_powerflow(err: &PowerFlowError) -> u8 {
    match err {
        PowerFlowError::NonConvergence { .. }
        | PowerFlowError::SingularJacobian { .. }
        | PowerFlowError::QLimitCycling(_) => EXIT_NUMERICAL,
        PowerFlowError::UnknownBus(_)
        | PowerFlowError::BadPowerFactor(_)
        | PowerFlowError::WrongInjectionLength { .. } => EXIT_INPUT,
    }
}

fn exit_code_for_dynamics(err: &DynamicsError) -> u8 {
    match err {
        DynamicsError::BadConfig(_) => EXIT_INPUT,
        DynamicsError::Initialisation(e) => exit_code_for_powerflow(e),
        DynamicsError::LossOfSynchronism { .. }
        | DynamicsError::AlgebraicSolveFailed { .. }
        | DynamicsError::Unsettled { .. } => EXIT_NUMERICAL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridsim::grid::BusId;

    #[test]
    fn domain_errors_map_to_the_exit_contract() {
        let missing = anyhow::Error::new(GridError::Io {
            path: "nowhere.dat".to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
        });
        assert_eq!(exit_code(&missing), EXIT_INPUT);

        let diverged = anyhow::Error::new(AttackError::Dynamics(
            DynamicsError::LossOfSynchronism {
                time_s: 1.0,
                bus: BusId(1),
            },
        ))
        .context("transient simulation aborted");
        assert_eq!(exit_code(&diverged), EXIT_NUMERICAL);

        let bad_op = anyhow::Error::new(AttackError::UnknownOperator("nobody".into()));
        assert_eq!(exit_code(&bad_op), EXIT_INPUT);
    }
}
