//! `nonsrs-ik`: JSON front end for the closed-form solver.
//!
//! Exit codes: 0 success, 1 I/O, parse or invalid-input errors, 2 degenerate
//! geometry (or a failed `check`). Errors are printed as
//! `{"error": {"tag": ..., "message": ...}}` on stdout, with a one-line
//! diagnostic on stderr.

mod commands;
mod input;
mod json;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nonsrs_ik::kinematics::RobotParams;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "nonsrs-ik", version, about = "Closed-form IK for 7-DOF arms with a wrist offset")]
struct Cli {
    /// Robot parameter file (JSON); the bundled placeholder set if omitted.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct InputArg {
    /// Inline JSON, a file path, or `-` for stdin.
    #[arg(long, short, default_value = "-")]
    input: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// All IK branches for {position, rotation, psi} (or an array of them).
    Ik(InputArg),
    /// Flange pose, frame points and arm angle for joints.
    Fk(InputArg),
    /// Arm angle of joints.
    ArmAngle(InputArg),
    /// Singularity report for joints.
    Classify {
        #[command(flatten)]
        input: InputArg,
        /// Hit threshold for angle conditions (rad).
        #[arg(long, default_value_t = nonsrs_ik::singularity::HIT_TOL)]
        angle_tol: f64,
        /// Hit threshold for the compound condition (m).
        #[arg(long, default_value_t = nonsrs_ik::singularity::HIT_TOL_M)]
        length_tol: f64,
    },
    /// Branch tables over a grid of arm angles for one pose.
    Sweep(InputArg),
    /// Latency percentiles over random FK-generated requests.
    Bench {
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Runs the verification oracles.
    Check {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Parse(String),
    Solver(nonsrs_ik::Error),
    CheckFailed(Value),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) | CliError::Parse(_) => 1,
            CliError::Solver(e) if e.is_degenerate() => 2,
            CliError::Solver(_) => 1,
            CliError::CheckFailed(_) => 2,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Parse(_) => "parse",
            CliError::Solver(e) => e.tag(),
            CliError::CheckFailed(_) => "check_failed",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Io(m) | CliError::Parse(m) => m.clone(),
            CliError::Solver(e) => e.to_string(),
            CliError::CheckFailed(_) => "one or more oracle checks failed".into(),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({"error": {"tag": self.tag(), "message": self.message()}})
    }
}

impl From<nonsrs_ik::Error> for CliError {
    fn from(e: nonsrs_ik::Error) -> Self {
        CliError::Solver(e)
    }
}

/// Result value plus the exit code to report with it (batches can carry
/// per-item errors and still print a full result).
pub struct Outcome {
    pub value: Value,
    pub code: u8,
}

impl From<Value> for Outcome {
    fn from(value: Value) -> Self {
        Outcome { value, code: 0 }
    }
}

fn load_params(path: Option<&PathBuf>) -> Result<RobotParams, CliError> {
    match path {
        None => Ok(RobotParams::moz1_placeholder()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            RobotParams::from_json_str(&text).map_err(CliError::Solver)
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let params = load_params(cli.params.as_ref())?;
    match &cli.command {
        Command::Ik(a) => commands::ik(&params, input::read_json(&a.input)?),
        Command::Fk(a) => commands::fk(&params, input::read_json(&a.input)?),
        Command::ArmAngle(a) => commands::arm_angle(&params, input::read_json(&a.input)?),
        Command::Classify {
            input: a,
            angle_tol,
            length_tol,
        } => commands::classify(&params, input::read_json(&a.input)?, *angle_tol, *length_tol),
        Command::Sweep(a) => commands::sweep(&params, input::read_json(&a.input)?),
        Command::Bench { count, seed } => commands::bench(&params, *count, *seed),
        Command::Check { samples, seed } => commands::check(&params, *samples, *seed),
    }
}

fn emit(cli: &Cli, value: &Value) -> Result<(), CliError> {
    let text = json::to_string(value);
    match &cli.output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (value, code) = match run(&cli) {
        Ok(out) => (out.value, out.code),
        Err(CliError::CheckFailed(report)) => (report, 2),
        Err(e) => {
            eprintln!("nonsrs-ik: {}: {}", e.tag(), e.message());
            (e.to_json(), e.exit_code())
        }
    };
    if let Err(e) = emit(&cli, &value) {
        eprintln!("nonsrs-ik: {}: {}", e.tag(), e.message());
        return ExitCode::from(e.exit_code());
    }
    ExitCode::from(code)
}
