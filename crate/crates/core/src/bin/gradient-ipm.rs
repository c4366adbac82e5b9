use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gradient_ipm::cli::{run, Command, RunSpec};
use gradient_ipm::oracle::Mode;

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    SolveLinear,
    SolveBarrier,
    SolveSdp,
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Paper,
    Practical,
}

/// Interior point and linear solvers driven by gradient queries only.
#[derive(Parser)]
#[command(version)]
struct Args {
    command: Cmd,
    /// `.json` for solve-linear / solve-barrier, `.dat-s` (SDPA sparse) for solve-sdp.
    input: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Estimator bound.
    #[arg(long = "B")]
    bound: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-iteration JSON lines here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Flat `key = value` solver configuration; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let spec = RunSpec {
        command: match args.command {
            Cmd::SolveLinear => Command::SolveLinear,
            Cmd::SolveBarrier => Command::SolveBarrier,
            Cmd::SolveSdp => Command::SolveSdp,
            Cmd::Verify => Command::Verify,
        },
        input: args.input,
        config: args.config,
        eps: args.eps,
        beta: args.beta,
        mode: args.mode.map(|m| match m {
            ModeArg::Paper => Mode::Paper,
            ModeArg::Practical => Mode::Practical,
        }),
        bound: args.bound,
        seed: args.seed,
        trace: args.trace,
    };
    let code = run(&spec, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    ExitCode::from(code as u8)
}
