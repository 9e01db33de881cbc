//! `trcg`: experiment runner for the trust-region/conjugate-gradient
//! analysis toolkit.
//!
//! Grammar: `trcg <command> [--param key=value]... [--seed N] [--out DIR]`.
//! Every command writes CSV (plus one JSON summary where noted) into the
//! output directory; identical command lines produce byte-identical files.
//! Exit codes: 0 success, 1 contract failure, 2 usage or data errors.

mod commands;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::spec::ExperimentSpec;

#[derive(Parser)]
#[command(name = "trcg", version, about = "Trust-region and conjugate-gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment parameter `key=value`; repeatable. Unknown keys are
    /// rejected.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Seed for every random draw of the experiment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the emitted files (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Conjugate-gradient iterate/residual dynamics on a head/tail split
    /// (params: measure=PATH).
    CgDynamics(Common),
    /// One trust-region run with trace CSV and condition-report JSON
    /// (params: problem, solver, kappa, theta, delta0, delta-max,
    /// rho-accept, grad-tol, max-outer, hessian, x0, tail-fraction).
    TrRun(Common),
    /// Coupling-system contracts over one split or a randomized family
    /// (params: measure=PATH, n-min, n-max, random=N).
    SigmaCheck(Common),
    /// Asymptotic ratio table for the planar model problem
    /// (params: eps=comma,list).
    RemarkAsymptotics(Common),
    /// Capture experiment near a problem's solution set (params: problem,
    /// trials, distance, stay, plus the tr-run solver parameters).
    Capture(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CgDynamics(_) => "cg-dynamics",
            Command::TrRun(_) => "tr-run",
            Command::SigmaCheck(_) => "sigma-check",
            Command::RemarkAsymptotics(_) => "remark-asymptotics",
            Command::Capture(_) => "capture",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::CgDynamics(c)
            | Command::TrRun(c)
            | Command::SigmaCheck(c)
            | Command::RemarkAsymptotics(c)
            | Command::Capture(c) => c,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = cli.command.common();
    let spec = match ExperimentSpec::new(
        cli.command.name(),
        &common.params,
        common.seed,
        common.out.clone(),
    ) {
        Ok(spec) => spec,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::CgDynamics(_) => commands::cg_dynamics(spec),
        Command::TrRun(_) => commands::tr_run(spec),
        Command::SigmaCheck(_) => commands::sigma_check(spec),
        Command::RemarkAsymptotics(_) => commands::remark_asymptotics(spec),
        Command::Capture(_) => commands::capture(spec),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(2)
        }
    }
}
