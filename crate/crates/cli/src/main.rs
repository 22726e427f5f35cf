//! `wgm`: batch front end for the weighted Gaussian elliptic toolkit.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{CliError, Command, Context};
use config::RunConfig;
use report::{json_string, Summary};

#[derive(Debug, Parser)]
#[command(name = "wgm", version, about = "Galerkin solves and verification checks for weighted Gaussian problems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker pool size.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Dotted-path override, e.g. `solver.lambda=4`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Galerkin solve with resolvent-bound report.
    Solve,
    /// Penalized whole-space solves over the α grid.
    PenalizeSweep,
    /// Moreau–Yosida envelope checks.
    ProxCheck,
    /// Projection checks on the configured domain.
    ProjectCheck,
    /// Neumann residual over the degree series.
    NeumannCheck,
    /// Integration by parts with boundary traces.
    IbpCheck,
    /// Eigenvalue identities.
    Identities,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Solve => Command::Solve,
            Cmd::PenalizeSweep => Command::PenalizeSweep,
            Cmd::ProxCheck => Command::ProxCheck,
            Cmd::ProjectCheck => Command::ProjectCheck,
            Cmd::NeumannCheck => Command::NeumannCheck,
            Cmd::IbpCheck => Command::IbpCheck,
            Cmd::Identities => Command::Identities,
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(p) => Ok(RunConfig::load(p, &cli.overrides)?),
        None => {
            let mut v = json!({});
            for o in &cli.overrides {
                config::apply_override(&mut v, o)?;
            }
            Ok(RunConfig::from_value(&v)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd: Command = cli.command.into();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be ≥ 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot size worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = match load(&cli).and_then(|cfg| Context::new(cfg, cli.out.clone())) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let summary = match commands::run(cmd, &ctx) {
        Ok(s) => s,
        Err(e) if e.is_input() => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            let mut s = Summary::new(cmd.name());
            s.error = Some(e.to_string());
            s
        }
    };
    if let Err(e) = summary.write(&ctx.out) {
        eprintln!("error: cannot write summary.json: {e}");
        return ExitCode::from(1);
    }
    let json = summary.to_json();
    println!("{}", json_string(&json));
    if summary.pass() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{}", json_string(&json!({"violations": summary.violations()})));
        ExitCode::from(2)
    }
}
