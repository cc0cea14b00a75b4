use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmoc_cli::config::{CommandKind, HomotopyKind};
use dmoc_cli::{run, verify, Overrides, RunConfig, Status};

/// Discrete mechanics and optimal control of interconnected mechanical systems.
#[derive(Debug, Parser)]
#[command(name = "dmoc", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    common: Common,
    /// verify the solution artifact in this directory
    #[arg(long, value_name = "PATH", global = true)]
    verify: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// forward simulation under the configured control
    Simulate,
    /// solve the optimal control problem
    Optimize,
    /// re-check a solution artifact
    Verify {
        #[arg(value_name = "PATH")]
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HomotopyArg {
    On,
    Off,
    Auto,
}

#[derive(Debug, Args)]
struct Common {
    /// configuration file, or a built-in case (bb_case1, bb_case2, cp_case1, cp_case2)
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<String>,
    /// output directory
    #[arg(long, value_name = "DIR", global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_name = "K", global = true)]
    segments: Option<usize>,
    #[arg(long, value_name = "X", global = true)]
    tol: Option<f64>,
    /// Newton iterations per continuation stage
    #[arg(long, value_name = "M", global = true)]
    max_iters: Option<usize>,
    #[arg(long, value_enum, global = true)]
    homotopy: Option<HomotopyArg>,
}

fn exit(status: Status) -> ExitCode {
    ExitCode::from(status.code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verify_dir = match &cli.command {
        Some(Command::Verify { dir }) => dir.clone().or(cli.verify.clone()),
        _ => cli.verify.clone(),
    };
    if let Some(dir) = verify_dir {
        return match verify(&dir) {
            Ok(v) => {
                print!("{}", v.render());
                exit(v.status())
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit(e.status())
            }
        };
    }
    if matches!(cli.command, Some(Command::Verify { .. })) {
        eprintln!("error: verify needs an artifact directory");
        return exit(Status::ConfigError);
    }

    let Some(config) = &cli.common.config else {
        eprintln!("error: --config is required");
        return exit(Status::ConfigError);
    };
    let mut cfg = match RunConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit(Status::ConfigError);
        }
    };
    match cli.command {
        Some(Command::Simulate) => cfg.command = Some(CommandKind::Simulate),
        Some(Command::Optimize) => cfg.command = Some(CommandKind::Optimize),
        _ => {}
    }
    let c = &cli.common;
    let overrides = Overrides {
        out: c.out.clone(),
        segments: c.segments,
        tol: c.tol,
        max_iters: c.max_iters,
        homotopy: c.homotopy.map(|h| match h {
            HomotopyArg::On => HomotopyKind::On,
            HomotopyArg::Off => HomotopyKind::Off,
            HomotopyArg::Auto => HomotopyKind::Auto,
        }),
    };
    if let Err(e) = overrides.apply(&mut cfg) {
        eprintln!("error: {e}");
        return exit(Status::ConfigError);
    }
    match run(&cfg) {
        Ok(out) => {
            println!("{}", out.summary.trim_end());
            exit(out.status)
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.status())
        }
    }
}
