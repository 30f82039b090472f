use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vss_cli::{parse_config, run_command, CliError, Command, Outputs};

#[derive(Parser)]
#[command(name = "vss", version, about = "Very singular similarity solutions of the thin-film equation with absorption")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: PathBuf,
    /// Write an SVG plot here
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Directory for CSV output
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// List critical absorption exponents
    Criticals(Common),
    /// Solve one similarity profile
    Profile(Common),
    /// Continue a profile branch in p
    Branch(Common),
    /// Periodic oscillatory component near the interface
    Orbit(Common),
    /// Time-dependent run of the PDE
    Evolve(Common),
}

fn threads_from_env() -> Option<usize> {
    std::env::var("VSS_THREADS").ok().and_then(|v| v.trim().parse().ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.cmd {
        Cmd::Criticals(c) => (Command::Criticals, c),
        Cmd::Profile(c) => (Command::Profile, c),
        Cmd::Branch(c) => (Command::Branch, c),
        Cmd::Orbit(c) => (Command::Orbit, c),
        Cmd::Evolve(c) => (Command::Evolve, c),
    };
    vss_core::par::configure_threads(threads_from_env());
    let result = parse_config(&common.config)
        .map_err(CliError::from)
        .and_then(|cfg| run_command(cmd, &cfg, &Outputs::new(common.out, common.plot)));
    match result {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("vss: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
