use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xdiff::commands::{cmd_certify, cmd_convergence, cmd_probe, cmd_simulate, CliError, Options};
use xdiff::config::Loaded;

#[derive(Parser)]
#[command(name = "xdiff", version, about = "Entropy certification, simulation and regularity probes for cross-diffusion systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "xdiff-out")]
    out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "XDIFF_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
    /// Simulate without the certification prerequisite.
    #[arg(long)]
    skip_certify: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the entropy structure of the configured model.
    Certify(Common),
    /// Run the implicit solver and write the trajectory.
    Simulate(Common),
    /// Probe a trajectory for regularity.
    Probe(Common),
    /// Manufactured-solution refinement study.
    Convergence(Common),
}

type Handler = fn(&Loaded, &Options) -> Result<String, CliError>;

fn run(cli: Cli) -> Result<String, CliError> {
    let (common, cmd): (&Common, Handler) = match &cli.command {
        Command::Certify(c) => (c, cmd_certify),
        Command::Simulate(c) => (c, cmd_simulate),
        Command::Probe(c) => (c, cmd_probe),
        Command::Convergence(c) => (c, cmd_convergence),
    };
    let threads = match common.threads {
        Some(t) => t as usize,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let opts = Options { out: common.out.clone(), threads, skip_certify: common.skip_certify };
    let loaded = Loaded::read(&common.config)?;
    cmd(&loaded, &opts)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("xdiff: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
