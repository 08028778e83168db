use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use timing_core::config::{default_config, load_config, Command, Overrides, Preset};
use timing_core::experiment::{run_experiment, write_outputs};

/// Simulate and analyse proposer timing games in propose-vote proof-of-stake protocols.
#[derive(Parser)]
#[command(name = "timing-games", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the slot-by-slot game and write per-slot records and payoffs.
    Simulate(Common),
    /// Equilibrium-profile payoffs across schedule offsets.
    Sweep(Common),
    /// Deviation tests of the equilibrium profile.
    CheckEquilibrium(Common),
    /// Expected payoff of a delaying proposer against deadline-driven attesters.
    BestResponse(Common),
    /// Marginal value of time from builder bids (generated or read from a file).
    Mvot(Common),
    /// Next-slot attestation share against block release time.
    Curves(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", env = "TIMING_GAMES_OUT", default_value = "results")]
    out: PathBuf,
    /// Seed override.
    #[arg(long, env = "TIMING_GAMES_SEED")]
    seed: Option<u64>,
    /// Parameter preset: streamlet, block-slot or ethereum.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::CheckEquilibrium(c) => (Command::CheckEquilibrium, c),
        Cmd::BestResponse(c) => (Command::BestResponse, c),
        Cmd::Mvot(c) => (Command::Mvot, c),
        Cmd::Curves(c) => (Command::Curves, c),
    };
    match run(command, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, common: Common) -> timing_core::Result<()> {
    let overrides = Overrides {
        command: Some(command),
        preset: common.preset.as_deref().map(Preset::parse).transpose()?,
        seed: common.seed,
    };
    let config = match &common.config {
        Some(path) => load_config(path, overrides)?,
        None => default_config(overrides)?,
    };
    let output = run_experiment(&config)?;
    for path in write_outputs(&config, &output, &common.out)? {
        println!("wrote {}", path.display());
    }
    println!("{}", output.headline);
    Ok(())
}
