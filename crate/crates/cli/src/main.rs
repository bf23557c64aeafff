use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use refresh_lab::commands;
use refresh_lab::error::exit;
use refresh_lab::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "refresh-lab", version, about = "Cache refresh policy laboratory")]
struct Cli {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed, overriding `run.base_seed` and any explicit seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; overrides `run.output`. Standard output otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress the summary line on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve each content's refresh problem by relative value iteration.
    Solve,
    /// Tabulate the average cost of every refresh threshold.
    Enumerate,
    /// Run the ε-greedy threshold learner and write trajectories.
    Learn,
    /// Average regret curves over seeds for every configured ε.
    Sweep,
    /// Run the randomized property suites.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Enumerate => "enumerate",
            Command::Learn => "learn",
            Command::Sweep => "sweep",
            Command::Validate => "validate",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    let target = cli.out.clone().or_else(|| config.run.output.clone());
    let mut sink: Box<dyn Write> = match &target {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let result = match cli.command {
        Command::Solve => commands::cmd_solve(&config, &mut sink),
        Command::Enumerate => commands::cmd_enumerate(&config, &mut sink),
        Command::Learn => commands::cmd_learn(&config, &mut sink),
        Command::Sweep => commands::cmd_sweep(&config, &mut sink),
        Command::Validate => commands::cmd_validate(&config, &mut sink),
    };
    // partial reports are still flushed on failure
    sink.flush()?;
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => {
            if !cli.quiet {
                eprintln!("{}: done", cli.command.name());
            }
            ExitCode::from(exit::SUCCESS as u8)
        }
        Err(e) => {
            eprintln!("refresh-lab {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
