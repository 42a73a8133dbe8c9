use branchfield_cli::{exit_code, run, Command, ExperimentConfig, EXIT_CONFIG};
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

/// Monte Carlo experiments on critical branching random walks and their
/// cluster-invariant limit fields.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment config; omitted = built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core), overrides the config.
    #[arg(long, env = "BRANCHFIELD_WORKERS")]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(p) => ExperimentConfig::load(p),
        None => ExperimentConfig::from_toml(""),
    };
    let mut config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = cli.out {
        config.out = o;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    match run(cli.command, &config) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            let code = outcome.exit_code();
            if code != 0 {
                eprintln!("{}: {}", cli.command.name(), if outcome.error_code.is_some() { "an item raised an error, see summary.json" } else { "statistical check failed" });
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
