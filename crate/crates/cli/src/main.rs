mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Adaptive mixture population Monte Carlo for likelihood-free posteriors.
#[derive(Parser)]
#[command(name = "mpmc", version)]
struct Cli {
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only report warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run adaptive MPMC-IL on the configured model.
    Run { config: PathBuf },
    /// Draw an ABC rejection reference sample (g-and-k only).
    Oracle { config: PathBuf },
    /// Compare a run's marginals with a reference CSV.
    Compare { run_dir: PathBuf, oracle_csv: PathBuf },
    /// Write a synthetic GLMM data set.
    SynthGlmm { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            log::error!("--threads must be >= 1");
            return ExitCode::from(commands::EXIT_INPUT as u8);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global pool set once");
    }
    let code = match &cli.command {
        Command::Run { config } => commands::cmd_run(config, cli.seed),
        Command::Oracle { config } => commands::cmd_oracle(config, cli.seed),
        Command::Compare { run_dir, oracle_csv } => commands::cmd_compare(run_dir, oracle_csv),
        Command::SynthGlmm { config } => commands::cmd_synth_glmm(config, cli.seed),
    };
    ExitCode::from(code as u8)
}
