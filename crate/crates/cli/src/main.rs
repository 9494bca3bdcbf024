use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lcusim::{emit_outputs, exit, run, validate_config, Command, RunError};
use lcusim_core::par::ExecMode;

/// Two-qubit photonic LCU simulator and experiment runner.
#[derive(Parser, Debug)]
#[command(name = "lcusim", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to the config, then LCUSIM_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps; 1 runs serially.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    let mut cfg = match validate_config(&text, Some(cli.command)) {
        Ok(c) => c,
        Err(errs) => {
            eprintln!("error: {errs}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dir = cli
        .out
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os("LCUSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("lcusim-out"));
    let result = run(&cfg, ExecMode::from_threads(cli.parallel)).and_then(|out| emit_outputs(&out, &dir).map(|p| (out, p)));
    match result {
        Ok((out, paths)) => {
            println!("{} {} -> {} ({} files)", out.record.command.name(), out.record.config_hash, dir.display(), paths.len());
            ExitCode::SUCCESS
        }
        Err(e @ RunError::Numerical(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::NUMERICAL as u8)
        }
        Err(e @ RunError::Io { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::IO as u8)
        }
    }
}
