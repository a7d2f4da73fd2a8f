use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deglap::runner::{report_summary, run, Command, ExperimentConfig, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "deglap", version, about = "Degenerate p-Laplacian experiments driven by JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; omit for a fully serial, reproducible run.
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    Solve(Common),
    Maxop(Common),
    Norms(Common),
    Weights(Common),
    Verify(Common),
    Sweep(Common),
    /// Tabulate the check reports found in a directory.
    Summary {
        dir: PathBuf,
        #[arg(long)]
        allow_mixed: bool,
    },
}

fn seed_override() -> Result<Option<u64>, RunError> {
    match std::env::var("DEGLAP_SEED") {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| RunError::Schema(format!("DEGLAP_SEED: not an unsigned integer: {s:?}"))),
        Err(_) => Ok(None),
    }
}

fn dispatch(cli: Cli) -> Result<Vec<PathBuf>, RunError> {
    let (command, common) = match cli.command {
        Cmd::Summary { dir, allow_mixed } => return report_summary(&dir, allow_mixed),
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Maxop(c) => (Command::Maxop, c),
        Cmd::Norms(c) => (Command::Norms, c),
        Cmd::Weights(c) => (Command::Weights, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
    };
    let cfg = ExperimentConfig::load(&common.config, Some(command))?;
    let opts = RunOptions { out_dir: common.out, parallel: common.parallel, seed_override: seed_override()? };
    let outcome = run(&cfg, &opts)?;
    for rep in &outcome.reports {
        let verdict = if rep.passed { "pass" } else { "FAIL" };
        let c = rep.empirical_c.map_or("inf".to_string(), |v| format!("{v:.6e}"));
        println!("{verdict} {} empirical_C={c}", rep.name);
    }
    Ok(outcome.artifacts)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("deglap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
