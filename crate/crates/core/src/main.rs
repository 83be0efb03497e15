//! `oclb`: experiment CLI. Exit codes: 0 success, 1 invariant violation,
//! 2 usage/configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oclb::harness::{run_subcommand, write_artifacts, ExperimentConfig};

#[derive(Parser)]
#[command(name = "oclb", version, about = "Oracle-complexity lower-bound testbed")]
struct Cli {
    /// Experiment configuration (INI-style key = value sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; all stream seeds derive from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV + manifest.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (fallback: OCLB_JOBS, then 1). Output is identical
    /// regardless.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum, optimum cross-check, and decomposition checks on a chain
    /// instance.
    VerifyInstance,
    /// Monte Carlo coordinate-advancement means vs the oblivious bound.
    SimulateSpan,
    /// Optimizer grid raced against the finite-sum envelope.
    Race,
    /// Deterministic algorithm against the resisting oracle.
    Resist,
    /// Per-tuple support audit on the block instance.
    BlockAudit,
    /// Replay a manifest, regenerating its CSV byte-for-byte.
    Export,
}

fn jobs_from(cli: &Cli) -> usize {
    cli.jobs
        .or_else(|| std::env::var("OCLB_JOBS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

fn run(cli: &Cli) -> Result<u8, oclb::Error> {
    let jobs = jobs_from(cli);
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| oclb::Error::Parse("--config is required".into()))?;
    let cfg = ExperimentConfig::load(config_path)?;

    let (subcommand, root_seed, cfg) = match cli.command {
        Command::VerifyInstance => ("verify-instance", cli.seed, cfg),
        Command::SimulateSpan => ("simulate-span", cli.seed, cfg),
        Command::Race => ("race", cli.seed, cfg),
        Command::Resist => ("resist", cli.seed, cfg),
        Command::BlockAudit => ("block-audit", cli.seed, cfg),
        Command::Export => {
            // The manifest pins both the experiment and its root seed.
            let sub = cfg.get("manifest", "subcommand")?.to_string();
            let seed = cfg.get_u64("manifest", "root_seed")?;
            return run_inner(&sub, cfg, seed, jobs, &cli.out);
        }
    };
    run_inner(subcommand, cfg, root_seed, jobs, &cli.out)
}

fn run_inner(
    subcommand: &str,
    cfg: ExperimentConfig,
    root_seed: u64,
    jobs: usize,
    out_dir: &std::path::Path,
) -> Result<u8, oclb::Error> {
    let output = run_subcommand(subcommand, &cfg, root_seed, jobs)?;
    let csv_path = write_artifacts(out_dir, &output, &cfg, subcommand, root_seed)?;
    println!("wrote {}", csv_path.display());
    if output.violations.is_empty() {
        println!("{subcommand}: ok");
        Ok(0)
    } else {
        for v in &output.violations {
            eprintln!("violation: {v}");
        }
        Ok(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
