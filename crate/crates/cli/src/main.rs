use clap::Parser;
use fbsde_lab::{run, Command, ExperimentConfig, OutputDir, DEFAULT_CONFIG, OUT_DIR_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

/// Experiments with fBM-driven BSDEs, their PDEs and density envelopes.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Experiment file (TOML). Without it the built-in default is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides FBSDE_LAB_OUT and the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match go(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn go(args: Args) -> fbsde_lab::CliResult<bool> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::parse(DEFAULT_CONFIG)?,
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.threads {
        if !fbsde_core::par::configure_threads(n) {
            log::warn!("--threads {n} ignored: thread pool already set up or parallel feature off");
        }
    }
    let dir = args
        .out
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("fbsde-out"));
    let mut out = OutputDir::create(&dir)?;
    let report = run(args.command, &cfg, &mut out)?;
    for c in &report.checks {
        if args.command != Command::VerifyAll {
            println!("{} {}: {} (need {})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.measured, c.tolerance);
        }
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    println!("report written to {}", dir.join("report.json").display());
    Ok(report.all_pass)
}
