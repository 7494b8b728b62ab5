use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use hitlab::config::{load, Command, Sources};
use hitlab::run::{execute, exit_code, EXIT_ERROR};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

/// Hitting probabilities and range geometry of stochastic heat equations
/// with Riesz-correlated noise.
#[derive(Debug, Parser)]
#[command(name = "hitlab", version)]
struct Cli {
    /// One of: oracle, simulate, holder, capacity, hausdorff, hit,
    /// ball-exponent, polarity, range-dim, sandwich, validate-kernels.
    #[arg(value_parser = command_name)]
    command: String,
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set model.beta=0.5`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Worker threads; defaults to HITLAB_THREADS, then to the logical cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    output: Option<Format>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Print the canonical configuration and exit without running.
    #[arg(long)]
    dry_run: bool,
}

fn command_name(s: &str) -> Result<String, String> {
    Command::from_name(s).map(|c| c.name().to_string()).ok_or_else(|| format!("unknown command '{s}'"))
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("HITLAB_THREADS") {
        Ok(v) => Ok(Some(v.trim().parse().context("HITLAB_THREADS must be a positive integer")?)),
        Err(_) => Ok(None),
    }
}

fn main() {
    match real_main() {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(EXIT_ERROR);
        }
    }
}

fn real_main() -> Result<i32> {
    let cli = Cli::parse();
    if let Some(n) = threads(cli.threads)? {
        anyhow::ensure!(n > 0, "thread count must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("run.master_seed={s}"));
    }
    if let Some(r) = cli.replicas {
        overrides.push(format!("run.replicas={r}"));
    }
    if let Some(f) = cli.output {
        let name = match f {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Both => "both",
        };
        overrides.push(format!("run.output={name}"));
    }
    if let Some(d) = &cli.out_dir {
        overrides.push(format!("run.output_dir={}", d.display()));
    }
    let sources = Sources { command: Some(cli.command.clone()), file: cli.config.clone(), overrides };
    let (cfg, generated) = load(&sources)?;
    if let Some(seed) = generated {
        eprintln!("generated master seed: {seed}");
    }
    if cli.dry_run {
        print!("{}", cfg.to_text());
        return Ok(0);
    }
    let report = execute(&cfg, generated.is_some());
    let files = report
        .write(&cfg.output_dir, cfg.output.json(), cfg.output.csv())
        .with_context(|| format!("writing report to {}", cfg.output_dir.display()))?;
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    if report.passed == Some(false) {
        eprintln!("acceptance check failed");
    }
    Ok(exit_code(&report))
}
