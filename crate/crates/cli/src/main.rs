use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use clique_mst::experiments::{
    append_jsonl, parse_seeds, read_jsonl, run_experiment, silent_failures, verify_suite, write_csv, write_gnuplot,
    write_json, ExperimentConfig, ExperimentRecord, OUT_DIR_ENV, SUITES,
};

/// Message-efficient MST experiments on a simulated congested clique.
///
/// Output files go to the directory named by CMST_OUT_DIR (default `cmst-out`).
#[derive(Parser)]
#[command(name = "cmst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single-point experiment file.
    Run {
        config: PathBuf,
        /// Overrides the file's seed range (`a..b` or a count).
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Run every point of an experiment file whose keys may hold comma lists.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Run a named property suite, or `all`.
    Verify { suite: String },
    /// Rebuild CSV, JSON and gnuplot files from all records collected so far.
    Export,
}

fn out_dir() -> Result<PathBuf> {
    let dir = PathBuf::from(std::env::var(OUT_DIR_ENV).unwrap_or_else(|_| "cmst-out".into()));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_outputs(records: &[ExperimentRecord], dir: &Path, stem: &str) -> Result<()> {
    write_csv(records, fs::File::create(dir.join(format!("{stem}.csv")))?)?;
    write_json(records, fs::File::create(dir.join(format!("{stem}.json")))?)?;
    Ok(())
}

fn experiment(config: &Path, seeds: Option<&str>, single: bool) -> Result<ExitCode> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::parse(&text).with_context(|| format!("parsing {}", config.display()))?;
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if single && cfg.points.len() != 1 {
        bail!("{} describes {} points; use `sweep`", config.display(), cfg.points.len());
    }
    let dir = out_dir()?;
    let records = run_experiment(&cfg, |r| {
        println!(
            "{} n={} m={} seed={} msgs={} rounds={} oracle={} failures={}{}",
            r.variant,
            r.n,
            r.m,
            r.seed,
            r.msgs_total,
            r.rounds,
            r.oracle_match,
            r.failures,
            if r.timeout { " timeout" } else { "" }
        );
    })?;
    append_jsonl(&records, &dir.join("records.jsonl"))?;
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
    write_outputs(&records, &dir, stem)?;
    let silent = silent_failures(&records);
    let wrong = records.iter().filter(|r| !r.oracle_match).count();
    println!("{} records, {wrong} without an oracle match, {} silent", records.len(), silent.len());
    Ok(if silent.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn verify(name: &str) -> Result<ExitCode> {
    let names: Vec<&str> = if name == "all" { SUITES.to_vec() } else { vec![name] };
    let mut ok = true;
    for s in names {
        let report = verify_suite(s)?;
        for c in &report.checks {
            println!("{s}: {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        ok &= report.passed();
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn export() -> Result<ExitCode> {
    let dir = out_dir()?;
    let path = dir.join("records.jsonl");
    let records = if path.exists() { read_jsonl(&path)? } else { Vec::new() };
    write_outputs(&records, &dir, "records")?;
    write_gnuplot(&records, &dir)?;
    println!("exported {} records to {}", records.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, seeds } => experiment(&config, seeds.as_deref(), true),
        Command::Sweep { config, seeds } => experiment(&config, seeds.as_deref(), false),
        Command::Verify { suite } => verify(&suite),
        Command::Export => export(),
    }
}
