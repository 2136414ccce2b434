use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rkan::{parse_config, parse_seeds, replicate, run, summary, write_csv, ExperimentConfig, ResultRow};

#[derive(Parser)]
#[command(name = "rkan", version, about = "Rational KAN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds; wins over RKAN_SEED and the file.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Finite-difference check of every rational layer kind.
    Gradcheck {
        #[arg(long, default_value = "gradcheck.csv")]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Run a bundled replication: table1, table2, table3, table5 or pde.
    Replicate {
        which: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
}

fn seed_override(flag: Option<&str>) -> Result<Option<Vec<u64>>> {
    if let Some(s) = flag {
        return Ok(Some(parse_seeds(s)?));
    }
    match std::env::var("RKAN_SEED") {
        Ok(s) if !s.trim().is_empty() => Ok(Some(parse_seeds(&s).context("RKAN_SEED")?)),
        _ => Ok(None),
    }
}

fn execute(cfgs: &mut [ExperimentConfig], seeds: Option<Vec<u64>>, threads: usize, out: &Path) -> Result<bool> {
    let mut rows: Vec<ResultRow> = Vec::new();
    for cfg in cfgs.iter_mut() {
        if let Some(s) = &seeds {
            cfg.seeds = s.clone();
        }
        println!("config {}", cfg.hash());
        let part = run(cfg, threads);
        println!("{}", summary(cfg, &part));
        rows.extend(part);
    }
    write_csv(out, &rows).with_context(|| format!("writing {}", out.display()))?;
    Ok(!rows.is_empty() && rows.iter().all(ResultRow::is_ok))
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let ok = match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            parallel,
        } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = parse_config(&text).with_context(|| format!("in {}", config.display()))?;
            let out = out
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from("results.csv"));
            execute(&mut [cfg], seed_override(seeds.as_deref())?, parallel, &out)?
        }
        Command::Gradcheck { out, seeds } => {
            let mut cfgs = replicate::configs("gradcheck").expect("bundled")?;
            execute(&mut cfgs, seed_override(seeds.as_deref())?, 1, &out)?
        }
        Command::Replicate { which, out, parallel } => {
            let Some(cfgs) = replicate::configs(&which) else {
                bail!(
                    "unknown replication `{which}`; expected one of {}",
                    replicate::TABLES.join(", ")
                );
            };
            let mut cfgs = cfgs?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{which}.csv")));
            execute(&mut cfgs, seed_override(None)?, parallel, &out)?
        }
    };
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
