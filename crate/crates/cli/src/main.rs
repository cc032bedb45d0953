//! Command-line driver: run scenarios, sweep parameter grids, audit and
//! export chain files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use blackchain::codec;
use blackchain::config::{known_keys, Grid, ScenarioConfig, ENV_PREFIX};
use blackchain::ledger::{export_jsonl, split_frames, verify_chain, GenesisConfig, GlobalBlock};
use blackchain::runner::{run, sweep, write_sweep_csv};

/// Exit statuses.
const EXIT_INVALID: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "blackchain", version, about = "V2X misbehavior reporting and revocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        /// Scenario TOML; defaults apply to omitted keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config key, e.g. `--set vehicles=50`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Verify a chain file against its genesis. Exit 0 if valid, 1 if
    /// invalid, 3 if a file does not parse, 4 on I/O errors.
    Audit {
        chain: PathBuf,
        #[arg(long)]
        genesis: PathBuf,
    },
    /// Run every point of a parameter grid and write one CSV row per point.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a chain file as one JSON object per block.
    Export { chain: PathBuf },
    /// List the config keys, each settable as an environment variable.
    Keys,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn fail(code: u8) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { code, error }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(fail(EXIT_IO))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    let bytes = read(path)?;
    String::from_utf8(bytes)
        .with_context(|| format!("{} is not UTF-8", path.display()))
        .map_err(fail(EXIT_PARSE))
}

/// File, then environment, then command-line overrides, then validation.
fn load_config(path: Option<&Path>, sets: &[String]) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match path {
        Some(p) => ScenarioConfig::from_toml(&read_text(p)?)
            .with_context(|| format!("in {}", p.display()))
            .map_err(fail(EXIT_CONFIG))?,
        None => ScenarioConfig::default(),
    };
    cfg.apply_env(std::env::vars()).map_err(|e| fail(EXIT_CONFIG)(e.into()))?;
    for kv in sets {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set {kv:?}: expected KEY=VALUE"))
            .map_err(fail(EXIT_CONFIG))?;
        cfg.set_key(k.trim(), v.trim()).map_err(|e| fail(EXIT_CONFIG)(e.into()))?;
    }
    cfg.validate().map_err(|e| fail(EXIT_CONFIG)(e.into()))?;
    Ok(cfg)
}

fn cmd_run(config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>, sets: &[String]) -> Result<(), Failure> {
    let mut cfg = load_config(config, sets)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let dir = out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = run(&cfg).map_err(|e| fail(EXIT_CONFIG)(e.into()))?;
    outcome
        .write_artifacts(&dir)
        .context("writing artifacts")
        .map_err(fail(EXIT_IO))?;
    let m = &outcome.metrics;
    println!("seed {} ticks {} vehicles {} attackers {}", m.seed, m.ticks, m.vehicles, m.attackers);
    println!(
        "revoked {}/{} attackers, latency [{}], false revocations {}",
        m.attackers_revoked,
        m.attackers,
        m.latency_field(),
        m.false_revocations
    );
    println!(
        "reports generated {} committed {} aggregated {}, statements {}, ledger {} blocks {} bytes, dedup_ratio {:.3e}",
        m.reports_generated,
        m.reports_committed,
        m.reports_aggregated,
        m.statements_decided,
        m.ledger_blocks,
        m.ledger_bytes,
        m.dedup_ratio
    );
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_audit(chain: &Path, genesis: &Path) -> Result<(), Failure> {
    let bytes = read(chain)?;
    let genesis = GenesisConfig::from_toml(&read_text(genesis)?)
        .with_context(|| format!("parsing {}", genesis.display()))
        .map_err(fail(EXIT_PARSE))?;
    let verdict = verify_chain(&bytes, &genesis)
        .with_context(|| format!("parsing {}", chain.display()))
        .map_err(fail(EXIT_PARSE))?;
    match verdict.failure {
        None => {
            println!("valid: {} blocks", verdict.blocks);
            Ok(())
        }
        Some(f) => {
            println!("invalid: block {} of {}: {}", f.height, verdict.blocks, f.reason);
            Err(Failure {
                code: EXIT_INVALID,
                error: anyhow::anyhow!("chain failed audit at block {}", f.height),
            })
        }
    }
}

fn cmd_sweep(config: Option<&Path>, grid: &Path, out: &Path) -> Result<(), Failure> {
    let base = load_config(config, &[])?;
    let grid = Grid::from_toml(&read_text(grid)?)
        .with_context(|| format!("in {}", grid.display()))
        .map_err(fail(EXIT_CONFIG))?;
    let rows = sweep(&base, &grid).map_err(|e| fail(EXIT_CONFIG)(e.into()))?;
    write_sweep_csv(&rows, out)
        .context("writing sweep results")
        .map_err(fail(EXIT_IO))?;
    println!("{} rows written to {}", rows.len(), out.display());
    Ok(())
}

fn cmd_export(chain: &Path) -> Result<(), Failure> {
    let bytes = read(chain)?;
    let frames = split_frames(&bytes)
        .with_context(|| format!("parsing {}", chain.display()))
        .map_err(fail(EXIT_PARSE))?;
    let blocks = frames
        .iter()
        .enumerate()
        .map(|(i, f)| codec::decode::<GlobalBlock>(f).with_context(|| format!("decoding block {i}")))
        .collect::<Result<Vec<_>>>()
        .map_err(fail(EXIT_PARSE))?;
    std::io::stdout()
        .write_all(export_jsonl(&blocks).as_bytes())
        .context("writing to stdout")
        .map_err(fail(EXIT_IO))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out, sets } => cmd_run(config.as_deref(), seed, out, &sets),
        Command::Audit { chain, genesis } => cmd_audit(&chain, &genesis),
        Command::Sweep { config, grid, out } => cmd_sweep(config.as_deref(), &grid, &out),
        Command::Export { chain } => cmd_export(&chain),
        Command::Keys => {
            for k in known_keys() {
                println!("{k}\t{ENV_PREFIX}{}", k.to_ascii_uppercase());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
