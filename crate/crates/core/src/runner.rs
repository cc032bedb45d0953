//! Running scenarios and writing their artifacts.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::config::{ConfigError, Grid, ScenarioConfig};
use crate::ledger::export_jsonl;
use crate::metrics::{write_metrics_csv, RunMetrics};
use crate::scms::write_audit_csv;
use crate::world::{RunOutcome, World};

pub const CHAIN_FILE: &str = "chain.bin";
pub const CHAIN_JSONL_FILE: &str = "chain.jsonl";
pub const GENESIS_FILE: &str = "genesis.toml";
pub const AUDIT_FILE: &str = "audit_log.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), ArtifactError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(|source| ArtifactError::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// Validates the config and runs it to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutcome, ConfigError> {
    cfg.validate()?;
    let mut world = World::new(cfg.clone());
    world.run_to_end();
    Ok(world.finish())
}

impl RunOutcome {
    /// Writes every artifact of the run into `dir`, creating it.
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), ArtifactError> {
        create_dir(dir)?;
        write(dir, CHAIN_FILE, &self.chain)?;
        write(dir, CHAIN_JSONL_FILE, export_jsonl(&self.blocks).as_bytes())?;
        write(dir, GENESIS_FILE, self.genesis.to_toml().as_bytes())?;
        write(dir, CONFIG_FILE, self.config.to_toml().as_bytes())?;
        write(dir, EVENTS_FILE, &self.events)?;
        let mut audit = Vec::new();
        write_audit_csv(&self.audit, &mut audit)?;
        write(dir, AUDIT_FILE, &audit)?;
        let mut metrics = Vec::new();
        write_metrics_csv(&[("run".into(), self.metrics.clone())], &mut metrics)?;
        write(dir, METRICS_FILE, &metrics)
    }
}

/// One row of a sweep.
pub struct SweepRow {
    pub label: String,
    pub metrics: RunMetrics,
}

/// Runs every point of the grid in order. Fails before running anything if
/// any point is invalid.
pub fn sweep(base: &ScenarioConfig, grid: &Grid) -> Result<Vec<SweepRow>, ConfigError> {
    let points = grid.expand(base)?;
    for (_, cfg) in &points {
        cfg.validate()?;
    }
    points
        .into_iter()
        .map(|(label, cfg)| Ok(SweepRow {
                label,
                metrics: run(&cfg)?.metrics,
            }))
        .collect()
}

/// Writes one labelled metrics row per point to `path`.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), ArtifactError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let table: Vec<_> = rows
        .iter()
        .map(|r| (r.label.clone(), r.metrics.clone()))
        .collect();
    let mut metrics = Vec::new();
    write_metrics_csv(&table, &mut metrics)?;
    fs::write(path, metrics).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_artifact_is_written() {
        let cfg = ScenarioConfig {
            ticks: 30,
            vehicles: 3,
            attackers: 0,
            ..ScenarioConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a").join("b");
        let o = run(&cfg).unwrap();
        o.write_artifacts(&out).unwrap();
        for f in [CHAIN_FILE, CHAIN_JSONL_FILE, GENESIS_FILE, AUDIT_FILE, EVENTS_FILE, METRICS_FILE, CONFIG_FILE] {
            assert!(out.join(f).is_file(), "{f} missing");
        }
        let back = ScenarioConfig::from_toml(&fs::read_to_string(out.join(CONFIG_FILE)).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(fs::read_to_string(out.join(METRICS_FILE)).unwrap().lines().count(), 2);
    }

    #[test]
    fn invalid_config_runs_nothing() {
        let cfg = ScenarioConfig {
            vehicles: 0,
            ..ScenarioConfig::default()
        };
        assert!(run(&cfg).is_err());
    }
}
