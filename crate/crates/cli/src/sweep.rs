//! Manifest-driven experiment sweeps: strategies x attacks x seeds, each cell
//! an independent run with its own oracle instance and output CSV.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use mimic_core::attacks::AttackMethod;
use mimic_core::error::{Error, Result};
use mimic_core::pipeline::{run_active, run_passive, run_raw_baseline, CsvSink};
use mimic_core::selector::Strategy;
use mimic_core::{Network64, Oracle64};

use crate::config::{Config, RunMode};

fn d_workers() -> usize {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub base_config: PathBuf,
    pub output_dir: PathBuf,
    pub strategies: Vec<String>,
    pub attacks: Vec<String>,
    pub seeds: Vec<u64>,
    #[serde(default = "d_workers")]
    pub workers: usize,
}

#[derive(Debug, Clone)]
struct Cell {
    attack: String,
    strategy: String,
    seed: u64,
    output: PathBuf,
}

impl Cell {
    fn name(&self) -> String {
        format!("{}__{}__s{}", self.attack, self.strategy, self.seed)
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::usage(format!("cannot read manifest {}: {e}", path.display())))?;
    let mut manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::usage(format!("manifest parse error: {e}")))?;
    if manifest.strategies.is_empty() || manifest.attacks.is_empty() || manifest.seeds.is_empty() {
        return Err(Error::usage(
            "manifest needs nonempty strategies, attacks, and seeds",
        ));
    }
    for s in &manifest.strategies {
        Strategy::parse(s)?;
    }
    for a in &manifest.attacks {
        AttackMethod::parse(a)?;
    }
    if manifest.workers == 0 {
        return Err(Error::usage("workers must be >= 1"));
    }
    // A relative base config resolves next to the manifest.
    if manifest.base_config.is_relative() {
        if let Some(dir) = path.parent() {
            manifest.base_config = dir.join(&manifest.base_config);
        }
    }
    Ok(manifest)
}

/// Runs every cell; completed CSVs survive failures, and failing cells are
/// listed in `failures.json` under the output directory. Returns the number
/// of failed cells.
pub fn run_sweep(manifest: &Manifest) -> Result<usize> {
    let base = Config::load(&manifest.base_config)?;
    std::fs::create_dir_all(&manifest.output_dir)?;
    let mut cells = Vec::new();
    for attack in &manifest.attacks {
        for strategy in &manifest.strategies {
            for &seed in &manifest.seeds {
                let name = format!("{attack}__{strategy}__s{seed}.csv");
                cells.push(Cell {
                    attack: attack.clone(),
                    strategy: strategy.clone(),
                    seed,
                    output: manifest.output_dir.join(name),
                });
            }
        }
    }

    // In-process oracles are trained once and cloned into each cell so every
    // cell still owns its instance (and its ledger).
    let shared_net: Option<Network64> = if base.oracle.kind == "mlp" {
        Some(base.oracle_net(&base.dataset()?)?)
    } else {
        None
    };

    let failures: Mutex<Vec<(String, String)>> = Mutex::new(Vec::new());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.workers)
        .build()
        .map_err(|e| Error::usage(format!("cannot build worker pool: {e}")))?;
    pool.install(|| {
        cells.par_iter().for_each(|cell| {
            if let Err(e) = run_cell(&base, shared_net.as_ref(), cell) {
                failures
                    .lock()
                    .expect("failures lock")
                    .push((cell.name(), e.to_string()));
            }
        });
    });

    let mut failures = failures.into_inner().expect("failures lock");
    failures.sort();
    if !failures.is_empty() {
        let body: Vec<serde_json::Value> = failures
            .iter()
            .map(|(cell, error)| json!({"cell": cell, "error": error}))
            .collect();
        std::fs::write(
            manifest.output_dir.join("failures.json"),
            serde_json::to_string_pretty(&json!({ "failed_cells": body })).expect("serializable"),
        )?;
    }
    Ok(failures.len())
}

fn run_cell(base: &Config, shared_net: Option<&Network64>, cell: &Cell) -> Result<()> {
    let mut config = base.clone();
    config.attack.method = cell.attack.clone();
    config.selection.strategy = cell.strategy.clone();
    config.override_seed(cell.seed);
    config.run.output = cell.output.clone();
    let prepared = match shared_net {
        Some(net) => {
            let oracle = Oracle64::in_process(net.clone());
            config.prepare_with_oracle(oracle)?
        }
        None => config.prepare()?,
    };
    let file = std::fs::File::create(&cell.output)?;
    let mut sink = CsvSink::new(file)?;
    let records = match prepared.mode {
        RunMode::Passive => run_passive(
            &prepared.run_config,
            &prepared.inputs,
            &prepared.oracle,
            &mut sink,
        )?,
        RunMode::Active => run_active(
            &prepared.run_config,
            &prepared.inputs,
            &prepared.oracle,
            &mut sink,
        )?,
        RunMode::Raw => run_raw_baseline(
            &prepared.run_config,
            &prepared.inputs,
            &prepared.oracle,
            &mut sink,
        )?,
    };
    log::info!(
        "cell {}: {} records, {} queries",
        cell.name(),
        records.len(),
        prepared.oracle.ledger().total
    );
    Ok(())
}
