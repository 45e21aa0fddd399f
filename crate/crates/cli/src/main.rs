//! `mimic` — train a substitute classifier against a label-only oracle with
//! crafted queries and active selection, then measure how well its
//! adversarial examples transfer.

mod config;
mod report;
mod server;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mimic_core::error::Error;
use mimic_core::pipeline::{run_active, run_passive, run_raw_baseline, CsvSink};

use config::{Config, RunMode};

#[derive(Parser)]
#[command(
    name = "mimic",
    version,
    about = "Query-efficient black-box substitute training"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the in-process oracle model on the configured dataset and persist
    /// its parameters
    TrainOracle {
        #[arg(long)]
        config: PathBuf,
        /// Output parameters file; defaults to the config's `params_path`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute one run and stream records to the output CSV
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Master seed override (net/train/selection/initial/raw seeds)
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV override
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Execute a strategies x attacks x seeds manifest in a worker pool
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Serve the in-process oracle over the JSON wire protocol
    ServeOracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:9009")]
        addr: String,
    },
    /// Aggregate run CSVs into per-strategy summary tables
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// Summary JSON path; defaults to `<dir>/summary.json`
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

enum Failure {
    /// Bad flags or config: exit 2.
    Config(Error),
    /// Mid-run failure (partial results persist): exit 1.
    Runtime(Error),
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::TrainOracle { config, out } => {
            let cfg = Config::load(&config).map_err(Failure::Config)?;
            let dataset = cfg.dataset().map_err(Failure::Config)?;
            let out = out
                .or_else(|| {
                    (!cfg.oracle.params_path.is_empty())
                        .then(|| PathBuf::from(&cfg.oracle.params_path))
                })
                .ok_or_else(|| {
                    Failure::Config(Error::usage(
                        "no output path: pass --out or set oracle.params_path",
                    ))
                })?;
            let net = cfg.oracle_net(&dataset).map_err(Failure::Runtime)?;
            mimic_core::net::save_network(&net, &out).map_err(Failure::Runtime)?;
            let correct = dataset
                .inputs
                .iter()
                .zip(&dataset.labels)
                .filter(|(x, &y)| net.predict(x).ok() == Some(y))
                .count();
            println!(
                "oracle trained: accuracy {:.4} on {} samples, saved to {}",
                correct as f64 / dataset.len() as f64,
                dataset.len(),
                out.display()
            );
            Ok(())
        }
        Cmd::Run {
            config,
            seed,
            output,
        } => {
            let mut cfg = Config::load(&config).map_err(Failure::Config)?;
            if let Some(seed) = seed {
                cfg.override_seed(seed);
            }
            if let Some(output) = output {
                cfg.run.output = output;
            }
            let prepared = cfg.prepare().map_err(Failure::Config)?;
            let file = std::fs::File::create(&prepared.output)
                .map_err(|e| Failure::Config(Error::Io(e)))?;
            let mut sink = CsvSink::new(file).map_err(Failure::Runtime)?;
            let records = match prepared.mode {
                RunMode::Passive => run_passive(
                    &prepared.run_config,
                    &prepared.inputs,
                    &prepared.oracle,
                    &mut sink,
                ),
                RunMode::Active => run_active(
                    &prepared.run_config,
                    &prepared.inputs,
                    &prepared.oracle,
                    &mut sink,
                ),
                RunMode::Raw => run_raw_baseline(
                    &prepared.run_config,
                    &prepared.inputs,
                    &prepared.oracle,
                    &mut sink,
                ),
            }
            .map_err(Failure::Runtime)?;
            let ledger = prepared.oracle.ledger();
            let last = records.last().expect("rho_max >= 1 yields records");
            println!(
                "run complete: {} records to {}; attack queries {} (evaluation used {} separate lookups); final acc {:.4} simi {:.4}",
                records.len(),
                prepared.output.display(),
                ledger.total,
                ledger.eval_total,
                last.acc,
                last.simi
            );
            Ok(())
        }
        Cmd::Sweep { manifest } => {
            let manifest = sweep::load_manifest(&manifest).map_err(Failure::Config)?;
            let failed = sweep::run_sweep(&manifest).map_err(Failure::Config)?;
            let total = manifest.attacks.len() * manifest.strategies.len() * manifest.seeds.len();
            println!(
                "sweep complete: {}/{total} cells ok under {}",
                total - failed,
                manifest.output_dir.display()
            );
            if failed > 0 {
                return Err(Failure::Runtime(Error::usage(format!(
                    "{failed} cells failed; see failures.json"
                ))));
            }
            Ok(())
        }
        Cmd::ServeOracle { config, addr } => {
            let cfg = Config::load(&config).map_err(Failure::Config)?;
            let dataset = cfg.dataset().map_err(Failure::Config)?;
            let net = cfg.oracle_net(&dataset).map_err(Failure::Runtime)?;
            let server = server::ReferenceServer::bind(&addr, net, &cfg.oracle.path)
                .map_err(Failure::Config)?;
            println!(
                "oracle serving on http://{}{}",
                server.local_addr(),
                cfg.oracle.path
            );
            server.run_forever().map_err(Failure::Runtime)
        }
        Cmd::Report { dir, json } => {
            let groups = report::aggregate(&dir).map_err(Failure::Config)?;
            print!("{}", report::render(&groups));
            let json_path = json.unwrap_or_else(|| dir.join("summary.json"));
            report::write_summary_json(&groups, &json_path).map_err(Failure::Runtime)?;
            println!("summary written to {}", json_path.display());
            Ok(())
        }
    }
}
