//! Substitute-training loops: passive doubling, active k-per-iteration, and
//! the doubling-then-reservoir baseline.
//!
//! Record numbering: itr 0 is the initial labeling/training pass; each later
//! itr crafts from the previous training set, queries the oracle on the
//! crafted (and possibly selected) batch, retrains from a fresh seeded
//! initialization, and reports metrics. Cumulative queries therefore follow
//! |S_0|·2^itr on the passive schedule and |S_0| + itr·k on the active one.

use std::collections::HashSet;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{craft_pool, AttackConfig};
use crate::error::{Error, Result};
use crate::metrics::{acc_metric, simi_metric};
use crate::net::{train, Network, NetworkSpec, TrainConfig};
use crate::num::{derive_seed, Real};
use crate::oracle::Oracle;
use crate::selector::{reservoir_sample, select, SelectionPlan};

/// Doubling-then-reservoir schedule parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSchedule {
    /// Last iteration that still doubles; iterations after it add a
    /// fixed-size reservoir-sampled batch.
    pub switch_at: usize,
    /// Reservoir batch size in the linear phase.
    pub batch: usize,
    pub seed: u64,
}

impl Default for RawSchedule {
    fn default() -> Self {
        RawSchedule {
            switch_at: 3,
            batch: 100,
            seed: 0,
        }
    }
}

/// Everything one run needs besides the oracle and the data.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Number of crafting/query iterations after the initial pass.
    pub rho_max: usize,
    pub attack: AttackConfig,
    pub plan: SelectionPlan,
    pub raw: RawSchedule,
    pub substitute: NetworkSpec,
    pub train: TrainConfig,
    /// Master seed for the per-iteration fresh initializations.
    pub net_seed: u64,
    /// Fast-gradient-sign magnitude of the Acc evaluation pass.
    pub eval_lambda: f64,
    /// Metrics are computed every `metric_cadence` iterations (itr 0 and the
    /// final iteration always report).
    pub metric_cadence: usize,
    /// Optional uniform subsample of the training set before crafting.
    pub pool_cap: Option<usize>,
    /// Record wall-clock time; off keeps CSV output byte-reproducible.
    pub timing: bool,
}

impl RunConfig {
    pub fn new(substitute: NetworkSpec) -> Self {
        RunConfig {
            rho_max: 8,
            attack: AttackConfig::default(),
            plan: SelectionPlan::default(),
            raw: RawSchedule::default(),
            substitute,
            train: TrainConfig::default(),
            net_seed: 0,
            eval_lambda: 0.2,
            metric_cadence: 1,
            pool_cap: None,
            timing: false,
        }
    }

    fn validate(&self, mode: Mode) -> Result<()> {
        if self.rho_max == 0 {
            return Err(Error::usage("rho_max must be >= 1"));
        }
        if self.metric_cadence == 0 {
            return Err(Error::usage("metric cadence must be >= 1"));
        }
        if self.eval_lambda <= 0.0 {
            return Err(Error::usage("eval lambda must be > 0"));
        }
        self.attack.validate()?;
        if matches!(mode, Mode::Active) {
            if self.plan.k == 0 {
                return Err(Error::usage("selection k must be >= 1"));
            }
            if let Some(cap) = self.pool_cap {
                if cap < self.plan.k {
                    return Err(Error::usage(format!(
                        "pool cap {cap} smaller than selection k {}",
                        self.plan.k
                    )));
                }
            }
        }
        if matches!(mode, Mode::Raw) && self.raw.batch == 0 {
            return Err(Error::usage("raw reservoir batch must be >= 1"));
        }
        Ok(())
    }
}

/// Data surfaces of one run.
#[derive(Clone, Debug)]
pub struct RunInputs<T> {
    /// The initial query set S_0.
    pub initial: Vec<Vec<T>>,
    /// Pre-collected labels for S_0; when present the initial pass costs no
    /// oracle queries.
    pub initial_labels: Option<Vec<usize>>,
    /// Held-out inputs for the Acc metric.
    pub eval_inputs: Vec<Vec<T>>,
    /// Dataset for the Simi metric (conventionally the whole dataset).
    pub simi_inputs: Vec<Vec<T>>,
}

/// One reported iteration, one CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub itr: usize,
    /// Cumulative attack queries after this iteration.
    pub query: u64,
    pub acc: f64,
    pub simi: f64,
    /// Training-set size after this iteration's union.
    pub set_size: usize,
    pub wall_ms: u64,
}

impl RunRecord {
    pub const CSV_HEADER: &'static str = "itr,query,acc,simi,set_size,wall_ms";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.itr, self.query, self.acc, self.simi, self.set_size, self.wall_ms
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 6 {
            return Err(Error::usage(format!(
                "expected 6 CSV fields, got {}",
                fields.len()
            )));
        }
        let bad = |what: &str| Error::usage(format!("unparseable {what} in CSV row"));
        Ok(RunRecord {
            itr: fields[0].parse().map_err(|_| bad("itr"))?,
            query: fields[1].parse().map_err(|_| bad("query"))?,
            acc: fields[2].parse().map_err(|_| bad("acc"))?,
            simi: fields[3].parse().map_err(|_| bad("simi"))?,
            set_size: fields[4].parse().map_err(|_| bad("set_size"))?,
            wall_ms: fields[5].parse().map_err(|_| bad("wall_ms"))?,
        })
    }
}

/// Streams records out as they are produced, so a mid-run failure keeps
/// everything already completed.
pub trait RecordSink {
    fn record(&mut self, record: &RunRecord) -> Result<()>;
}

/// Discards records (the run still returns them).
pub struct NullSink;

impl RecordSink for NullSink {
    fn record(&mut self, _record: &RunRecord) -> Result<()> {
        Ok(())
    }
}

/// CSV writer with the fixed header `itr,query,acc,simi,set_size,wall_ms`.
pub struct CsvSink<W: Write> {
    writer: W,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut writer: W) -> Result<Self> {
        writeln!(writer, "{}", RunRecord::CSV_HEADER)?;
        Ok(CsvSink { writer })
    }
}

impl<W: Write> RecordSink for CsvSink<W> {
    fn record(&mut self, record: &RunRecord) -> Result<()> {
        writeln!(self.writer, "{}", record.to_csv_row())?;
        self.writer.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Passive,
    Active,
    Raw,
}

/// Algorithm-1-style passive run: every iteration crafts from the whole
/// training set and queries all of it, doubling the set each time.
pub fn run_passive<T: Real>(
    cfg: &RunConfig,
    inputs: &RunInputs<T>,
    oracle: &Oracle<T>,
    sink: &mut dyn RecordSink,
) -> Result<Vec<RunRecord>> {
    run(cfg, inputs, oracle, sink, Mode::Passive)
}

/// Algorithm-2-style active run: each iteration crafts a pool, selects k
/// candidates by the configured strategy, and queries only those.
pub fn run_active<T: Real>(
    cfg: &RunConfig,
    inputs: &RunInputs<T>,
    oracle: &Oracle<T>,
    sink: &mut dyn RecordSink,
) -> Result<Vec<RunRecord>> {
    run(cfg, inputs, oracle, sink, Mode::Active)
}

/// Baseline schedule: doubling up to `raw.switch_at`, then fixed-size
/// reservoir-sampled batches (linear query growth).
pub fn run_raw_baseline<T: Real>(
    cfg: &RunConfig,
    inputs: &RunInputs<T>,
    oracle: &Oracle<T>,
    sink: &mut dyn RecordSink,
) -> Result<Vec<RunRecord>> {
    run(cfg, inputs, oracle, sink, Mode::Raw)
}

fn run<T: Real>(
    cfg: &RunConfig,
    inputs: &RunInputs<T>,
    oracle: &Oracle<T>,
    sink: &mut dyn RecordSink,
    mode: Mode,
) -> Result<Vec<RunRecord>> {
    cfg.validate(mode)?;
    if inputs.initial.is_empty() {
        return Err(Error::usage("initial set is empty"));
    }
    if inputs.eval_inputs.is_empty() || inputs.simi_inputs.is_empty() {
        return Err(Error::usage("metric sets must be nonempty"));
    }
    if mode == Mode::Active && cfg.plan.k > inputs.initial.len() {
        return Err(Error::usage(format!(
            "selection k {} exceeds the initial set size {}",
            cfg.plan.k,
            inputs.initial.len()
        )));
    }
    if let Some(labels) = &inputs.initial_labels {
        if labels.len() != inputs.initial.len() {
            return Err(Error::usage("initial label count mismatch"));
        }
        if labels.iter().any(|&y| y >= oracle.n_classes()) {
            return Err(Error::domain("initial label out of class range"));
        }
    }

    let started = Instant::now();
    let mut training_set: Vec<Vec<T>> = Vec::new();
    let mut labeled: Vec<(Vec<T>, usize)> = Vec::new();
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    let mut run_queries: u64 = 0;
    let mut records = Vec::new();

    // itr 0: label S_0 (counted unless pre-labeled) and train.
    oracle.start_iteration();
    let initial_labels = match &inputs.initial_labels {
        Some(labels) => labels.clone(),
        None => {
            run_queries += inputs.initial.len() as u64;
            oracle.query_batch(&inputs.initial)?
        }
    };
    for (x, &y) in inputs.initial.iter().zip(&initial_labels) {
        absorb(x, y, &mut training_set, &mut labeled, &mut seen);
    }
    let mut substitute = retrain(cfg, &labeled, 0)?;
    emit(
        cfg, inputs, oracle, sink, &mut records, &substitute, 0, run_queries,
        training_set.len(), &started,
    )?;

    for itr in 1..=cfg.rho_max {
        oracle.start_iteration();
        let sources: Vec<Vec<T>> = match cfg.pool_cap {
            Some(cap) if training_set.len() > cap => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.net_seed, 0x706f_6f6c ^ itr as u64));
                rand::seq::index::sample(&mut rng, training_set.len(), cap)
                    .iter()
                    .map(|i| training_set[i].clone())
                    .collect()
            }
            _ => training_set.clone(),
        };
        let pool = craft_pool(&substitute, &sources, &cfg.attack)?;
        let chosen: Vec<usize> = match mode {
            Mode::Passive => (0..pool.len()).collect(),
            Mode::Active => {
                let plan = SelectionPlan {
                    seed: derive_seed(cfg.plan.seed, itr as u64),
                    ..cfg.plan
                };
                select(&pool, &training_set, &substitute, &plan)?.indices
            }
            Mode::Raw => {
                if itr <= cfg.raw.switch_at {
                    (0..pool.len()).collect()
                } else {
                    let mut idx = reservoir_sample(
                        0..pool.len(),
                        cfg.raw.batch.min(pool.len()),
                        derive_seed(cfg.raw.seed, itr as u64),
                    );
                    idx.sort_unstable();
                    idx
                }
            }
        };
        let batch: Vec<Vec<T>> = chosen
            .iter()
            .map(|&i| pool.samples[i].x_adv.clone())
            .collect();
        let labels = oracle.query_batch(&batch)?;
        run_queries += batch.len() as u64;
        for (x, &y) in batch.iter().zip(&labels) {
            absorb(x, y, &mut training_set, &mut labeled, &mut seen);
        }
        substitute = retrain(cfg, &labeled, itr)?;
        if itr % cfg.metric_cadence == 0 || itr == cfg.rho_max {
            emit(
                cfg, inputs, oracle, sink, &mut records, &substitute, itr, run_queries,
                training_set.len(), &started,
            )?;
        }
    }
    Ok(records)
}

/// Union insert with byte-identical dedup.
fn absorb<T: Real>(
    x: &[T],
    y: usize,
    training_set: &mut Vec<Vec<T>>,
    labeled: &mut Vec<(Vec<T>, usize)>,
    seen: &mut HashSet<Vec<u8>>,
) {
    let mut key = Vec::with_capacity(x.len() * 8);
    for v in x {
        key.extend_from_slice(&v.f64().to_le_bytes());
    }
    if seen.insert(key) {
        training_set.push(x.to_vec());
        labeled.push((x.to_vec(), y));
    }
}

/// Fresh seeded initialization, then training; no warm starts between
/// iterations, so runs are order-independent given the seeds.
fn retrain<T: Real>(
    cfg: &RunConfig,
    labeled: &[(Vec<T>, usize)],
    itr: usize,
) -> Result<Network<T>> {
    let fresh = Network::seeded(cfg.substitute.clone(), derive_seed(cfg.net_seed, itr as u64));
    let train_cfg = TrainConfig {
        seed: derive_seed(cfg.train.seed, itr as u64),
        ..cfg.train
    };
    train(&fresh, labeled, &train_cfg)
}

#[allow(clippy::too_many_arguments)]
fn emit<T: Real>(
    cfg: &RunConfig,
    inputs: &RunInputs<T>,
    oracle: &Oracle<T>,
    sink: &mut dyn RecordSink,
    records: &mut Vec<RunRecord>,
    substitute: &Network<T>,
    itr: usize,
    run_queries: u64,
    set_size: usize,
    started: &Instant,
) -> Result<()> {
    let acc = acc_metric(substitute, oracle, &inputs.eval_inputs, cfg.eval_lambda)?;
    let simi = simi_metric(substitute, oracle, &inputs.simi_inputs)?;
    let record = RunRecord {
        itr,
        query: run_queries,
        acc,
        simi,
        set_size,
        wall_ms: if cfg.timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        },
    };
    sink.record(&record)?;
    records.push(record);
    Ok(())
}

#[cfg(test)]
mod tests;
