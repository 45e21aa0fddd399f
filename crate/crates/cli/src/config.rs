//! TOML configuration: flat keys in sections, every hyperparameter surfaced.
//!
//! `Config::load` parses and validates; `prepare` turns a config into the
//! concrete run pieces (dataset splits, oracle, run config). All randomness
//! flows from the named seeds here — nothing reads ambient entropy.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mimic_core::attacks::{AttackConfig, AttackMethod, IgsAlpha};
use mimic_core::data::{gen_blobs, gen_moons, initial_set, load_idx, split_eval, Dataset};
use mimic_core::error::{Error, Result};
use mimic_core::net::{
    load_network, save_network, train, Activation, Network, NetworkSpec, Optimizer, TrainConfig,
};
use mimic_core::num::derive_seed;
use mimic_core::oracle::RemoteConfig;
use mimic_core::pipeline::{RawSchedule, RunConfig, RunInputs};
use mimic_core::selector::{SelectionPlan, Strategy};
use mimic_core::{Network64, Oracle64};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetSection,
    pub oracle: OracleSection,
    pub substitute: SubstituteSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: String,
    #[serde(default = "d_n_classes")]
    pub n_classes: usize,
    #[serde(default = "d_n_per_class")]
    pub n_per_class: usize,
    #[serde(default = "d_n_features")]
    pub n_features: usize,
    #[serde(default = "d_spread")]
    pub spread: f64,
    #[serde(default = "d_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    #[serde(default = "d_eval_fraction")]
    pub eval_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

fn d_n_classes() -> usize {
    10
}
fn d_n_per_class() -> usize {
    100
}
fn d_n_features() -> usize {
    16
}
fn d_spread() -> f64 {
    0.12
}
fn d_noise() -> f64 {
    0.05
}
fn d_eval_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// `mlp` (in-process) or `remote`.
    pub kind: String,
    #[serde(default = "d_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "d_activation")]
    pub activation: String,
    #[serde(default = "d_oracle_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_oracle_init_seed")]
    pub init_seed: u64,
    #[serde(default = "d_oracle_train_seed")]
    pub train_seed: u64,
    /// Load parameters from here when the file exists; train and save
    /// otherwise. Empty trains in memory.
    #[serde(default)]
    pub params_path: String,
    #[serde(default)]
    pub cache: bool,
    pub url: Option<String>,
    #[serde(default = "d_path")]
    pub path: String,
    #[serde(default = "d_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "d_retries")]
    pub retries: u32,
    #[serde(default = "d_chunk")]
    pub chunk_size: usize,
}

fn d_hidden() -> Vec<usize> {
    vec![24]
}
fn d_activation() -> String {
    "tanh".to_owned()
}
fn d_oracle_epochs() -> usize {
    80
}
fn d_batch() -> usize {
    32
}
fn d_lr() -> f64 {
    0.005
}
fn d_oracle_init_seed() -> u64 {
    41
}
fn d_oracle_train_seed() -> u64 {
    42
}
fn d_path() -> String {
    "/query".to_owned()
}
fn d_timeout() -> u64 {
    5000
}
fn d_retries() -> u32 {
    1
}
fn d_chunk() -> usize {
    64
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstituteSection {
    #[serde(default = "d_sub_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "d_activation")]
    pub activation: String,
}

fn d_sub_hidden() -> Vec<usize> {
    vec![16]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "d_train_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_optimizer")]
    pub optimizer: String,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn d_train_epochs() -> usize {
    40
}
fn d_optimizer() -> String {
    "adam".to_owned()
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: d_train_epochs(),
            batch_size: d_batch(),
            optimizer: d_optimizer(),
            learning_rate: d_lr(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default = "d_method")]
    pub method: String,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_lambda")]
    pub epsilon: f64,
    /// Step-count reading of the iterative-sign alpha.
    pub alpha_steps: Option<usize>,
    /// Per-step-size reading; mutually exclusive with `alpha_steps`.
    pub alpha_step_size: Option<f64>,
    #[serde(default = "d_iters")]
    pub iters: usize,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "d_c")]
    pub c: f64,
    #[serde(default = "d_cw_step")]
    pub cw_step: f64,
    #[serde(default = "d_theta")]
    pub theta: f64,
    #[serde(default = "d_max_features")]
    pub max_features: usize,
    #[serde(default = "d_eta")]
    pub eta: f64,
    pub jsma_l2_cap: Option<f64>,
}

fn d_method() -> String {
    "fgsm".to_owned()
}
fn d_lambda() -> f64 {
    0.2
}
fn d_iters() -> usize {
    100
}
fn d_c() -> f64 {
    1.0
}
fn d_cw_step() -> f64 {
    0.005
}
fn d_theta() -> f64 {
    0.1
}
fn d_max_features() -> usize {
    20
}
fn d_eta() -> f64 {
    0.02
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            method: d_method(),
            lambda: d_lambda(),
            epsilon: d_lambda(),
            alpha_steps: None,
            alpha_step_size: None,
            iters: d_iters(),
            kappa: 0.0,
            c: d_c(),
            cw_step: d_cw_step(),
            theta: d_theta(),
            max_features: d_max_features(),
            eta: d_eta(),
            jsma_l2_cap: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    #[serde(default = "d_strategy")]
    pub strategy: String,
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn d_strategy() -> String {
    "rs".to_owned()
}
fn d_k() -> usize {
    10
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection {
            strategy: d_strategy(),
            k: d_k(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "d_mode")]
    pub mode: String,
    #[serde(default = "d_rho_max")]
    pub rho_max: usize,
    #[serde(default = "d_initial_size")]
    pub initial_size: usize,
    #[serde(default = "d_true")]
    pub per_class: bool,
    /// `oracle` (counted) or `provided` (pre-labeled, uncounted).
    #[serde(default = "d_initial_labels")]
    pub initial_labels: String,
    #[serde(default)]
    pub initial_seed: u64,
    #[serde(default = "d_raw_switch")]
    pub raw_switch_at: usize,
    #[serde(default = "d_raw_batch")]
    pub raw_batch: usize,
    #[serde(default)]
    pub raw_seed: u64,
    #[serde(default = "d_cadence")]
    pub metric_cadence: usize,
    #[serde(default = "d_lambda")]
    pub eval_lambda: f64,
    /// 0 disables the cap.
    #[serde(default)]
    pub pool_cap: usize,
    #[serde(default)]
    pub net_seed: u64,
    #[serde(default)]
    pub timing: bool,
    #[serde(default = "d_output")]
    pub output: PathBuf,
}

fn d_mode() -> String {
    "active".to_owned()
}
fn d_rho_max() -> usize {
    8
}
fn d_initial_size() -> usize {
    100
}
fn d_true() -> bool {
    true
}
fn d_initial_labels() -> String {
    "oracle".to_owned()
}
fn d_raw_switch() -> usize {
    3
}
fn d_raw_batch() -> usize {
    100
}
fn d_cadence() -> usize {
    1
}
fn d_output() -> PathBuf {
    PathBuf::from("run.csv")
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: d_mode(),
            rho_max: d_rho_max(),
            initial_size: d_initial_size(),
            per_class: true,
            initial_labels: d_initial_labels(),
            initial_seed: 0,
            raw_switch_at: d_raw_switch(),
            raw_batch: d_raw_batch(),
            raw_seed: 0,
            metric_cadence: d_cadence(),
            eval_lambda: d_lambda(),
            pool_cap: 0,
            net_seed: 0,
            timing: false,
            output: d_output(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Passive,
    Active,
    Raw,
}

/// A config turned into runnable pieces.
pub struct Prepared {
    pub run_config: RunConfig,
    pub inputs: RunInputs<f64>,
    pub oracle: Oracle64,
    pub mode: RunMode,
    pub output: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::usage(format!("cannot read config {}: {e}", path.display())))?;
        let config: Config =
            toml::from_str(&text).map_err(|e| Error::usage(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.parse_mode()?;
        self.attack_config()?;
        Strategy::parse(&self.selection.strategy)?;
        parse_activation(&self.oracle.activation)?;
        parse_activation(&self.substitute.activation)?;
        match self.dataset.source.as_str() {
            "blobs" | "moons" => {}
            "idx" => {
                if self.dataset.images.is_none() || self.dataset.labels.is_none() {
                    return Err(Error::usage("idx source needs `images` and `labels` paths"));
                }
            }
            other => return Err(Error::usage(format!("unknown dataset source `{other}`"))),
        }
        match self.oracle.kind.as_str() {
            "mlp" => {}
            "remote" => {
                if self.oracle.url.is_none() {
                    return Err(Error::usage("remote oracle needs `url`"));
                }
            }
            other => return Err(Error::usage(format!("unknown oracle kind `{other}`"))),
        }
        match self.run.initial_labels.as_str() {
            "oracle" | "provided" => {}
            other => {
                return Err(Error::usage(format!(
                    "initial_labels must be `oracle` or `provided`, got `{other}`"
                )))
            }
        }
        if self.run.per_class && self.run.initial_size % self.dataset.n_classes != 0 {
            return Err(Error::usage(format!(
                "initial_size {} not divisible by {} classes",
                self.run.initial_size, self.dataset.n_classes
            )));
        }
        Ok(())
    }

    pub fn parse_mode(&self) -> Result<RunMode> {
        match self.run.mode.as_str() {
            "passive" => Ok(RunMode::Passive),
            "active" => Ok(RunMode::Active),
            "raw" => Ok(RunMode::Raw),
            other => Err(Error::usage(format!("unknown run mode `{other}`"))),
        }
    }

    /// Overrides every run-level seed from one master value; dataset and
    /// oracle seeds stay put so sweep cells share the same target.
    pub fn override_seed(&mut self, seed: u64) {
        self.run.net_seed = seed;
        self.train.seed = derive_seed(seed, 101);
        self.selection.seed = derive_seed(seed, 102);
        self.run.initial_seed = derive_seed(seed, 103);
        self.run.raw_seed = derive_seed(seed, 104);
    }

    pub fn dataset(&self) -> Result<Dataset<f64>> {
        match self.dataset.source.as_str() {
            "blobs" => gen_blobs(
                self.dataset.n_classes,
                self.dataset.n_per_class,
                self.dataset.n_features,
                self.dataset.spread,
                self.dataset.seed,
            ),
            "moons" => gen_moons(self.dataset.n_per_class, self.dataset.noise, self.dataset.seed),
            "idx" => load_idx(
                self.dataset.images.as_ref().expect("validated"),
                self.dataset.labels.as_ref().expect("validated"),
            ),
            other => Err(Error::usage(format!("unknown dataset source `{other}`"))),
        }
    }

    pub fn attack_config(&self) -> Result<AttackConfig> {
        let igs_alpha = match (self.attack.alpha_steps, self.attack.alpha_step_size) {
            (Some(_), Some(_)) => {
                return Err(Error::usage(
                    "alpha_steps and alpha_step_size are mutually exclusive",
                ))
            }
            (None, Some(s)) => IgsAlpha::StepSize(s),
            (Some(n), None) => IgsAlpha::Steps(n),
            (None, None) => IgsAlpha::Steps(10),
        };
        let cfg = AttackConfig {
            method: AttackMethod::parse(&self.attack.method)?,
            lambda: self.attack.lambda,
            epsilon: self.attack.epsilon,
            igs_alpha,
            iters: self.attack.iters,
            kappa: self.attack.kappa,
            c: self.attack.c,
            cw_step: self.attack.cw_step,
            theta: self.attack.theta,
            max_features: self.attack.max_features,
            eta: self.attack.eta,
            jsma_l2_cap: self.attack.jsma_l2_cap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn optimizer(&self) -> Result<Optimizer> {
        match self.train.optimizer.as_str() {
            "adam" => Ok(Optimizer::adam(self.train.learning_rate)),
            "sgd" => Ok(Optimizer::Sgd {
                lr: self.train.learning_rate,
            }),
            other => Err(Error::usage(format!("unknown optimizer `{other}`"))),
        }
    }

    fn substitute_spec(&self, n_features: usize, n_classes: usize) -> Result<NetworkSpec> {
        let mut sizes = vec![n_features];
        sizes.extend(&self.substitute.hidden);
        sizes.push(n_classes);
        NetworkSpec::new(sizes, parse_activation(&self.substitute.activation)?)
    }

    /// Trains the in-process oracle model, or loads it from `params_path`
    /// when that file already exists.
    pub fn oracle_net(&self, dataset: &Dataset<f64>) -> Result<Network64> {
        let path = Path::new(&self.oracle.params_path);
        if !self.oracle.params_path.is_empty() && path.exists() {
            return load_network(path);
        }
        let mut sizes = vec![dataset.n_features];
        sizes.extend(&self.oracle.hidden);
        sizes.push(dataset.n_classes);
        let spec = NetworkSpec::new(sizes, parse_activation(&self.oracle.activation)?)?;
        let data: Vec<(Vec<f64>, usize)> = dataset
            .inputs
            .iter()
            .cloned()
            .zip(dataset.labels.iter().copied())
            .collect();
        let net = train(
            &Network::seeded(spec, self.oracle.init_seed),
            &data,
            &TrainConfig {
                epochs: self.oracle.epochs,
                batch_size: self.oracle.batch_size,
                optimizer: Optimizer::adam(self.oracle.learning_rate),
                seed: self.oracle.train_seed,
            },
        )?;
        if !self.oracle.params_path.is_empty() {
            save_network(&net, path)?;
        }
        Ok(net)
    }

    pub fn oracle(&self, dataset: &Dataset<f64>) -> Result<Oracle64> {
        let oracle = match self.oracle.kind.as_str() {
            "mlp" => Oracle64::in_process(self.oracle_net(dataset)?),
            "remote" => {
                let url = self.oracle.url.clone().expect("validated");
                Oracle64::remote(RemoteConfig {
                    url,
                    path: self.oracle.path.clone(),
                    input_dim: dataset.n_features,
                    n_classes: dataset.n_classes,
                    timeout_ms: self.oracle.timeout_ms,
                    retries: self.oracle.retries,
                    chunk_size: self.oracle.chunk_size,
                })
            }
            other => return Err(Error::usage(format!("unknown oracle kind `{other}`"))),
        };
        Ok(if self.oracle.cache {
            oracle.with_cache()
        } else {
            oracle
        })
    }

    /// Builds everything one `run` needs.
    pub fn prepare(&self) -> Result<Prepared> {
        self.prepare_inner(None)
    }

    /// Same, but with an externally built oracle (sweeps train the in-process
    /// model once and hand each cell its own clone).
    pub fn prepare_with_oracle(&self, oracle: Oracle64) -> Result<Prepared> {
        self.prepare_inner(Some(oracle))
    }

    fn prepare_inner(&self, oracle: Option<Oracle64>) -> Result<Prepared> {
        let mode = self.parse_mode()?;
        let dataset = self.dataset()?;
        let (train_pool, eval) = split_eval(&dataset, self.dataset.eval_fraction, self.dataset.split_seed)?;
        let initial = initial_set(
            &train_pool,
            self.run.initial_size,
            self.run.per_class,
            self.run.initial_seed,
        )?;
        let initial_labels = if self.run.initial_labels == "provided" {
            // The adversary's pre-collected labels: ground truth of the
            // matching pool rows.
            let mut labels = Vec::with_capacity(initial.len());
            for x in &initial {
                let at = train_pool
                    .inputs
                    .iter()
                    .position(|p| p == x)
                    .expect("initial set drawn from the pool");
                labels.push(train_pool.labels[at]);
            }
            Some(labels)
        } else {
            None
        };
        let oracle = match oracle {
            Some(oracle) => oracle,
            None => self.oracle(&dataset)?,
        };
        let run_config = RunConfig {
            rho_max: self.run.rho_max,
            attack: self.attack_config()?,
            plan: SelectionPlan {
                strategy: Strategy::parse(&self.selection.strategy)?,
                k: self.selection.k,
                seed: self.selection.seed,
            },
            raw: RawSchedule {
                switch_at: self.run.raw_switch_at,
                batch: self.run.raw_batch,
                seed: self.run.raw_seed,
            },
            substitute: self.substitute_spec(dataset.n_features, dataset.n_classes)?,
            train: TrainConfig {
                epochs: self.train.epochs,
                batch_size: self.train.batch_size,
                optimizer: self.optimizer()?,
                seed: self.train.seed,
            },
            net_seed: self.run.net_seed,
            eval_lambda: self.run.eval_lambda,
            metric_cadence: self.run.metric_cadence,
            pool_cap: (self.run.pool_cap > 0).then_some(self.run.pool_cap),
            timing: self.run.timing,
        };
        Ok(Prepared {
            run_config,
            inputs: RunInputs {
                initial,
                initial_labels,
                eval_inputs: eval.inputs,
                simi_inputs: dataset.inputs.clone(),
            },
            oracle,
            mode,
            output: self.run.output.clone(),
        })
    }
}

pub fn parse_activation(name: &str) -> Result<Activation> {
    match name {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(Error::usage(format!("unknown activation `{other}`"))),
    }
}
