//! Label-only oracle access with strict query accounting.
//!
//! Every crafted-query label must be paid for; the ledger is the cost metric
//! the whole method optimizes. Evaluation passes (Acc/Simi) go through
//! [`Oracle::metric_query`], which never advances the attack ledger but is
//! counted separately.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Network;
use crate::num::Real;

/// Request body of the remote oracle protocol: one JSON object over HTTP POST.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireRequest {
    pub inputs: Vec<Vec<f64>>,
}

/// Response body of the remote oracle protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireResponse {
    pub labels: Vec<usize>,
}

/// Point-in-time view of the query accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    /// Total attack queries; always the sum of `per_iteration`.
    pub total: u64,
    /// Attack queries per pipeline iteration.
    pub per_iteration: Vec<u64>,
    /// Evaluation-only queries (Acc/Simi passes), never in `total`.
    pub eval_total: u64,
}

#[derive(Default)]
struct LedgerState {
    total: u64,
    per_iteration: Vec<u64>,
    eval_total: u64,
}

impl LedgerState {
    fn add(&mut self, n: u64) {
        self.total += n;
        if self.per_iteration.is_empty() {
            self.per_iteration.push(0);
        }
        *self.per_iteration.last_mut().expect("nonempty") += n;
    }
}

/// Something that can label inputs: the in-process model or a remote endpoint.
pub trait LabelBackend<T>: Send + Sync {
    fn input_dim(&self) -> usize;
    fn n_classes(&self) -> usize;
    /// Labels every input. On transport failure the error carries the labels
    /// of the completed prefix, in request order.
    fn labels(&self, inputs: &[Vec<T>]) -> Result<Vec<usize>>;
}

struct InProcessBackend<T> {
    net: Network<T>,
}

impl<T: Real> LabelBackend<T> for InProcessBackend<T> {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn n_classes(&self) -> usize {
        self.net.n_classes()
    }

    fn labels(&self, inputs: &[Vec<T>]) -> Result<Vec<usize>> {
        inputs.iter().map(|x| self.net.predict(x)).collect()
    }
}

/// Configuration of a remote oracle endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:9009`.
    pub url: String,
    /// Request path, default `/query`.
    pub path: String,
    pub input_dim: usize,
    pub n_classes: usize,
    pub timeout_ms: u64,
    pub retries: u32,
    /// Inputs per HTTP request; failures lose at most one chunk.
    pub chunk_size: usize,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>, input_dim: usize, n_classes: usize) -> Self {
        RemoteConfig {
            url: url.into(),
            path: "/query".to_owned(),
            input_dim,
            n_classes,
            timeout_ms: 5000,
            retries: 1,
            chunk_size: 64,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}{}", self.url.trim_end_matches('/'), self.path)
    }
}

struct RemoteBackend {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    fn new(cfg: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        RemoteBackend { cfg, agent }
    }

    fn post_chunk(&self, chunk: &[Vec<f64>]) -> std::result::Result<Vec<usize>, String> {
        let req = WireRequest {
            inputs: chunk.to_vec(),
        };
        let mut last_err = String::new();
        for _ in 0..=self.cfg.retries {
            match self
                .agent
                .post(&self.cfg.endpoint())
                .send_json(&req)
            {
                Ok(mut resp) => match resp.body_mut().read_json::<WireResponse>() {
                    Ok(body) => {
                        if body.labels.len() != chunk.len() {
                            return Err(format!(
                                "protocol violation: {} labels for {} inputs",
                                body.labels.len(),
                                chunk.len()
                            ));
                        }
                        if let Some(&bad) =
                            body.labels.iter().find(|&&l| l >= self.cfg.n_classes)
                        {
                            return Err(format!(
                                "protocol violation: label {bad} out of range"
                            ));
                        }
                        return Ok(body.labels);
                    }
                    Err(e) => last_err = format!("bad response body: {e}"),
                },
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(last_err)
    }
}

impl<T: Real> LabelBackend<T> for RemoteBackend {
    fn input_dim(&self) -> usize {
        self.cfg.input_dim
    }

    fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    fn labels(&self, inputs: &[Vec<T>]) -> Result<Vec<usize>> {
        let as_f64: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| x.iter().map(|v| v.f64()).collect())
            .collect();
        let mut labels = Vec::with_capacity(inputs.len());
        for chunk in as_f64.chunks(self.cfg.chunk_size.max(1)) {
            match self.post_chunk(chunk) {
                Ok(mut got) => labels.append(&mut got),
                Err(message) => {
                    return Err(Error::Transport {
                        completed: labels,
                        attempted: inputs.len(),
                        message,
                    })
                }
            }
        }
        Ok(labels)
    }
}

/// Handle to the target oracle: a backend plus the query ledger and an
/// optional exact-byte response cache (off by default).
pub struct Oracle<T> {
    backend: Box<dyn LabelBackend<T>>,
    ledger: Mutex<LedgerState>,
    cache: Option<Mutex<HashMap<Vec<u8>, usize>>>,
}

impl<T: Real> Oracle<T> {
    pub fn in_process(net: Network<T>) -> Self {
        Oracle::from_backend(Box::new(InProcessBackend { net }))
    }

    pub fn remote(cfg: RemoteConfig) -> Self {
        Oracle::from_backend(Box::new(RemoteBackend::new(cfg)))
    }

    pub fn from_backend(backend: Box<dyn LabelBackend<T>>) -> Self {
        Oracle {
            backend,
            ledger: Mutex::new(LedgerState::default()),
            cache: None,
        }
    }

    /// Enables exact-byte caching: repeat queries stop costing.
    pub fn with_cache(mut self) -> Self {
        self.cache = Some(Mutex::new(HashMap::new()));
        self
    }

    pub fn input_dim(&self) -> usize {
        self.backend.input_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.backend.n_classes()
    }

    /// Opens a new per-iteration bucket in the ledger.
    pub fn start_iteration(&self) {
        self.ledger
            .lock()
            .expect("ledger lock")
            .per_iteration
            .push(0);
    }

    pub fn ledger(&self) -> LedgerSnapshot {
        let s = self.ledger.lock().expect("ledger lock");
        LedgerSnapshot {
            total: s.total,
            per_iteration: s.per_iteration.clone(),
            eval_total: s.eval_total,
        }
    }

    fn check_dims(&self, xs: &[Vec<T>]) -> Result<()> {
        let dim = self.input_dim();
        for x in xs {
            if x.len() != dim {
                return Err(Error::usage(format!(
                    "oracle expects dimension {dim}, got {}",
                    x.len()
                )));
            }
        }
        Ok(())
    }

    /// Labels one input, paying one query on a cache miss.
    pub fn query(&self, x: &[T]) -> Result<usize> {
        let labels = self.query_batch(std::slice::from_ref(&x.to_vec()))?;
        Ok(labels[0])
    }

    /// Labels a batch. Ledger increment = number of backend calls made
    /// (batch size without a cache, cache misses with one). On transport
    /// failure only completed queries are counted.
    pub fn query_batch(&self, xs: &[Vec<T>]) -> Result<Vec<usize>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        self.check_dims(xs)?;
        match &self.cache {
            None => {
                let result = self.backend.labels(xs);
                self.settle(result, xs.len())
            }
            Some(cache) => {
                let mut out: Vec<Option<usize>> = vec![None; xs.len()];
                let mut miss_idx = Vec::new();
                let mut miss_inputs = Vec::new();
                {
                    let cache = cache.lock().expect("cache lock");
                    for (i, x) in xs.iter().enumerate() {
                        match cache.get(&key(x)) {
                            Some(&l) => out[i] = Some(l),
                            None => {
                                miss_idx.push(i);
                                miss_inputs.push(x.clone());
                            }
                        }
                    }
                }
                if !miss_inputs.is_empty() {
                    let result = self.backend.labels(&miss_inputs);
                    let labels = self.settle(result, miss_inputs.len())?;
                    let mut cache = cache.lock().expect("cache lock");
                    for ((&i, x), &l) in miss_idx.iter().zip(&miss_inputs).zip(&labels) {
                        cache.insert(key(x), l);
                        out[i] = Some(l);
                    }
                }
                Ok(out.into_iter().map(|l| l.expect("filled")).collect())
            }
        }
    }

    /// Evaluation-only labeling: identical labels, attack ledger untouched,
    /// the separate evaluation counter advances instead.
    pub fn metric_query(&self, xs: &[Vec<T>]) -> Result<Vec<usize>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        self.check_dims(xs)?;
        let result = self.backend.labels(xs);
        let counted = match &result {
            Ok(labels) => labels.len() as u64,
            Err(Error::Transport { completed, .. }) => completed.len() as u64,
            Err(_) => 0,
        };
        self.ledger.lock().expect("ledger lock").eval_total += counted;
        result
    }

    /// Books completed queries into the ledger, for both outcomes.
    fn settle(&self, result: Result<Vec<usize>>, requested: usize) -> Result<Vec<usize>> {
        let counted = match &result {
            Ok(_) => requested as u64,
            Err(Error::Transport { completed, .. }) => completed.len() as u64,
            Err(_) => 0,
        };
        if counted > 0 {
            self.ledger.lock().expect("ledger lock").add(counted);
        }
        result
    }
}

/// Exact-byte cache key; f32 inputs widen losslessly.
fn key<T: Real>(x: &[T]) -> Vec<u8> {
    let mut k = Vec::with_capacity(x.len() * 8);
    for v in x {
        k.extend_from_slice(&v.f64().to_le_bytes());
    }
    k
}
