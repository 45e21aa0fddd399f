use super::*;
use crate::attacks::AttackMethod;
use crate::data::gen_blobs;
use crate::net::{Activation, Optimizer};
use crate::oracle::LabelBackend;
use crate::selector::Strategy;

struct VecSink(Vec<RunRecord>);

impl RecordSink for VecSink {
    fn record(&mut self, record: &RunRecord) -> Result<()> {
        self.0.push(record.clone());
        Ok(())
    }
}

fn fixture_oracle_net(n_classes: usize, n_features: usize) -> Network<f64> {
    let ds = gen_blobs::<f64>(n_classes, 40, n_features, 0.1, 77).unwrap();
    let spec = NetworkSpec::new(vec![n_features, 6, n_classes], Activation::Tanh).unwrap();
    let data: Vec<(Vec<f64>, usize)> = ds
        .inputs
        .iter()
        .cloned()
        .zip(ds.labels.iter().copied())
        .collect();
    train(
        &Network::seeded(spec, 50),
        &data,
        &TrainConfig {
            epochs: 30,
            batch_size: 32,
            optimizer: Optimizer::adam(0.005),
            seed: 2,
        },
    )
    .unwrap()
}

/// Small fixture: blobs, a briefly-trained oracle, a quick training config.
fn fixture(
    n_classes: usize,
    n_features: usize,
    initial: usize,
) -> (RunConfig, RunInputs<f64>, Oracle<f64>) {
    let ds = gen_blobs::<f64>(n_classes, 40, n_features, 0.1, 77).unwrap();
    let oracle = Oracle::in_process(fixture_oracle_net(n_classes, n_features));
    let substitute =
        NetworkSpec::new(vec![n_features, 5, n_classes], Activation::Tanh).unwrap();
    let mut cfg = RunConfig::new(substitute);
    cfg.rho_max = 3;
    cfg.attack = AttackConfig::with_method(AttackMethod::Fgsm);
    cfg.train = TrainConfig {
        epochs: 2,
        batch_size: 16,
        optimizer: Optimizer::adam(0.005),
        seed: 1,
    };
    let inputs = RunInputs {
        initial: ds.inputs[..initial].to_vec(),
        initial_labels: None,
        eval_inputs: ds.inputs[initial..initial + 20].to_vec(),
        simi_inputs: ds.inputs[initial..initial + 40].to_vec(),
    };
    (cfg, inputs, oracle)
}

#[test]
fn passive_schedule_doubles_queries() {
    let (mut cfg, inputs, oracle) = fixture(2, 4, 20);
    cfg.rho_max = 3;
    let records = run_passive(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    let queries: Vec<u64> = records.iter().map(|r| r.query).collect();
    assert_eq!(queries, vec![20, 40, 80, 160]);
    assert_eq!(oracle.ledger().total, 160);
    assert_eq!(oracle.ledger().per_iteration, vec![20, 20, 40, 80]);
}

#[test]
fn passive_single_iteration_base_case() {
    let (mut cfg, inputs, oracle) = fixture(2, 4, 20);
    cfg.rho_max = 1;
    let records = run_passive(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    assert_eq!(records[0].query, 20);
    assert_eq!(records.len(), 2);
}

#[test]
fn passive_set_size_doubles_without_collisions() {
    let (mut cfg, inputs, oracle) = fixture(3, 6, 30);
    // Deepfool moves continuously; byte collisions are measure-zero here.
    cfg.attack = AttackConfig::with_method(AttackMethod::Deepfool);
    cfg.rho_max = 3;
    let records = run_passive(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    let sizes: Vec<usize> = records.iter().map(|r| r.set_size).collect();
    assert_eq!(sizes, vec![30, 60, 120, 240]);
}

#[test]
fn active_schedule_accounts_initial_plus_k_per_iteration() {
    let (mut cfg, inputs, oracle) = fixture(2, 4, 20);
    cfg.rho_max = 4;
    cfg.plan = SelectionPlan {
        strategy: Strategy::MaxEntropyDiversity,
        k: 5,
        seed: 9,
    };
    let records = run_active(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    let queries: Vec<u64> = records.iter().map(|r| r.query).collect();
    assert_eq!(queries, vec![20, 25, 30, 35, 40]);
    assert_eq!(oracle.ledger().total, 40);
}

#[test]
fn active_with_full_k_random_select_degenerates_to_doubling() {
    let (mut cfg, inputs, oracle) = fixture(2, 4, 10);
    cfg.rho_max = 1;
    cfg.plan = SelectionPlan {
        strategy: Strategy::Random,
        k: 10,
        seed: 3,
    };
    let records = run_active(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    assert_eq!(records.last().unwrap().query, 20);
}

#[test]
fn raw_baseline_reproduces_the_derived_schedule() {
    // sigma=3, batch=100, |S_0|=100, 6 iterations:
    // 100, 200, 400, 800, 900, 1000, 1100.
    let ds = gen_blobs::<f64>(2, 80, 4, 0.1, 5).unwrap();
    let oracle_spec = NetworkSpec::new(vec![4, 5, 2], Activation::Tanh).unwrap();
    let oracle = Oracle::in_process(Network::seeded(oracle_spec, 2));
    let substitute = NetworkSpec::new(vec![4, 4, 2], Activation::Tanh).unwrap();
    let mut cfg = RunConfig::new(substitute);
    cfg.rho_max = 6;
    cfg.raw = RawSchedule {
        switch_at: 3,
        batch: 100,
        seed: 4,
    };
    cfg.attack = AttackConfig::with_method(AttackMethod::Fgsm);
    cfg.train = TrainConfig {
        epochs: 1,
        batch_size: 32,
        optimizer: Optimizer::adam(0.005),
        seed: 1,
    };
    let inputs = RunInputs {
        initial: ds.inputs[..100].to_vec(),
        initial_labels: None,
        eval_inputs: ds.inputs[100..120].to_vec(),
        simi_inputs: ds.inputs[100..160].to_vec(),
    };
    let records = run_raw_baseline(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    let queries: Vec<u64> = records.iter().map(|r| r.query).collect();
    assert_eq!(queries, vec![100, 200, 400, 800, 900, 1000, 1100]);
    // Linear growth in the reservoir phase.
    assert!(queries.windows(2).skip(4).all(|w| w[1] - w[0] == 100));
}

#[test]
fn raw_with_switch_at_rho_max_equals_passive() {
    let (mut cfg, inputs, oracle) = fixture(2, 4, 16);
    cfg.rho_max = 3;
    cfg.raw = RawSchedule {
        switch_at: 3,
        batch: 4,
        seed: 0,
    };
    let raw_records = run_raw_baseline(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    let oracle2 = Oracle::in_process(fixture_oracle_net(2, 4));
    let passive_records = run_passive(&cfg, &inputs, &oracle2, &mut NullSink).unwrap();
    let rq: Vec<u64> = raw_records.iter().map(|r| r.query).collect();
    let pq: Vec<u64> = passive_records.iter().map(|r| r.query).collect();
    assert_eq!(rq, pq);
}

#[test]
fn runs_are_deterministic() {
    let (mut cfg, inputs, _) = fixture(3, 5, 15);
    cfg.plan = SelectionPlan {
        strategy: Strategy::MarginDiversity,
        k: 5,
        seed: 21,
    };
    let make_oracle = || Oracle::in_process(fixture_oracle_net(3, 5));
    let a = run_active(&cfg, &inputs, &make_oracle(), &mut NullSink).unwrap();
    let b = run_active(&cfg, &inputs, &make_oracle(), &mut NullSink).unwrap();
    assert_eq!(a, b);
}

#[test]
fn byte_identical_initial_duplicates_are_absorbed_once() {
    let (cfg, mut inputs, oracle) = fixture(2, 4, 10);
    inputs.initial.push(inputs.initial[0].clone());
    inputs.initial.push(inputs.initial[1].clone());
    let records = run_passive(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    // 12 labels paid, but the set keeps 10 distinct points.
    assert_eq!(records[0].query, 12);
    assert_eq!(records[0].set_size, 10);
}

#[test]
fn pre_labeled_initial_set_costs_no_queries() {
    let (cfg, mut inputs, oracle) = fixture(2, 4, 12);
    let labels = oracle.metric_query(&inputs.initial).unwrap();
    inputs.initial_labels = Some(labels);
    let attack_before = oracle.ledger().total;
    let records = run_passive(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    assert_eq!(attack_before, 0);
    assert_eq!(records[0].query, 0);
    // Later iterations still pay.
    assert!(records.last().unwrap().query > 0);
}

#[test]
fn metric_cadence_skips_but_keeps_endpoints() {
    let (mut cfg, inputs, oracle) = fixture(2, 4, 10);
    cfg.rho_max = 5;
    cfg.metric_cadence = 2;
    let records = run_passive(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    let itrs: Vec<usize> = records.iter().map(|r| r.itr).collect();
    assert_eq!(itrs, vec![0, 2, 4, 5]);
    let queries: Vec<u64> = records.iter().map(|r| r.query).collect();
    assert!(queries.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn pool_cap_limits_crafting_sources() {
    let (mut cfg, inputs, oracle) = fixture(2, 4, 20);
    cfg.rho_max = 2;
    cfg.pool_cap = Some(8);
    let records = run_passive(&cfg, &inputs, &oracle, &mut NullSink).unwrap();
    let queries: Vec<u64> = records.iter().map(|r| r.query).collect();
    // Every post-initial iteration crafts from at most 8 sources.
    assert_eq!(queries, vec![20, 28, 36]);
}

#[test]
fn invalid_configs_are_rejected_up_front() {
    let (mut cfg, inputs, oracle) = fixture(2, 4, 10);
    cfg.rho_max = 0;
    assert!(matches!(
        run_passive(&cfg, &inputs, &oracle, &mut NullSink),
        Err(Error::Usage(_))
    ));
    let (mut cfg, inputs, oracle) = fixture(2, 4, 10);
    cfg.plan.k = 11; // exceeds |S_0|
    assert!(matches!(
        run_active(&cfg, &inputs, &oracle, &mut NullSink),
        Err(Error::Usage(_))
    ));
    let (cfg, mut inputs, oracle) = fixture(2, 4, 10);
    inputs.initial.clear();
    assert!(matches!(
        run_passive(&cfg, &inputs, &oracle, &mut NullSink),
        Err(Error::Usage(_))
    ));
}

/// Backend that fails with a transport error after a fixed number of
/// label calls.
struct FlakyBackend {
    net: Network<f64>,
    calls_before_failure: std::sync::atomic::AtomicUsize,
}

impl LabelBackend<f64> for FlakyBackend {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn n_classes(&self) -> usize {
        self.net.n_classes()
    }

    fn labels(&self, inputs: &[Vec<f64>]) -> Result<Vec<usize>> {
        use std::sync::atomic::Ordering;
        if self.calls_before_failure.fetch_sub(1, Ordering::SeqCst) == 0 {
            return Err(Error::Transport {
                completed: Vec::new(),
                attempted: inputs.len(),
                message: "synthetic outage".into(),
            });
        }
        inputs.iter().map(|x| self.net.predict(x)).collect()
    }
}

#[test]
fn transport_failure_aborts_after_persisting_records() {
    let (cfg, inputs, _) = fixture(2, 4, 10);
    let spec = NetworkSpec::new(vec![4, 6, 2], Activation::Tanh).unwrap();
    let backend = FlakyBackend {
        net: Network::seeded(spec, 50),
        // Survives the initial labeling and the three itr-0 metric passes
        // (acc clean, acc adversarial, simi), then dies on the first
        // crafted batch.
        calls_before_failure: std::sync::atomic::AtomicUsize::new(4),
    };
    let oracle = Oracle::from_backend(Box::new(backend));
    let mut sink = VecSink(Vec::new());
    let err = run_passive(&cfg, &inputs, &oracle, &mut sink).unwrap_err();
    assert!(matches!(err, Error::Transport { .. }));
    assert_eq!(sink.0.len(), 1);
    assert_eq!(sink.0[0].itr, 0);
}

#[test]
fn csv_sink_round_trips_records() {
    let (cfg, inputs, oracle) = fixture(2, 4, 10);
    let mut buf = Vec::new();
    let records = {
        let mut sink = CsvSink::new(&mut buf).unwrap();
        run_passive(&cfg, &inputs, &oracle, &mut sink).unwrap()
    };
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), RunRecord::CSV_HEADER);
    let parsed: Vec<RunRecord> = lines
        .map(|l| RunRecord::from_csv_row(l).unwrap())
        .collect();
    assert_eq!(parsed, records);
}
