use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Relative agreement with a floor so near-zero gradients compare absolutely.
fn assert_rel(analytic: f64, numeric: f64, tol: f64) {
    let denom = analytic.abs().max(numeric.abs()).max(1e-4);
    let rel = (analytic - numeric).abs() / denom;
    assert!(
        rel <= tol,
        "analytic={analytic} numeric={numeric} rel={rel}"
    );
}

/// Scalar value of a head at the current parameters, for finite differences.
fn head_value(net: &Network<f64>, x: &[f64], head: ScalarHead) -> f64 {
    let fwd = net.forward(x).unwrap();
    match head {
        ScalarHead::Loss { label } => {
            let max = fwd.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = fwd.logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            lse - fwd.logits[label]
        }
        ScalarHead::Logit(i) => fwd.logits[i],
        ScalarHead::Prob(i) => fwd.probs[i],
        ScalarHead::LogitDiff { up, down } => fwd.logits[up] - fwd.logits[down],
    }
}

fn batch_loss(net: &Network<f64>, batch: &[Vec<f64>], labels: &[usize]) -> f64 {
    batch
        .iter()
        .zip(labels)
        .map(|(x, &y)| head_value(net, x, ScalarHead::Loss { label: y }))
        .sum::<f64>()
        / batch.len() as f64
}

fn random_input(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(0.05..0.95)).collect()
}

fn small_net(seed: u64, activation: Activation) -> Network<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.random_range(3..7usize);
    let hidden = rng.random_range(4..9usize);
    let classes = rng.random_range(2..5usize);
    let spec = NetworkSpec::new(vec![input, hidden, classes], activation).unwrap();
    Network::seeded(spec, seed.wrapping_mul(31).wrapping_add(1))
}

#[test]
fn zero_net_outputs_uniform() {
    let spec = NetworkSpec::new(vec![4, 6, 5], Activation::Tanh).unwrap();
    let net = Network::<f64>::zeros(spec);
    let fwd = net.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
    for &p in &fwd.probs {
        assert!((p - 0.2).abs() < 1e-12);
    }
    let (loss, _) = net
        .loss_and_grads(&[vec![0.1, 0.2, 0.3, 0.4]], &[3])
        .unwrap();
    assert!((loss - (5.0f64).ln()).abs() < 1e-12);
}

#[test]
fn linear_net_logits_are_affine() {
    let spec = NetworkSpec::new(vec![2, 3], Activation::Tanh).unwrap();
    let weights = vec![1.0, 2.0, -1.0, 0.5, 0.0, -0.25];
    let biases = vec![0.1, -0.2, 0.3];
    let net = Network::from_parts(spec, vec![(weights.clone(), biases.clone())]).unwrap();
    let x = [0.4_f64, 0.9];
    let fwd = net.forward(&x).unwrap();
    for o in 0..3 {
        let expect = weights[o * 2] * x[0] + weights[o * 2 + 1] * x[1] + biases[o];
        assert!((fwd.logits[o] - expect).abs() < 1e-12);
    }
}

#[test]
fn probabilities_normalize_and_match_logit_argmax() {
    for seed in 0..20u64 {
        let net = small_net(seed, Activation::Tanh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let x = random_input(&mut rng, net.input_dim());
        let fwd = net.forward(&x).unwrap();
        let sum: f64 = fwd.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(fwd.probs.iter().all(|&p| p >= 0.0));
        assert_eq!(crate::num::argmax(&fwd.logits), crate::num::argmax(&fwd.probs));
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let h = 1e-5;
    for seed in 0..10u64 {
        let mut net = small_net(seed, Activation::Tanh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
        let batch: Vec<Vec<f64>> = (0..3).map(|_| random_input(&mut rng, net.input_dim())).collect();
        let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..net.n_classes())).collect();
        let (_, grads) = net.loss_and_grads(&batch, &labels).unwrap();
        for l in 0..net.layers.len() {
            for p in 0..net.layers[l].weights.len() {
                let orig = net.layers[l].weights[p];
                net.layers[l].weights[p] = orig + h;
                let up = batch_loss(&net, &batch, &labels);
                net.layers[l].weights[p] = orig - h;
                let down = batch_loss(&net, &batch, &labels);
                net.layers[l].weights[p] = orig;
                assert_rel(grads.layers[l].weights[p], (up - down) / (2.0 * h), 1e-4);
            }
            for p in 0..net.layers[l].biases.len() {
                let orig = net.layers[l].biases[p];
                net.layers[l].biases[p] = orig + h;
                let up = batch_loss(&net, &batch, &labels);
                net.layers[l].biases[p] = orig - h;
                let down = batch_loss(&net, &batch, &labels);
                net.layers[l].biases[p] = orig;
                assert_rel(grads.layers[l].biases[p], (up - down) / (2.0 * h), 1e-4);
            }
        }
    }
}

#[test]
fn relu_gradients_match_finite_differences_at_safe_seeds() {
    // Fixed seeds; inputs land away from ReLU kinks so central differences
    // remain valid.
    let h = 1e-5;
    for seed in [3u64, 11, 42] {
        let mut net = small_net(seed, Activation::Relu);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
        let batch = vec![random_input(&mut rng, net.input_dim())];
        let labels = vec![0usize];
        let (_, grads) = net.loss_and_grads(&batch, &labels).unwrap();
        for p in 0..net.layers[0].weights.len() {
            let orig = net.layers[0].weights[p];
            net.layers[0].weights[p] = orig + h;
            let up = batch_loss(&net, &batch, &labels);
            net.layers[0].weights[p] = orig - h;
            let down = batch_loss(&net, &batch, &labels);
            net.layers[0].weights[p] = orig;
            assert_rel(grads.layers[0].weights[p], (up - down) / (2.0 * h), 1e-4);
        }
    }
}

#[test]
fn input_gradients_match_finite_differences_for_all_heads() {
    let h = 1e-5;
    for seed in 0..10u64 {
        let net = small_net(seed, Activation::Tanh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 900);
        let mut x = random_input(&mut rng, net.input_dim());
        let classes = net.n_classes();
        let heads = [
            ScalarHead::Loss { label: classes - 1 },
            ScalarHead::Logit(0),
            ScalarHead::Prob(classes / 2),
            ScalarHead::LogitDiff { up: 0, down: classes - 1 },
        ];
        for head in heads {
            let grad = net.input_gradient(&x, head).unwrap();
            for i in 0..x.len() {
                let orig = x[i];
                x[i] = orig + h;
                let up = head_value(&net, &x, head);
                x[i] = orig - h;
                let down = head_value(&net, &x, head);
                x[i] = orig;
                assert_rel(grad[i], (up - down) / (2.0 * h), 1e-4);
            }
        }
    }
}

#[test]
fn linear_net_logit_gradient_is_weight_row() {
    let spec = NetworkSpec::new(vec![3, 2], Activation::Tanh).unwrap();
    let weights = vec![0.5, -1.0, 2.0, 0.0, 0.25, -0.75];
    let net = Network::from_parts(spec, vec![(weights.clone(), vec![0.0, 0.0])]).unwrap();
    let grad = net.input_gradient(&[0.1, 0.2, 0.3], ScalarHead::Logit(1)).unwrap();
    assert_eq!(grad, vec![0.0, 0.25, -0.75]);
}

#[test]
fn logit_self_difference_has_zero_gradient() {
    let net = small_net(5, Activation::Tanh);
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let x = random_input(&mut rng, net.input_dim());
    let grad = net
        .input_gradient(&x, ScalarHead::LogitDiff { up: 1, down: 1 })
        .unwrap();
    assert!(grad.iter().all(|&g| g == 0.0));
}

#[test]
fn duplicated_batch_matches_single_sample_gradient() {
    let net = small_net(7, Activation::Tanh);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_input(&mut rng, net.input_dim());
    let (l1, g1) = net.loss_and_grads(&[x.clone()], &[1]).unwrap();
    let (l2, g2) = net
        .loss_and_grads(&[x.clone(), x.clone(), x], &[1, 1, 1])
        .unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    for (a, b) in g1.layers.iter().zip(&g2.layers) {
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() < 1e-12);
        }
    }
}

#[test]
fn bad_labels_and_shapes_are_rejected() {
    let net = small_net(2, Activation::Tanh);
    let x = vec![0.5; net.input_dim()];
    let err = net.loss_and_grads(&[x.clone()], &[net.n_classes()]).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
    let err = net.forward(&vec![0.5; net.input_dim() + 1]).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }));
    let err = net.input_gradient(&x, ScalarHead::Logit(99)).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
    let err = net.loss_and_grads(&[], &[]).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
}

fn two_blobs(seed: u64, n_per_class: usize) -> Vec<(Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let centers = [[0.3_f64, 0.3], [0.7, 0.7]];
    let mut data = Vec::new();
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            let x = vec![
                (c[0] + noise.sample(&mut rng)).clamp(0.0, 1.0),
                (c[1] + noise.sample(&mut rng)).clamp(0.0, 1.0),
            ];
            data.push((x, label));
        }
    }
    data
}

#[test]
fn zero_epochs_is_identity() {
    let net = small_net(9, Activation::Tanh);
    let data = two_blobs(1, 5);
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let trained = train(&net, &data, &cfg).unwrap();
    assert_eq!(net, trained);
}

#[test]
fn training_separates_blobs() {
    let spec = NetworkSpec::new(vec![2, 8, 2], Activation::Tanh).unwrap();
    let net = Network::<f64>::seeded(spec, 4);
    let data = two_blobs(2, 100);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 16,
        optimizer: Optimizer::adam(0.005),
        seed: 3,
    };
    let trained = train(&net, &data, &cfg).unwrap();
    let correct = data
        .iter()
        .filter(|(x, y)| trained.predict(x).unwrap() == *y)
        .count();
    let acc = correct as f64 / data.len() as f64;
    assert!(acc >= 0.99, "training accuracy {acc}");
}

#[test]
fn training_is_bitwise_deterministic() {
    let spec = NetworkSpec::new(vec![2, 6, 2], Activation::Tanh).unwrap();
    let net = Network::<f64>::seeded(spec, 12);
    let data = two_blobs(3, 20);
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 8,
        optimizer: Optimizer::adam(0.005),
        seed: 99,
    };
    let a = train(&net, &data, &cfg).unwrap();
    let b = train(&net, &data, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_dataset_is_usage_error() {
    let net = small_net(1, Activation::Tanh);
    let err = train(&net, &[], &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.bin");
    let spec = NetworkSpec::with_activations(
        vec![3, 5, 4, 2],
        vec![Activation::Relu, Activation::Tanh],
    )
    .unwrap();
    let net = Network::<f64>::seeded(spec, 21);
    save_network(&net, &path).unwrap();
    let loaded: Network<f64> = load_network(&path).unwrap();
    assert_eq!(net, loaded);
}

#[test]
fn load_rejects_bad_magic_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.bin");
    std::fs::write(&path, b"NOPE").unwrap();
    let err = load_network::<f64>(&path).unwrap_err();
    assert!(matches!(err, Error::Format { offset: 0, .. }));

    let good = dir.path().join("good.bin");
    let spec = NetworkSpec::new(vec![2, 3], Activation::Tanh).unwrap();
    save_network(&Network::<f64>::seeded(spec, 1), &good).unwrap();
    let bytes = std::fs::read(&good).unwrap();
    let cut = dir.path().join("cut.bin");
    std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    let err = load_network::<f64>(&cut).unwrap_err();
    assert!(matches!(err, Error::Format { .. }));
}

#[test]
fn f32_instantiation_behaves() {
    let spec = NetworkSpec::new(vec![3, 6, 3], Activation::Relu).unwrap();
    let net = Network::<f32>::seeded(spec, 8);
    let fwd = net.forward(&[0.2f32, 0.5, 0.8]).unwrap();
    let sum: f32 = fwd.probs.iter().sum();
    assert!((sum - 1.0).abs() < 1e-5);
    let g = net
        .input_gradient(&[0.2f32, 0.5, 0.8], ScalarHead::Loss { label: 0 })
        .unwrap();
    assert_eq!(g.len(), 3);
}

#[test]
fn spec_validation_rejects_degenerate_shapes() {
    assert!(NetworkSpec::new(vec![4], Activation::Tanh).is_err());
    assert!(NetworkSpec::new(vec![4, 1], Activation::Tanh).is_err());
    assert!(NetworkSpec::new(vec![0, 2], Activation::Tanh).is_err());
    assert!(NetworkSpec::new(vec![4, 3, 2], Activation::Tanh).is_ok());
}

proptest! {
    #[test]
    fn softmax_shift_invariance(
        logits in proptest::collection::vec(-10.0f64..10.0, 2..8),
        shift in -5.0f64..5.0,
    ) {
        let base = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let moved = softmax(&shifted);
        let sum: f64 = base.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert_eq!(crate::num::argmax(&base), crate::num::argmax(&moved));
    }

    #[test]
    fn forward_is_pure(seed in 0u64..50) {
        let net = small_net(seed, Activation::Tanh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_input(&mut rng, net.input_dim());
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        prop_assert_eq!(a.logits, b.logits);
        prop_assert_eq!(a.probs, b.probs);
    }
}
