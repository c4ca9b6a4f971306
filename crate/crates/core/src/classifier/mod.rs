//! Dense error-repair classifier: one ReLU hidden layer, inverted dropout,
//! softmax output, trained with minibatch Adam on cross-entropy.

mod eval;
mod gradcheck;
mod network;
mod train;

pub use eval::{evaluate, pred_at_k, ClassMetrics, EvalReport, REPORTED_K};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport, FD_STEP, REL_ERROR_FLOOR};
pub use network::{dropout_mask, param_count, softmax, top_k, Forward, Network};
pub use train::{
    stratified_split, train, EpochStats, NetworkConfig, Split, SplitRatios, TrainError,
    TrainOutcome,
};

use crate::encoder::FeatureVector;
use crate::repair::ClassId;

/// Ranked `(class, probability)` pairs for one input.
pub fn predict_topk(net: &Network<f32>, x: &FeatureVector, k: usize) -> Vec<(ClassId, f32)> {
    top_k(&net.predict_proba(x), k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(v: usize, h: usize, k: usize, seed: u64) -> Network<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..param_count(v, h, k)).map(|_| rng.random_range(-1.0..1.0)).collect();
        Network::from_params(v, h, k, params).unwrap()
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = Network::<f32>::zeros(4, 3, 5);
        let p = net.predict_proba(&FeatureVector::from_active(4, vec![0, 2]));
        assert!(p.iter().all(|&q| (q - 0.2).abs() < 1e-7));
        let ranked = predict_topk(&net, &FeatureVector::zeros(4), 3);
        assert_eq!(ranked.iter().map(|r| r.0).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn forward_matches_hand_computation() {
        // V=5, H=3, K=2; expected values from a plain dot-product script
        let w1 = [
            0.1, -0.2, 0.3, 0.0, 0.5, //
            -0.4, 0.2, 0.1, 0.3, -0.1, //
            0.2, 0.2, -0.5, 0.1, 0.0,
        ];
        let b1 = [0.05, -0.1, 0.0];
        let w2 = [0.3, -0.6, 0.9, -0.2, 0.4, 0.1];
        let b2 = [0.01, -0.02];
        let params: Vec<f64> = [&w1[..], &b1, &w2, &b2].concat();
        let net = Network::from_params(5, 3, 2, params).unwrap();
        let x = FeatureVector::from_active(5, vec![0, 2, 4]);
        let f = net.forward(&x, None);
        // z1 = [0.95, -0.5, -0.3]; h = [0.95, 0, 0]
        // logits = [0.3*0.95 + 0.01, -0.2*0.95 - 0.02] = [0.295, -0.21]
        let expected_p0 = 1.0 / (1.0 + (-0.21f64 - 0.295).exp());
        assert!((f.pre_hidden[0] - 0.95).abs() < 1e-12);
        assert_eq!(&f.hidden[1..], [0.0, 0.0]);
        assert!((f.probs[0] - expected_p0).abs() < 1e-12);
        assert!((f.probs[0] + f.probs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_dropout_mask_is_noop() {
        let net = random_net(6, 4, 3, 7);
        let x = FeatureVector::from_active(6, vec![1, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mask = dropout_mask(4, 0.0, &mut rng);
        assert_eq!(net.forward(&x, Some(&mask)).probs, net.forward(&x, None).probs);
    }

    #[test]
    fn single_example_gradient_closed_form() {
        // dL/db2 = p - onehot, dL/dW2 = (p - onehot) h^T
        let net: Network<f64> = {
            let n = random_net(4, 3, 2, 11);
            Network::from_params(4, 3, 2, n.params().iter().map(|&p| p as f64).collect()).unwrap()
        };
        let x = FeatureVector::from_active(4, vec![0, 1]);
        let f = net.forward(&x, None);
        let (_, grad) = net.loss_and_grad(&[(&x, 1)], None);
        let b2_off = grad.len() - 2;
        assert!((grad[b2_off] - f.probs[0]).abs() < 1e-12);
        assert!((grad[b2_off + 1] - (f.probs[1] - 1.0)).abs() < 1e-12);
        let w2_off = b2_off - 6;
        for c in 0..2 {
            let d = f.probs[c] - if c == 1 { 1.0 } else { 0.0 };
            for u in 0..3 {
                assert!((grad[w2_off + c * 3 + u] - d * f.hidden[u]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_prediction_has_near_zero_gradient() {
        let mut net = Network::<f64>::zeros(2, 2, 2);
        let n = net.params().len();
        net.params_mut()[n - 2] = 60.0; // b2[0]
        let x = FeatureVector::from_active(2, vec![0]);
        let (loss, grad) = net.loss_and_grad(&[(&x, 0)], None);
        assert!(loss < 1e-20);
        assert!(grad.iter().all(|g| g.abs() < 1e-20));
    }

    #[test]
    fn gradient_check_small_nets() {
        for seed in 0..5 {
            let report = gradient_check(&GradCheckConfig {
                inputs: 6,
                hidden: 5,
                classes: 4,
                batch: 3,
                seed,
            });
            assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let net = random_net(8, 64, 3, 5);
        let x = FeatureVector::from_active(8, vec![0, 2, 5, 7]);
        let clean = net.forward(&x, None).hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 20_000;
        let mut mean = vec![0.0f64; 64];
        for _ in 0..trials {
            let mask = dropout_mask(64, 0.2, &mut rng);
            for (m, a) in mean.iter_mut().zip(net.forward(&x, Some(&mask)).hidden) {
                *m += a as f64 / trials as f64;
            }
        }
        let total_clean: f64 = clean.iter().map(|&a| a as f64).sum();
        let total_mean: f64 = mean.iter().sum();
        assert!(total_clean > 0.0);
        assert!(((total_mean - total_clean) / total_clean).abs() < 0.02);
    }

    fn separable_toy(per_class: usize) -> Vec<(FeatureVector, ClassId)> {
        // class c owns features 4c..4c+4; each example turns on 2 of its 4
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = Vec::new();
        for c in 0..2u32 {
            for _ in 0..per_class {
                let a = rng.random_range(0..4);
                let b = (a + 1 + rng.random_range(0..3)) % 4;
                data.push((FeatureVector::from_active(8, vec![4 * c + a, 4 * c + b]), c));
            }
        }
        data
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let data = separable_toy(50);
        let cfg = NetworkConfig {
            seed: 17,
            ..NetworkConfig::default()
        };
        let out = train(&data, 2, &cfg).unwrap();
        assert_eq!(out.history.len(), 6);
        let best = out.history[out.best_epoch - 1].validation_pred_at_1.unwrap();
        assert_eq!(best, 1.0);
        assert!(out.history[5].train_loss < out.history[0].train_loss);
        for (x, y) in &data {
            assert_eq!(predict_topk(&out.network, x, 1)[0].0, *y);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_toy(20);
        let cfg = NetworkConfig {
            seed: 4,
            hidden_units: 16,
            ..NetworkConfig::default()
        };
        let a = train(&data, 2, &cfg).unwrap();
        let b = train(&data, 2, &cfg).unwrap();
        let bits = |n: &Network<f32>| n.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.network), bits(&b.network));
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn perfect_model_scores_one() {
        let data = separable_toy(30);
        let out = train(&data, 2, &NetworkConfig { seed: 1, ..NetworkConfig::default() }).unwrap();
        let items: Vec<(&FeatureVector, ClassId)> = data.iter().map(|(x, y)| (x, *y)).collect();
        let report = evaluate(&out.network, &items);
        assert_eq!(report.pred_at(1), 1.0);
        for c in &report.per_class {
            assert_eq!((c.precision, c.recall), (1.0, 1.0));
            assert_eq!(c.top_confusion, None);
        }
    }

    #[test]
    fn confusion_and_precision() {
        // class 0 always wins: class 1 items are confused with 0
        let mut net = Network::<f32>::zeros(2, 1, 2);
        let n = net.params().len();
        net.params_mut()[n - 2] = 5.0;
        let x = FeatureVector::zeros(2);
        let items = vec![(&x, 0), (&x, 0), (&x, 1)];
        let report = evaluate(&net, &items);
        assert!((report.pred_at(1) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.pred_at(3), 1.0);
        let c0 = &report.per_class[0];
        assert!((c0.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c0.recall, 1.0);
        let c1 = &report.per_class[1];
        assert_eq!((c1.precision, c1.recall, c1.support), (0.0, 0.0, 1));
        assert_eq!(c1.top_confusion, Some(0));
    }

    proptest! {
        #[test]
        fn softmax_is_normalized(seed in 0u64..1000, active in proptest::collection::vec(0u32..7, 0..7)) {
            let net = random_net(7, 5, 4, seed);
            let p = net.predict_proba(&FeatureVector::from_active(7, active));
            let sum: f64 = p.iter().map(|&q| q as f64).sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&q| q >= 0.0));
        }

        #[test]
        fn pred_at_k_is_monotone(seed in 0u64..500) {
            let net = random_net(6, 4, 7, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<FeatureVector> = (0..20).map(|_| FeatureVector::from_active(6, (0..6).filter(|_| rng.random_bool(0.5)).collect())).collect();
            let items: Vec<(&FeatureVector, ClassId)> = xs.iter().map(|x| (x, rng.random_range(0..7))).collect();
            let r = evaluate(&net, &items);
            prop_assert!(r.pred_at(1) <= r.pred_at(3));
            prop_assert!(r.pred_at(3) <= r.pred_at(5));
        }

        #[test]
        fn top_k_full_is_permutation(seed in 0u64..500) {
            let net = random_net(4, 3, 6, seed);
            let ranked = predict_topk(&net, &FeatureVector::from_active(4, vec![1]), 6);
            let mut ids: Vec<ClassId> = ranked.iter().map(|r| r.0).collect();
            prop_assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..6).collect::<Vec<_>>());
        }
    }
}
