use ndarray::{array, Array1, Array2};

use super::*;
use crate::data::Dataset;
use crate::nispa::UnitPartition;
use crate::seeded_rng;

fn tiny_net() -> Network {
    let l0 = SparseLinearLayer::dense(array![[1.0, -1.0], [0.5, 0.5], [-1.0, 2.0]], array![0.1, 0.0, -0.2]);
    let l1 = SparseLinearLayer::dense(array![[1.0, 0.0, -1.0], [0.3, 0.7, 0.2]], array![0.0, 0.05]);
    Network::from_layers(vec![l0, l1], HeadLayout::single(2)).unwrap()
}

#[test]
fn init_has_exact_mask_counts() {
    let net = Network::init_seeded(&[20, 30, 10], 0.25, HeadLayout::single(10), 3).unwrap();
    assert_eq!(net.layers()[0].connection_count(), 150);
    assert_eq!(net.layers()[1].connection_count(), 75);
    for layer in net.layers() {
        assert!(layer.bias().iter().all(|&b| b == 0.0));
        assert!(!layer.frozen().iter().any(|&f| f));
        layer.check_invariants().unwrap();
    }
}

#[test]
fn init_rounds_mask_count() {
    // 0.3 * 7 * 3 = 6.3
    let net = Network::init_seeded(&[3, 7], 0.3, HeadLayout::single(7), 1).unwrap();
    assert_eq!(net.layers()[0].connection_count(), 6);
}

#[test]
fn init_weight_variance_matches_fan_in() {
    let net = Network::init_seeded(&[400, 500], 0.5, HeadLayout::single(500), 9).unwrap();
    let layer = &net.layers()[0];
    let values: Vec<f64> = layer
        .weights()
        .iter()
        .zip(layer.mask())
        .filter(|(_, &m)| m)
        .map(|(&w, _)| w)
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let expected = 2.0 / 400.0;
    // 100k draws: relative standard error of the variance is ~0.45%.
    assert!(mean.abs() < 1e-3, "{mean}");
    assert!((var / expected - 1.0).abs() < 0.03, "{var} vs {expected}");
}

#[test]
fn init_is_deterministic_per_seed() {
    let a = Network::init_seeded(&[8, 6, 4], 0.4, HeadLayout::uniform(2, 2), 5).unwrap();
    let b = Network::init_seeded(&[8, 6, 4], 0.4, HeadLayout::uniform(2, 2), 5).unwrap();
    let c = Network::init_seeded(&[8, 6, 4], 0.4, HeadLayout::uniform(2, 2), 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn init_rejects_bad_arguments() {
    let heads = HeadLayout::single(2);
    assert!(Network::init_seeded(&[4, 2], 0.0, heads.clone(), 0).is_err());
    assert!(Network::init_seeded(&[4, 2], 1.5, heads.clone(), 0).is_err());
    assert!(Network::init_seeded(&[4], 0.5, heads.clone(), 0).is_err());
    assert!(Network::init_seeded(&[4, 0, 2], 0.5, heads, 0).is_err());
    assert!(Network::init_seeded(&[4, 3], 0.5, HeadLayout::single(2), 0).is_err());
}

#[test]
fn empty_layer_outputs_relu_of_bias() {
    let mut l0 = SparseLinearLayer::empty(3, 2);
    l0.set_bias(0, 0.5);
    l0.set_bias(1, -0.5);
    l0.set_bias(2, 2.0);
    let l1 = SparseLinearLayer::dense(Array2::eye(3), Array1::zeros(3));
    let net = Network::from_layers(vec![l0, l1], HeadLayout::single(3)).unwrap();
    let out = net.forward(array![[7.0, -3.0], [0.0, 1.0]].view(), 0).unwrap();
    assert_eq!(out, array![[0.5, 0.0, 2.0], [0.5, 0.0, 2.0]]);
}

#[test]
fn zero_network_gives_zero_logits() {
    let net = Network::from_layers(
        vec![SparseLinearLayer::empty(4, 3), SparseLinearLayer::empty(2, 4)],
        HeadLayout::single(2),
    )
    .unwrap();
    let out = net.forward(array![[1.0, 2.0, 3.0]].view(), 0).unwrap();
    assert_eq!(out, array![[0.0, 0.0]]);
}

#[test]
fn forward_matches_hand_computation() {
    let net = tiny_net();
    let out = net.forward(array![[1.0, 2.0]].view(), 0).unwrap();
    // hidden = relu([1-2+0.1, 0.5+1, -1+4-0.2]) = [0, 1.5, 2.8]
    let expected = [0.0 - 2.8, 0.3 * 0.0 + 0.7 * 1.5 + 0.2 * 2.8 + 0.05];
    assert!((out[(0, 0)] - expected[0]).abs() < 1e-12);
    assert!((out[(0, 1)] - expected[1]).abs() < 1e-12);
}

#[test]
fn forward_masks_other_heads() {
    let hidden = SparseLinearLayer::dense(Array2::ones((3, 2)), Array1::zeros(3));
    let out = SparseLinearLayer::dense(Array2::ones((4, 3)), array![0.0, 1.0, 2.0, 3.0]);
    let net = Network::from_layers(vec![hidden, out], HeadLayout::uniform(2, 2)).unwrap();
    let logits = net.forward(array![[1.0, 1.0]].view(), 1).unwrap();
    assert_eq!(logits[(0, 0)], f64::NEG_INFINITY);
    assert_eq!(logits[(0, 1)], f64::NEG_INFINITY);
    assert_eq!(logits[(0, 2)], 8.0);
    assert_eq!(net.predict(array![[1.0, 1.0]].view(), 1).unwrap(), vec![3]);
    assert_eq!(net.predict(array![[1.0, 1.0]].view(), 0).unwrap(), vec![1]);
    assert!(net.forward(array![[1.0, 1.0]].view(), 2).is_err());
}

#[test]
fn forward_rejects_wrong_width() {
    assert!(tiny_net().forward(array![[1.0, 2.0, 3.0]].view(), 0).is_err());
}

#[test]
fn argmax_ties_go_to_lowest_index() {
    let l = SparseLinearLayer::dense(Array2::zeros((3, 2)), Array1::zeros(3));
    let net = Network::from_layers(vec![l], HeadLayout::single(3)).unwrap();
    assert_eq!(net.predict(array![[1.0, 1.0]].view(), 0).unwrap(), vec![0]);
}

#[test]
fn evaluate_counts_correct_predictions() {
    let l = SparseLinearLayer::dense(array![[1.0, 0.0], [0.0, 1.0]], Array1::zeros(2));
    let net = Network::from_layers(vec![l], HeadLayout::single(2)).unwrap();
    let data = Dataset::new(array![[1.0, 0.0], [0.0, 1.0], [2.0, 1.0], [0.0, 3.0]], vec![0, 1, 1, 0]).unwrap();
    assert_eq!(net.evaluate(&data, 0).unwrap(), 0.5);
    assert!(net.evaluate(&Dataset::empty(2), 0).is_err());
}

#[test]
fn silencing_zeroes_units() {
    let net = tiny_net();
    let x = array![[1.0, 2.0]];
    let silence = vec![vec![false, false, true]];
    let out = net.forward_silenced(x.view(), 0, Some(&silence)).unwrap();
    assert!((out[(0, 0)] - 0.0).abs() < 1e-12);
    assert!((out[(0, 1)] - (0.7 * 1.5 + 0.05)).abs() < 1e-12);
}

#[test]
fn activation_trace_sums_over_samples() {
    let net = tiny_net();
    let empty = net.accumulate_activations(&Dataset::empty(2)).unwrap();
    assert_eq!(empty.per_unit, vec![vec![0.0; 3]]);
    assert_eq!(empty.per_layer_total, vec![0.0]);

    let one = Dataset::new(array![[1.0, 2.0]], vec![0]).unwrap();
    let a = net.accumulate_activations(&one).unwrap();
    assert_eq!(a.per_unit[0].len(), 3);
    assert!((a.per_layer_total[0] - 4.3).abs() < 1e-12);

    let twice = Dataset::concat(&[&one, &one]).unwrap();
    let b = net.accumulate_activations(&twice).unwrap();
    for (x, y) in a.per_unit[0].iter().zip(&b.per_unit[0]) {
        assert!((2.0 * x - y).abs() < 1e-12);
    }

    let other = Dataset::new(array![[0.0, 1.0]], vec![1]).unwrap();
    let c = net.accumulate_activations(&other).unwrap();
    let both = net.accumulate_activations(&Dataset::concat(&[&one, &other]).unwrap()).unwrap();
    for u in 0..3 {
        assert!((a.per_unit[0][u] + c.per_unit[0][u] - both.per_unit[0][u]).abs() < 1e-12);
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = seeded_rng(12);
    let mut net = Network::init(&[5, 7, 6, 3], 0.6, HeadLayout::single(3), &mut rng).unwrap();
    for l in 0..net.layers().len() {
        for i in 0..net.layers()[l].out_units() {
            net.layer_mut(l).set_bias(i, 0.05 * (i as f64 + 1.0));
        }
    }
    let x = Array2::from_shape_fn((4, 5), |(r, c)| ((r * 5 + c) as f64 * 0.37).sin());
    let y = vec![0, 2, 1, 2];
    let head = 0..3;
    let (_, grads) = loss_and_gradients(&net, x.view(), &y, &head);
    let h = 1e-5;
    let loss_at = |n: &Network| loss_and_gradients(n, x.view(), &y, &head).0;
    for l in 0..net.layers().len() {
        let positions: Vec<(usize, usize)> = net.layers()[l]
            .mask()
            .indexed_iter()
            .filter(|(_, &m)| m)
            .map(|(p, _)| p)
            .collect();
        for (i, j) in positions {
            let w = net.layers()[l].weights()[(i, j)];
            let mut plus = net.clone();
            plus.layer_mut(l).set_weight(i, j, w + h);
            let mut minus = net.clone();
            minus.layer_mut(l).set_weight(i, j, w - h);
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let analytic = grads.weights[l][(i, j)];
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(err < 1e-4 || (numeric - analytic).abs() < 1e-9, "layer {l} ({i},{j}): {analytic} vs {numeric}");
        }
        for i in 0..net.layers()[l].out_units() {
            let b = net.layers()[l].bias()[i];
            let mut plus = net.clone();
            plus.layer_mut(l).set_bias(i, b + h);
            let mut minus = net.clone();
            minus.layer_mut(l).set_bias(i, b - h);
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let analytic = grads.biases[l][i];
            assert!((numeric - analytic).abs() < 1e-6, "bias {l}/{i}: {analytic} vs {numeric}");
        }
    }
}

#[test]
fn cross_entropy_of_uniform_logits_is_log_classes() {
    let (loss, grad) = cross_entropy(&Array2::zeros((2, 4)), &[1, 3], &(0..4));
    assert!((loss - 4f64.ln()).abs() < 1e-12);
    assert!((grad[(0, 1)] - (0.25 - 1.0) / 2.0).abs() < 1e-12);
    assert!((grad[(0, 0)] - 0.125).abs() < 1e-12);
}

fn two_points() -> Dataset {
    Dataset::new(array![[1.0, 0.0], [0.0, 1.0]], vec![0, 1]).unwrap()
}

#[test]
fn zero_epochs_change_nothing() {
    let mut net = Network::init_seeded(&[2, 4, 2], 1.0, HeadLayout::single(2), 0).unwrap();
    let before = net.clone();
    let mut opt = OptimizerState::adam(0.1);
    let params = TrainParams { epochs: 0, batch_size: 2 };
    let stats = train_epochs(&mut net, &mut opt, &two_points(), 0, params, &mut seeded_rng(0)).unwrap();
    assert_eq!(stats.steps, 0);
    assert_eq!(net, before);
}

#[test]
fn sgd_separates_two_points() {
    let mut net = Network::init_seeded(&[2, 8, 2], 1.0, HeadLayout::single(2), 4).unwrap();
    let mut opt = OptimizerState::sgd(0.5);
    let params = TrainParams { epochs: 200, batch_size: 2 };
    train_epochs(&mut net, &mut opt, &two_points(), 0, params, &mut seeded_rng(1)).unwrap();
    assert_eq!(net.evaluate(&two_points(), 0).unwrap(), 1.0);
}

#[test]
fn adam_separates_two_points() {
    let mut net = Network::init_seeded(&[2, 8, 2], 1.0, HeadLayout::single(2), 4).unwrap();
    let mut opt = OptimizerState::adam(0.01);
    let params = TrainParams { epochs: 100, batch_size: 1 };
    train_epochs(&mut net, &mut opt, &two_points(), 0, params, &mut seeded_rng(1)).unwrap();
    assert_eq!(net.evaluate(&two_points(), 0).unwrap(), 1.0);
}

#[test]
fn frozen_and_masked_positions_do_not_move() {
    let mut net = Network::init_seeded(&[2, 6, 2], 0.5, HeadLayout::single(2), 8).unwrap();
    for u in 0..3 {
        net.layer_mut(0).freeze_unit(u);
    }
    net.layer_mut(1).freeze_unit(0);
    net.layer_mut(1).freeze_unit(1);
    let before = net.clone();
    let mut opt = OptimizerState::adam(0.05);
    let params = TrainParams { epochs: 20, batch_size: 2 };
    train_epochs(&mut net, &mut opt, &two_points(), 0, params, &mut seeded_rng(3)).unwrap();
    assert_eq!(net.layers()[1], before.layers()[1]);
    let (a, b) = (&net.layers()[0], &before.layers()[0]);
    for ((i, j), &m) in b.mask().indexed_iter() {
        if !m || i < 3 {
            assert_eq!(a.weights()[(i, j)], b.weights()[(i, j)]);
        }
    }
    for i in 0..3 {
        assert_eq!(a.bias()[i], b.bias()[i]);
    }
    assert_eq!(a.mask(), b.mask());
    assert_ne!(a.weights(), b.weights());
}

#[test]
fn labels_outside_head_are_rejected() {
    let mut net = Network::init_seeded(&[2, 4, 4], 1.0, HeadLayout::uniform(2, 2), 0).unwrap();
    let mut opt = OptimizerState::sgd(0.1);
    let params = TrainParams { epochs: 1, batch_size: 2 };
    let err = train_epochs(&mut net, &mut opt, &two_points(), 1, params, &mut seeded_rng(0));
    assert!(err.is_err());
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut net = Network::init_seeded(&[2, 5, 2], 0.7, HeadLayout::single(2), 2).unwrap();
        let mut opt = OptimizerState::adam(0.01);
        let params = TrainParams { epochs: 5, batch_size: 1 };
        train_epochs(&mut net, &mut opt, &two_points(), 0, params, &mut seeded_rng(7)).unwrap();
        net
    };
    assert_eq!(run(), run());
}

#[test]
fn snapshot_restore_returns_saved_state() {
    let mut net = Network::init_seeded(&[2, 4, 2], 0.5, HeadLayout::single(2), 1).unwrap();
    let partition = UnitPartition::all_plastic(&net);
    let opt = OptimizerState::adam(0.01);
    let mut store = SnapshotStore::new();
    store.store(1, Snapshot::capture(&net, &partition, &opt));
    let saved = net.clone();
    net.layer_mut(0).set_bias(0, 9.0);
    let back = store.restore(1).unwrap();
    assert_eq!(back.net, saved);
    assert_eq!(back.partition, partition);
    assert!(store.restore(2).is_err());
    assert_eq!(store.len(), 1);
}

#[test]
fn layer_add_remove_and_freeze() {
    let mut layer = SparseLinearLayer::empty(2, 3);
    layer.add_connection(1, 2, 0.4);
    assert!(layer.has_connection(1, 2));
    assert_eq!(layer.incoming(1).collect::<Vec<_>>(), vec![2]);
    assert_eq!(layer.outgoing(2).collect::<Vec<_>>(), vec![1]);
    layer.freeze_unit(1);
    assert!(!layer.is_trainable(1, 2));
    assert!(layer.bias_frozen()[1]);
    layer.unfreeze_unit(1);
    layer.remove_connection(1, 2);
    assert_eq!(layer.weights()[(1, 2)], 0.0);
    assert_eq!(layer.connection_count(), 0);
    layer.check_invariants().unwrap();
}
