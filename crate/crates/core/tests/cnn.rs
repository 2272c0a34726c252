mod common;

use graph2d::cnn::{
    argmax, evaluate, predict, softmax, softmax_cross_entropy, train, xavier_init, ArchConfig, CnnModel, Dropout,
    ImageSet, Padding, Tensor, TrainConfig, REGION_SIZES,
};
use graph2d::rng;

use common::*;

#[test]
fn conv_gradients_match_finite_differences() {
    for k in REGION_SIZES {
        for padding in [Padding::Same, Padding::Valid] {
            let e = conv_gradient_error(k, padding);
            assert!(e < 1e-4, "k={k} {padding:?}: {e}");
        }
    }
}

#[test]
fn pool_dense_relu_dropout_softmax_gradients() {
    assert!(pool_gradient_error() < 1e-4);
    assert!(dense_gradient_error() < 1e-4);
    assert!(relu_gradient_error() < 1e-4);
    assert!(dropout_gradient_error(0.0) < 1e-4);
    assert!(dropout_gradient_error(0.4) < 1e-4);
    assert!(softmax_ce_gradient_error() < 1e-4);
}

#[test]
fn composed_network_gradient() {
    let e = composed_gradient_error(12);
    assert!(e < 1e-3, "{e}");
}

#[test]
fn xavier_sample_mean_is_centred() {
    // 1000 x 100 dense weights: bound sqrt(6 / 1100)
    let t = xavier_init::<f64>(&[1000, 100], 5);
    let n = t.data.len() as f64;
    let bound = (6.0f64 / 1100.0).sqrt();
    let sigma = bound / 3f64.sqrt();
    let mean = t.data.iter().sum::<f64>() / n;
    assert!(mean.abs() < 3.0 * sigma / n.sqrt(), "{mean}");
    let var = t.data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    approx::assert_relative_eq!(var, sigma * sigma, max_relative = 0.02);
    assert!(t.data.iter().all(|x| x.abs() <= bound));
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let rate = 0.3;
    let draws = 10_000;
    let x = Tensor::from_vec(vec![1, 4], vec![1.0, -2.0, 0.5, 3.0]);
    let mut r = rng::seeded(8);
    let mut sums = [0.0f64; 4];
    for _ in 0..draws {
        let mut y = x.clone();
        Dropout::<f64>::new(rate).forward(&mut y, true, &mut r);
        for (s, v) in sums.iter_mut().zip(&y.data) {
            *s += v;
        }
    }
    for (s, &v) in sums.iter().zip(&x.data) {
        // each draw is v / (1 - rate) with probability 1 - rate, else 0
        let sd = v.abs() * (rate / (1.0 - rate)).sqrt();
        let mean = s / draws as f64;
        assert!((mean - v).abs() < 3.0 * sd / (draws as f64).sqrt(), "{mean} vs {v}");
    }
    let mut y = x.clone();
    Dropout::<f64>::new(rate).forward(&mut y, false, &mut r);
    assert_eq!(y, x);
}

#[test]
fn softmax_rows_are_distributions() {
    let logits = random_tensor(vec![5, 4], 3);
    let p = softmax(&logits);
    for row in p.data.chunks(4) {
        assert!(row.iter().all(|&v| v > 0.0));
        approx::assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
    let (loss, _, _) = softmax_cross_entropy(&logits, &[0, 1, 2, 3, 0]);
    assert!(loss > 0.0);
}

/// Class 0 blank, class 1 every pixel at the same count.
fn blank_vs_full(n: usize, side: usize) -> ImageSet<f32> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let label = i % 2;
        data.extend(std::iter::repeat_n(if label == 1 { 3.0 } else { 0.0 }, side * side));
        labels.push(label);
    }
    ImageSet::new(1, side, side, data, labels)
}

#[test]
fn separable_fixture_is_learned() {
    let set = blank_vs_full(60, 8);
    let config = TrainConfig { max_epochs: 20, patience: 20, ..Default::default() };
    let mut model = CnnModel::<f32>::new(config.arch(1, 8, 8, 2), 4).unwrap();
    let history = train(&mut model, &set, &config).unwrap();
    assert!(history.epochs.len() <= 20);
    assert!(history.epochs.iter().any(|e| e.train_accuracy == 1.0));
    let (_, acc) = evaluate(&mut model, &set, 32).unwrap();
    assert_eq!(acc, 1.0);
    let test = blank_vs_full(10, 8);
    assert_eq!(predict(&mut model, &test, 4).unwrap().labels, test.labels);
}

#[test]
fn zero_dropout_train_and_inference_agree() {
    let arch = ArchConfig { dropout: 0.0, ..ArchConfig::new(1, 7, 9, 3) };
    let mut model = CnnModel::<f64>::new(arch, 2).unwrap();
    let x = random_tensor(vec![2, 1, 7, 9], 6);
    let a = model.forward(&x, true, &mut rng::seeded(1)).unwrap();
    let b = model.forward(&x, false, &mut rng::seeded(2)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn prediction_is_deterministic() {
    let arch = ArchConfig::new(2, 6, 6, 4);
    let mut model = CnnModel::<f32>::new(arch, 10).unwrap();
    let data: Vec<f32> = random_tensor(vec![5, 2, 6, 6], 1).data.iter().map(|&v| v as f32).collect();
    let set = ImageSet::new(2, 6, 6, data, vec![0, 1, 2, 3, 0]);
    let a = predict(&mut model, &set, 2).unwrap();
    let b = predict(&mut model, &set, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(predict(&mut model, &set, 5).unwrap().labels, a.labels);
    for (row, &label) in a.probabilities.iter().zip(&a.labels) {
        assert_eq!(argmax(row), label);
    }
    assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
}
