use graph2d::cnn::TrainConfig;
use graph2d::compress::PcaScope;
use graph2d::embed::{EmbeddingConfig, WalkConfig};
use graph2d::graph::GraphDataset;
use graph2d::harness::{
    generate_synthetic_dataset, mean, parse_class_specs, population_std, run_experiment, stratified_kfold,
    CnnMethodConfig, CvConfig, EvalResult, KernelMethodConfig, MethodConfig,
};
use graph2d::kernels::GraphletConfig;

fn fixture(per_class: usize, nodes: usize) -> GraphDataset {
    let specs = parse_class_specs(&format!("er:{nodes}:0.15:{per_class},ba:{nodes}:2:{per_class}")).unwrap();
    generate_synthetic_dataset(&specs, 9).unwrap()
}

fn assert_no_leakage(r: &EvalResult, objects: &[&str]) {
    for f in &r.folds {
        let events: Vec<_> = r.leakage.iter().filter(|e| e.repeat == f.repeat && e.fold == f.fold).collect();
        for object in objects {
            assert!(events.iter().any(|e| e.object == *object), "no {object} event in fold {}", f.fold);
        }
        for e in events {
            assert!(e.indices.iter().all(|i| !f.test_indices.contains(i)), "{} saw test data", e.object);
        }
    }
}

fn assert_summary_consistent(r: &EvalResult) {
    let acc = r.accuracies();
    assert!((mean(&acc) - r.mean).abs() < 1e-12);
    assert!((population_std(&acc) - r.std).abs() < 1e-12);
}

#[test]
fn fold_sizes_and_proportions() {
    let balanced: Vec<usize> = (0..100).map(|i| i % 2).collect();
    for (_, test) in stratified_kfold(&balanced, 10, 1).unwrap() {
        assert_eq!(test.iter().filter(|&&i| balanced[i] == 0).count(), 5);
        assert_eq!(test.len(), 10);
    }
    for (_, test) in stratified_kfold(&[0, 0, 1, 1], 2, 1).unwrap() {
        assert_eq!(test.len(), 2);
        assert_ne!(test[0] / 2, test[1] / 2);
    }

    // eleven imbalanced classes, 11929 samples in total
    let sizes = [5000, 2000, 1200, 900, 800, 600, 500, 400, 300, 129, 100];
    assert_eq!(sizes.iter().sum::<usize>(), 11929);
    let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    for (_, test) in stratified_kfold(&labels, 10, 3).unwrap() {
        assert!((test.len() as f64 - 1192.9).abs() <= 1.0, "{}", test.len());
        for (c, &n) in sizes.iter().enumerate() {
            let got = test.iter().filter(|&&i| labels[i] == c).count() as f64;
            assert!((got - n as f64 / 10.0).abs() <= 1.0, "class {c}: {got}");
        }
    }
    assert!(stratified_kfold(&[0, 0, 0, 1], 2, 1).is_err());
}

#[test]
fn thirty_accuracies_from_ten_folds_three_repeats() {
    let ds = fixture(10, 20);
    let method = MethodConfig::Wl(KernelMethodConfig {
        c_grid: vec![1.0, 100.0],
        wl_iterations: vec![2, 3],
        ..Default::default()
    });
    let r = run_experiment(&ds, &method, &CvConfig::default()).unwrap();
    assert_eq!(r.folds.len(), 30);
    assert_eq!(r.results_csv().lines().count(), 31);
    assert_summary_consistent(&r);
    assert_no_leakage(&r, &["grid-search"]);
    for repeat in 0..3 {
        let mut seen: Vec<usize> =
            r.folds.iter().filter(|f| f.repeat == repeat).flat_map(|f| f.test_indices.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
    }
}

#[test]
fn graphlet_run_has_no_leakage() {
    let ds = fixture(10, 20);
    let method = MethodConfig::Graphlet(KernelMethodConfig {
        c_grid: vec![1.0],
        graphlet: GraphletConfig { samples_per_graph: 200, ..Default::default() },
        ..Default::default()
    });
    let r = run_experiment(&ds, &method, &CvConfig { folds: 5, repeats: 1, ..Default::default() }).unwrap();
    assert_eq!(r.folds.len(), 5);
    assert_no_leakage(&r, &["grid-search"]);
    assert!(r.timings.kernel_fill > 0.0);
}

fn tiny_cnn(scope: PcaScope) -> MethodConfig {
    MethodConfig::Cnn(CnnMethodConfig {
        walk: WalkConfig { walks_per_node: 2, walk_length: 10, context_size: 2, ..Default::default() },
        embedding: EmbeddingConfig { dim: 4, ..Default::default() },
        compressed_dim: 2,
        image_size: Some(8),
        pca_scope: scope,
        train: TrainConfig { max_epochs: 2, hidden: 8, ..Default::default() },
        ..Default::default()
    })
}

#[test]
fn cnn_preprocessing_sees_only_training_graphs() {
    let ds = fixture(6, 12);
    let cv = CvConfig { folds: 3, repeats: 1, ..Default::default() };
    let r = run_experiment(&ds, &tiny_cnn(PcaScope::Global), &cv).unwrap();
    assert_eq!(r.folds.len(), 3);
    assert_no_leakage(&r, &["pca", "extent", "early-stopping"]);
    assert_summary_consistent(&r);
    assert!(r.folds.iter().all(|f| f.epochs.is_some_and(|e| e <= 2)));
    let shapes: Vec<_> = r.folds.iter().map(|f| f.image_shape.unwrap().0).collect();
    assert!(shapes.iter().all(|&c| c == 1));

    let r = run_experiment(&ds, &tiny_cnn(PcaScope::PerGraph), &cv).unwrap();
    assert_no_leakage(&r, &["extent", "early-stopping"]);
}

#[test]
fn majority_baseline_and_comparison() {
    let ds = fixture(10, 12);
    let cv = CvConfig { folds: 5, repeats: 3, ..Default::default() };
    let majority = run_experiment(&ds, &MethodConfig::Majority, &cv).unwrap();
    assert_eq!(majority.folds.len(), 15);
    assert!((majority.mean - 0.5).abs() < 1e-12);
    let wl = run_experiment(
        &ds,
        &MethodConfig::Wl(KernelMethodConfig { c_grid: vec![1.0], wl_iterations: vec![2], ..Default::default() }),
        &cv,
    )
    .unwrap();
    let summary = wl.summary(&[&majority]);
    assert_eq!(summary.runs, 15);
    assert_eq!(summary.comparisons.len(), 1);
    assert!(summary.comparisons[0].test.p_value < 0.05, "{:?}", summary.comparisons[0]);
    assert_eq!(wl.timings_csv().lines().count(), 2);
}
