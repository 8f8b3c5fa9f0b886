use class_uncertainty::datasets::{
    balanced_test_split, GeneratorSpec, LongTailGenerator, SemanticSpec,
};
use class_uncertainty::ensemble::{measure_class_uncertainty, train_ensemble, EnsemblePredictions};
use class_uncertainty::measures::cardinality_measure;
use class_uncertainty::nn::{encode_model, init_model, Matrix, MlpModel};
use class_uncertainty::trainer::{
    argmax, evaluate, run, train_stages, Mitigation, MitigationSpec, ModelConfig, OptimConfig,
    SamplerKind, TrainConfig, WeightSource,
};
use class_uncertainty::{Dataset, Error};

fn config(hidden: usize, epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            hidden: vec![hidden],
        },
        optim: OptimConfig {
            learning_rate: lr,
            epochs,
            batch_size: 32,
            ..OptimConfig::default()
        },
    }
}

fn two_class(spacing: f64, noise: f64) -> GeneratorSpec {
    GeneratorSpec::LongTail(LongTailGenerator {
        num_classes: 2,
        n_bar: 200,
        imbalance_ratio: 1.0,
        dim: 2,
        noise,
        spacing,
    })
}

fn small_long_tail() -> GeneratorSpec {
    GeneratorSpec::LongTail(LongTailGenerator {
        num_classes: 4,
        n_bar: 80,
        imbalance_ratio: 8.0,
        dim: 4,
        noise: 1.0,
        spacing: 3.0,
    })
}

#[test]
fn well_separated_classes_are_learned() {
    let g = two_class(20.0, 0.5);
    let train = g.generate_train::<f64>(1).unwrap();
    let test = balanced_test_split::<f64>(&g, 500, 1).unwrap();
    let cfg = config(16, 10, 0.05);
    let (_, _, r) = run(&train, &test, &cfg, &MitigationSpec::naive(10), 3, None).unwrap();
    assert!(r.top1_error < 1.0, "error {}", r.top1_error);
}

#[test]
fn easy_two_class_data_within_sixty_epochs() {
    let g = two_class(4.0, 1.0);
    let train = g.generate_train::<f64>(2).unwrap();
    let test = balanced_test_split::<f64>(&g, 500, 2).unwrap();
    let cfg = config(16, 60, 0.05);
    let (_, _, r) = run(&train, &test, &cfg, &MitigationSpec::naive(60), 4, None).unwrap();
    assert!(r.top1_error < 5.0, "error {}", r.top1_error);
    assert_eq!(r.epochs_run, 60);
    assert_eq!(r.loss_curve.len(), 60);
}

#[test]
fn hard_family_has_higher_error() {
    let g = GeneratorSpec::Semantic(SemanticSpec {
        num_easy: 3,
        num_hard: 3,
        per_class_count: 60,
        dim: 6,
        easy_noise: 0.4,
        hard_noise: 1.6,
        class_center_spacing: 3.0,
    });
    let cfg = config(32, 20, 0.05);
    let (mut hard, mut easy) = (0.0, 0.0);
    for seed in 0..5 {
        let train = g.generate_train::<f64>(100 + seed).unwrap();
        let test = balanced_test_split::<f64>(&g, 100, 100 + seed).unwrap();
        let (_, _, r) = run(&train, &test, &cfg, &MitigationSpec::naive(20), seed, None).unwrap();
        hard += r.per_class_error[..3].iter().sum::<f64>();
        easy += r.per_class_error[3..].iter().sum::<f64>();
    }
    assert!(hard > easy, "hard {hard} easy {easy}");
}

#[test]
fn zero_epochs_return_the_initial_model() {
    let train = small_long_tail().generate_train::<f64>(5).unwrap();
    let cfg = config(8, 0, 0.1);
    let (model, log) = train_stages(&train, &cfg, &MitigationSpec::naive(0), 9, None).unwrap();
    assert_eq!(model, init_model::<f64>(&[4, 8, 4], 9).unwrap());
    assert_eq!(log.epochs_run, 0);
}

#[test]
fn empty_second_stage_equals_one_stage_naive() {
    let train = small_long_tail().generate_train::<f64>(6).unwrap();
    let cfg = config(8, 4, 0.05);
    let stage2 = Mitigation::with_sampler(SamplerKind::ClassBalanced);
    let two = MitigationSpec::two_stage(4, 0, stage2);
    let (a, _) = train_stages(&train, &cfg, &two, 1, None).unwrap();
    let (b, _) = train_stages(&train, &cfg, &MitigationSpec::naive(4), 1, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn class_balanced_sampling_on_balanced_data_is_naive() {
    let g = two_class(3.0, 1.0);
    let train = g.generate_train::<f64>(7).unwrap();
    let cfg = config(8, 3, 0.05);
    let cb = MitigationSpec::one_stage(Mitigation::with_sampler(SamplerKind::ClassBalanced), 3);
    let (a, _) = train_stages(&train, &cfg, &cb, 2, None).unwrap();
    let (b, _) = train_stages(&train, &cfg, &MitigationSpec::naive(3), 2, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn second_stage_reweighting_uses_uncertainty_weights() {
    let train = small_long_tail().generate_train::<f64>(8).unwrap();
    let cfg = config(8, 3, 0.05);
    let (report, _) = measure_class_uncertainty(&train, &cfg, 2, 50).unwrap();
    let measure = report.measure();
    let spec = MitigationSpec::two_stage(2, 3, Mitigation::with_weights(WeightSource::Uncertainty));
    let (_, log) = train_stages(&train, &cfg, &spec, 3, Some(&measure)).unwrap();
    assert_eq!(log.epochs_run, 5);
    assert!(!log.stages[0].mitigation_active);
    assert!(log.stages[1].mitigation_active);
    let w = log.stages[1].loss.weights.as_ref().unwrap();
    for (got, mu) in w.values().iter().zip(&measure.normalized) {
        assert!((got - mu * 4.0).abs() < 1e-12);
    }
}

#[test]
fn progressive_sampling_is_traced_per_stage() {
    let train = small_long_tail().generate_train::<f64>(9).unwrap();
    let cfg = config(8, 5, 0.05);
    let spec = MitigationSpec::one_stage(Mitigation::with_sampler(SamplerKind::ProgressiveBalanced), 5);
    let (_, log) = train_stages(&train, &cfg, &spec, 4, None).unwrap();
    let trace = &log.stages[0];
    let natural = cardinality_measure::<f64>(&train.class_counts()).unwrap();
    assert_eq!(natural.num_classes(), 4);
    let first = trace.first_alpha.as_ref().unwrap().values();
    let n: f64 = train.len() as f64;
    for (a, &c) in first.iter().zip(&train.class_counts()) {
        assert!((a - c as f64 / n).abs() < 1e-15);
    }
    let last = trace.last_alpha.as_ref().unwrap().values();
    // Last epoch index is 4 of 5: 80% of the way to uniform.
    for (a, &c) in last.iter().zip(&train.class_counts()) {
        let want = 0.2 * c as f64 / n + 0.8 * 0.25;
        assert!((a - want).abs() < 1e-12);
    }
}

#[test]
fn uncertainty_methods_need_a_measure() {
    let train = small_long_tail().generate_train::<f64>(10).unwrap();
    let spec = MitigationSpec::one_stage(Mitigation::with_sampler(SamplerKind::Uncertainty), 2);
    let err = train_stages(&train, &config(8, 2, 0.05), &spec, 0, None).unwrap_err();
    assert!(matches!(err, Error::MeasureRequired(_)));
    assert_eq!(err.category(), "measure-required");
}

#[test]
fn exploding_learning_rate_is_reported() {
    let train = small_long_tail().generate_train::<f64>(11).unwrap();
    let err = train_stages(&train, &config(8, 5, 1e200), &MitigationSpec::naive(5), 0, None)
        .unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn training_is_deterministic_per_seed() {
    let train = small_long_tail().generate_train::<f64>(12).unwrap();
    let cfg = config(8, 3, 0.05);
    let spec = MitigationSpec::naive(3);
    let (a, la) = train_stages(&train, &cfg, &spec, 5, None).unwrap();
    let (b, lb) = train_stages(&train, &cfg, &spec, 5, None).unwrap();
    assert_eq!(encode_model(&a), encode_model(&b));
    assert_eq!(la, lb);
    let (c, _) = train_stages(&train, &cfg, &spec, 6, None).unwrap();
    assert_ne!(a, c);
}

#[test]
fn ensembles_are_reproducible_and_diverse() {
    let train = small_long_tail().generate_train::<f64>(13).unwrap();
    let cfg = config(8, 2, 0.05);
    let a = train_ensemble(&train, &cfg, 3, 100).unwrap();
    let b = train_ensemble(&train, &cfg, 3, 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
    assert_ne!(a[1], a[2]);

    let single = train_ensemble(&train, &cfg, 1, 100).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0], a[0]);
    let preds = EnsemblePredictions::from_models(&single, train.features()).unwrap();
    let (report, _) = measure_class_uncertainty(&train, &cfg, 1, 100).unwrap();
    for (i, u) in report.per_example_u.iter().enumerate() {
        let h = class_uncertainty::ensemble::predictive_entropy(preds.row(0, i)).unwrap();
        assert!((u - h).abs() < 1e-12);
    }
    assert!(report.epistemic_mi.unwrap().iter().all(|&m| m == 0.0));
    assert!((report.class_normalized.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn evaluation_matches_counting_oracle() {
    let g = small_long_tail();
    let test = balanced_test_split::<f64>(&g, 30, 14).unwrap();
    let model = init_model::<f64>(&[4, 6, 4], 77).unwrap();
    let eval = evaluate(&model, &test).unwrap();
    let logits = model.forward(test.features()).unwrap();
    let mut wrong = [0usize; 4];
    for (i, &y) in test.labels().iter().enumerate() {
        if argmax(logits.row(i)) != y {
            wrong[y] += 1;
        }
    }
    for c in 0..4 {
        assert_eq!(eval.per_class_error[c], 100.0 * wrong[c] as f64 / 30.0);
    }
    let total: usize = wrong.iter().sum();
    assert_eq!(eval.top1_error, 100.0 * total as f64 / 120.0);

    // Constant predictor: bias on class 0 only.
    let constant = MlpModel::from_parts(
        vec![Matrix::zeros(4, 4)],
        vec![vec![1.0, 0.0, 0.0, 0.0]],
        model.activation(),
    )
    .unwrap();
    assert_eq!(evaluate(&constant, &test).unwrap().top1_error, 75.0);
}

#[test]
fn test_split_ignores_training_imbalance() {
    let g = small_long_tail();
    let a = balanced_test_split::<f64>(&g, 25, 3).unwrap();
    let b = balanced_test_split::<f64>(&g.with_imbalance_ratio(1.0).unwrap(), 25, 3).unwrap();
    assert_eq!(a.class_counts(), vec![25; 4]);
    assert_eq!(a, b);
}

#[test]
fn single_precision_pipeline() {
    let g = two_class(4.0, 1.0);
    let train: Dataset<f32> = g.generate_train(2).unwrap();
    let test: Dataset<f32> = balanced_test_split(&g, 200, 2).unwrap();
    let cfg = config(16, 20, 0.05);
    let (report, _) = measure_class_uncertainty(&train, &cfg, 2, 10).unwrap();
    let measure = report.measure();
    let spec = MitigationSpec::one_stage(Mitigation::with_weights(WeightSource::Uncertainty), 20);
    let (_, _, r) = run(&train, &test, &cfg, &spec, 1, Some(&measure)).unwrap();
    assert!(r.top1_error < 5.0, "error {}", r.top1_error);
    assert!((measure.normalized.iter().sum::<f32>() - 1.0).abs() < 1e-5);
}
