use mudec_core::dsp::{make_windows, WindowSpec, WindowedDataset};
use mudec_core::models::{Mode, Model, ModelConfig, SnnConfig, TcnConfig};
use mudec_core::train::{adam_step, batch_loss, dataset_loss, fit, pearson_r, AdamConfig, FitConfig, OptimizerState};
use mudec_core::{MultiChannelSignal, Units};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two smooth random drives; the target is a lagged, rectified mix of both.
fn toy_dataset(seed: u64, n: usize) -> WindowedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut feats = Array2::<f64>::zeros((2, n));
    for c in 0..2 {
        let mut v = 0.0;
        for t in 0..n {
            v = 0.95 * v + 0.05 * rng.random_range(-1.0..3.0);
            feats[[c, t]] = v;
        }
    }
    let force = Array2::from_shape_fn((1, n), |(_, t)| {
        let l = t.saturating_sub(4);
        (0.7 * feats[[0, l]] + 0.3 * feats[[1, l]]).max(0.0)
    });
    let f = MultiChannelSignal::from_array(feats, 200.0, Units::Dimensionless).unwrap();
    let y = MultiChannelSignal::from_array(force, 200.0, Units::PercentMvf).unwrap();
    make_windows(&f, &y, &WindowSpec { len: 40, stride: 20, shift_ms: 0.0 }).unwrap()
}

fn tiny_tcn() -> ModelConfig {
    ModelConfig::Tcn(TcnConfig { width: 8, kernel: 3, dilations: vec![1, 2], dropout: 0.0, ..TcnConfig::default() })
}

#[test]
fn one_small_adam_step_descends() {
    let data = toy_dataset(1, 2000);
    for cfg in [tiny_tcn(), ModelConfig::Snn(SnnConfig { width: 8, kernel: 3, ..SnnConfig::default() })] {
        let mut model = Model::<f64>::build(&cfg, 2).unwrap();
        let idx: Vec<usize> = (0..16).collect();
        let (before, grads) = batch_loss(&model, &data, &idx, Mode::Eval).unwrap();
        let mut state = OptimizerState::new(model.params());
        let adam = AdamConfig { lr: 1e-5, ..AdamConfig::default() };
        adam_step(model.params_mut(), &grads, &mut state, &adam).unwrap();
        let (after, _) = batch_loss(&model, &data, &idx, Mode::Eval).unwrap();
        assert!(after < before, "{}: {after} >= {before}", cfg.name());
    }
}

#[test]
fn training_improves_validation_loss() {
    let train = toy_dataset(3, 6000);
    let val = toy_dataset(4, 2000);
    let mut model = Model::<f64>::build(&tiny_tcn(), 5).unwrap();
    let start = dataset_loss(&model, &val, 32).unwrap();
    let cfg = FitConfig { max_epochs: 15, batch_size: 16, adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() }, ..FitConfig::default() };
    let report = fit(&mut model, &train, &val, &cfg).unwrap();
    assert!(report.best_val_loss < report.epochs[0].val_loss);
    assert!(report.best_val_loss < 0.5 * start);
    // Restored parameters reproduce the best validation loss.
    let restored = dataset_loss(&model, &val, 32).unwrap();
    assert!((restored - report.best_val_loss).abs() < 1e-12 * report.best_val_loss.max(1.0));
}

#[test]
fn zero_patience_stops_at_first_non_improvement() {
    let train = toy_dataset(6, 3000);
    let val = toy_dataset(7, 1000);
    let mut model = Model::<f64>::build(&tiny_tcn(), 8).unwrap();
    // A large step makes a non-improving epoch likely early on.
    let cfg = FitConfig { max_epochs: 40, patience: 0, adam: AdamConfig { lr: 5e-2, ..AdamConfig::default() }, ..FitConfig::default() };
    let report = fit(&mut model, &train, &val, &cfg).unwrap();
    let mut best = f64::INFINITY;
    let mut first_miss = None;
    for e in &report.epochs {
        if e.val_loss < best - cfg.min_delta {
            best = e.val_loss;
        } else {
            first_miss = Some(e.epoch);
            break;
        }
    }
    assert!(report.stopped_early);
    assert!(first_miss.is_some());
    if let Some(e) = first_miss {
        assert_eq!(report.epochs.len(), e);
    }
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let train = toy_dataset(9, 2000);
    let val = toy_dataset(10, 1000);
    let mut model = Model::<f64>::build(&tiny_tcn(), 11).unwrap();
    let before = model.params().clone();
    let cfg = FitConfig { max_epochs: 3, patience: 5, adam: AdamConfig { lr: 0.0, ..AdamConfig::default() }, ..FitConfig::default() };
    let report = fit(&mut model, &train, &val, &cfg).unwrap();
    let v0 = report.epochs[0].val_loss;
    assert!(report.epochs.iter().all(|e| e.val_loss == v0));
    assert_eq!(model.params().tensors, before.tensors);
}

#[test]
fn mismatched_features_are_rejected() {
    let train = toy_dataset(1, 1000);
    let mut model = Model::<f64>::build(&ModelConfig::Tcn(TcnConfig { in_features: 3, ..TcnConfig::default() }), 0).unwrap();
    assert!(fit(&mut model, &train, &train, &FitConfig::default()).is_err());
}

proptest! {
    #[test]
    fn pearson_is_affine_invariant(
        xs in proptest::collection::vec(-10.0f64..10.0, 3..50),
        a in 0.1f64..5.0,
        b in -5.0f64..5.0,
        noise_seed in 0u64..100,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let ys: Vec<f64> = xs.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
        let r = pearson_r(&xs, &ys).unwrap();
        prop_assume!(!r.undefined);
        let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let r2 = pearson_r(&scaled, &ys).unwrap();
        prop_assert!((r.r - r2.r).abs() < 1e-9);
        let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
        prop_assert!((pearson_r(&flipped, &ys).unwrap().r + r.r).abs() < 1e-9);
    }
}
