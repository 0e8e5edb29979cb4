mod common;

use std::collections::BTreeMap;

use common::{mean_std, rand_tensor, randomize, rng};
use proptest::prelude::*;
use tabattn::datagen::{generate, AugmentFlags, Dataset, Standardizer, SyntheticTaskSpec};
use tabattn::fusion::ModelKind;
use tabattn::model::{ArchConfig, Model, ModelConfig};
use tabattn::ndtensor::{Tape, Tensor};
use tabattn::nn::Session;
use tabattn::train::{
    adam_update, aggregate, cosine_lr, evaluate, fit, fold_hash, metrics, mse_loss, predict_sample, run_ablation,
    run_cv, stratified_folds, summary_csv, AblationVariant, Adam, AdamConfig, Bins, CvReport, FittedModel, Metrics,
    Predictor, TrainConfig,
};
use tabattn::Error;

#[test]
fn adam_first_step_is_lr() {
    let cfg = AdamConfig {
        l2: 0.0,
        ..AdamConfig::default()
    };
    let mut p = [2.0_f64];
    let (mut m, mut v) = ([0.0], [0.0]);
    adam_update(&mut p, &[1.0], &mut m, &mut v, 1, 0.1, &cfg);
    assert!((2.0 - p[0] - 0.1).abs() <= 1e-8);
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let cfg = AdamConfig {
        l2: 0.0,
        ..AdamConfig::default()
    };
    let mut p = [0.3_f64, -1.2];
    let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
    for t in 1..5 {
        adam_update(&mut p, &[0.0, 0.0], &mut m, &mut v, t, 0.1, &cfg);
    }
    assert_eq!(p, [0.3, -1.2]);
}

/// Hand-evaluated two-step recurrence with coupled L2.
#[test]
fn adam_matches_recurrence_with_coupled_l2() {
    let cfg = AdamConfig::default();
    let (lr, l2) = (0.05, cfg.l2);
    let mut p = [1.5_f64];
    let (mut m, mut v) = ([0.0], [0.0]);
    let (mut pe, mut me, mut ve) = (1.5_f64, 0.0, 0.0);
    for (t, g) in [(1u64, 0.4_f64), (2, -0.7)] {
        adam_update(&mut p, &[g], &mut m, &mut v, t, lr, &cfg);
        let ge = g + l2 * pe;
        me = 0.9 * me + 0.1 * ge;
        ve = 0.999 * ve + 0.001 * ge * ge;
        let mh = me / (1.0 - 0.9_f64.powi(t as i32));
        let vh = ve / (1.0 - 0.999_f64.powi(t as i32));
        pe -= lr * mh / (vh.sqrt() + 1e-8);
        assert!((p[0] - pe).abs() <= 1e-15);
    }
}

fn tiny_arch(frames: usize) -> ArchConfig {
    ArchConfig {
        frames,
        ..ArchConfig::tiny()
    }
}

fn tiny_batch(seed: u64, n: usize) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>) {
    let mut r = rng(seed);
    (
        rand_tensor(&mut r, &[n, 1, 4, 12, 12], 0.0, 1.0),
        rand_tensor(&mut r, &[n, 3], -1.0, 1.0),
        rand_tensor(&mut r, &[n], -1.0, 1.0),
    )
}

fn batch_loss(
    model: &mut Model<f64>,
    batch: &(Tensor<f64>, Tensor<f64>, Tensor<f64>),
    adam: Option<(&mut Adam<f64>, f64)>,
) -> f64 {
    let mut s = Session::new(&mut model.store, true);
    let v = s.input(batch.0.clone());
    let t = s.input(batch.1.clone());
    let pred = model.net.forward(&mut s, v, Some(t)).unwrap();
    let y = s.input(batch.2.clone());
    let loss = mse_loss(&mut s.tape, pred, y).unwrap();
    let value = s.tape.value(loss).item();
    let grads = s.gradients(loss).unwrap();
    drop(s);
    if let Some((adam, lr)) = adam {
        adam.step(&mut model.store, &grads, lr);
    }
    value
}

#[test]
fn adam_trajectories_are_bitwise_repeatable() {
    let run = || {
        let mut model = Model::<f64>::new(ModelConfig::new(ModelKind::Tabattention, ArchConfig::tiny()), 4).unwrap();
        let batch = tiny_batch(5, 3);
        let mut adam = Adam::new(AdamConfig::default());
        let losses: Vec<u64> = (0..4)
            .map(|_| batch_loss(&mut model, &batch, Some((&mut adam, 1e-2))).to_bits())
            .collect();
        let mut ckpt = Vec::new();
        model.store.write_checkpoint(&mut ckpt).unwrap();
        (losses, ckpt, adam.steps_taken())
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.2, 4);
}

#[test]
fn loss_never_rises_under_tiny_steps() {
    for seed in 0..5 {
        let mut model = Model::<f64>::new(ModelConfig::new(ModelKind::Tabattention, ArchConfig::tiny()), seed).unwrap();
        let batch = tiny_batch(100 + seed, 4);
        let mut adam = Adam::new(AdamConfig::default());
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let loss = batch_loss(&mut model, &batch, Some((&mut adam, 1e-5)));
            assert!(loss <= prev + 1e-9, "seed {seed}: {loss} after {prev}");
            prev = loss;
        }
    }
}

#[test]
fn cosine_schedule() {
    assert_eq!(cosine_lr(0, 251, 1e-3, 1e-6).unwrap(), 1e-3);
    assert_eq!(cosine_lr(250, 251, 1e-3, 1e-6).unwrap(), 1e-6);
    assert_eq!(cosine_lr(29, 30, 0.01, 0.0).unwrap(), 0.0);
    let mid = cosine_lr(125, 251, 1e-3, 1e-6).unwrap();
    assert!((mid - (1e-3 + 1e-6) / 2.0).abs() <= 1e-15);
    assert_eq!(cosine_lr(0, 1, 0.5, 0.0).unwrap(), 0.5);
    assert!(matches!(
        cosine_lr(251, 251, 1e-3, 0.0),
        Err(Error::InvalidEpoch { .. })
    ));
    for e in 1..250 {
        assert!(cosine_lr(e, 251, 1e-3, 0.0).unwrap() < cosine_lr(e - 1, 251, 1e-3, 0.0).unwrap());
    }
}

#[test]
fn mse_loss_matches_loop() {
    let mut r = rng(70);
    for _ in 0..20 {
        let p = rand_tensor(&mut r, &[7], -3.0, 3.0);
        let y = rand_tensor(&mut r, &[7], -3.0, 3.0);
        let mut tape = Tape::<f64>::new();
        let (pv, yv) = (tape.constant(p.clone()), tape.constant(y.clone()));
        let l = mse_loss(&mut tape, pv, yv).unwrap();
        let oracle = p.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 7.0;
        assert!((tape.value(l).item() - oracle).abs() <= 1e-12);
    }
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::new(&[2], vec![1.0, -1.0]).unwrap());
    let z = tape.constant(Tensor::zeros(&[2]).unwrap());
    let l = mse_loss(&mut tape, a, z).unwrap();
    assert_eq!(tape.value(l).item(), 1.0);
    let l = mse_loss(&mut tape, a, a).unwrap();
    assert_eq!(tape.value(l).item(), 0.0);
    let bad = tape.constant(Tensor::zeros(&[3]).unwrap());
    assert!(matches!(mse_loss(&mut tape, a, bad), Err(Error::ShapeMismatch(_))));
}

fn metrics_oracle(p: &[f64], t: &[f64]) -> (f64, f64, f64) {
    let n = p.len() as f64;
    let mut out = (0.0, 0.0, 0.0);
    for i in 0..p.len() {
        let e = p[i] - t[i];
        out.0 += e.abs() / n;
        out.1 += e * e / n;
        out.2 += 100.0 * e.abs() / t[i] / n;
    }
    (out.0, out.1.sqrt(), out.2)
}

#[test]
fn metrics_match_loop_oracle() {
    let mut r = rng(71);
    for _ in 0..50 {
        let t = rand_tensor(&mut r, &[9], 500.0, 5000.0);
        let p = rand_tensor(&mut r, &[9], 0.0, 6000.0);
        let m = metrics(p.data(), t.data()).unwrap();
        let (mae, rmse, mape) = metrics_oracle(p.data(), t.data());
        assert!((m.mae - mae).abs() <= 1e-12 * mae.max(1.0));
        assert!((m.rmse - rmse).abs() <= 1e-12 * rmse.max(1.0));
        assert!((m.mape - mape).abs() <= 1e-12 * mape.max(1.0));
    }
    let t = [100.0, 200.0, 300.0];
    assert_eq!(
        metrics(&t, &t).unwrap(),
        Metrics {
            mae: 0.0,
            rmse: 0.0,
            mape: 0.0
        }
    );
    let p: Vec<f64> = t.iter().map(|x| x * 1.05).collect();
    assert!((metrics(&p, &t).unwrap().mape - 5.0).abs() <= 1e-12);
    assert!(matches!(metrics(&[1.0], &[0.0]), Err(Error::NonPositiveTarget(_))));
    assert!(metrics(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn aggregate_is_mean_and_population_std() {
    let m = Metrics {
        mae: 3.0,
        rmse: 4.0,
        mape: 5.0,
    };
    let (mean, std) = aggregate(&[m; 5]);
    assert_eq!(mean, m);
    assert_eq!(
        std,
        Metrics {
            mae: 0.0,
            rmse: 0.0,
            mape: 0.0
        }
    );
    let all: Vec<Metrics> = [1.0, 2.0, 4.0, 9.0]
        .iter()
        .map(|&x| Metrics {
            mae: x,
            rmse: 2.0 * x,
            mape: x,
        })
        .collect();
    let (mean, std) = aggregate(&all);
    let (om, os) = mean_std(&[1.0, 2.0, 4.0, 9.0]);
    assert!((mean.mae - om).abs() <= 1e-12 && (std.mae - os).abs() <= 1e-12);
    assert!((std.rmse - 2.0 * os).abs() <= 1e-12);
}

fn synthetic_targets(n: usize) -> Vec<f64> {
    let spec = SyntheticTaskSpec {
        n_samples: n,
        height: 8,
        width: 8,
        frames_max: 16,
        ..SyntheticTaskSpec::default()
    };
    generate(&spec, 21).unwrap().targets()
}

fn check_partition(targets: &[f64], folds: &[usize], k: usize, bins: &Bins) {
    assert_eq!(folds.len(), targets.len());
    assert!(folds.iter().all(|&f| f < k));
    let bin_of = bins.assign(targets).unwrap();
    for b in 0..=*bin_of.iter().max().unwrap() {
        let counts: Vec<usize> = (0..k)
            .map(|f| (0..folds.len()).filter(|&i| bin_of[i] == b && folds[i] == f).count())
            .collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "bin {b}: {counts:?}");
    }
}

#[test]
fn five_folds_on_96_samples() {
    let targets = synthetic_targets(96);
    let folds = stratified_folds(&targets, 5, &Bins::Tertiles, 0).unwrap();
    let sizes: Vec<usize> = (0..5).map(|f| folds.iter().filter(|&&x| x == f).count()).collect();
    assert!(sizes.iter().all(|s| *s == 19 || *s == 20), "{sizes:?}");
    assert_eq!(sizes.iter().sum::<usize>(), 96);
    check_partition(&targets, &folds, 5, &Bins::Tertiles);
    assert_eq!(folds, stratified_folds(&targets, 5, &Bins::Tertiles, 0).unwrap());
    assert_eq!(fold_hash(&folds).len(), 64);
}

#[test]
fn single_bin_splits_evenly() {
    let targets: Vec<f64> = (1..=10).map(f64::from).collect();
    let folds = stratified_folds(&targets, 5, &Bins::Thresholds(vec![]), 3).unwrap();
    for f in 0..5 {
        assert_eq!(folds.iter().filter(|&&x| x == f).count(), 2);
    }
}

#[test]
fn small_bins_reach_every_fold_when_large_enough() {
    let targets = [1.0, 2.0, 3.0, 11.0, 12.0, 13.0, 14.0, 21.0, 22.0, 23.0];
    let bins = Bins::Thresholds(vec![10.0, 20.0]);
    let bin_of = bins.assign(&targets).unwrap();
    assert_eq!(bin_of, vec![0, 0, 0, 1, 1, 1, 1, 2, 2, 2]);
    for seed in 0..20 {
        let folds = stratified_folds(&targets, 3, &bins, seed).unwrap();
        for b in 0..3 {
            for f in 0..3 {
                assert!(
                    (0..10).any(|i| bin_of[i] == b && folds[i] == f),
                    "seed {seed} bin {b} fold {f}"
                );
            }
        }
        check_partition(&targets, &folds, 3, &bins);
    }
}

#[test]
fn fold_errors() {
    assert!(matches!(
        stratified_folds(&[1.0, 2.0], 5, &Bins::Tertiles, 0),
        Err(Error::TooFewSamples { .. })
    ));
    assert!(stratified_folds(&[1.0, 2.0, 3.0], 1, &Bins::Tertiles, 0).is_err());
    assert!(Bins::Thresholds(vec![2.0, 1.0]).assign(&[1.0]).is_err());
}

fn allocation(targets: &[f64], folds: &[usize], bins: &Bins, k: usize) -> Vec<(usize, Vec<usize>)> {
    let bin_of = bins.assign(targets).unwrap();
    let mut out: Vec<(usize, Vec<usize>)> = (0..3)
        .map(|b| {
            let mut sizes: Vec<usize> = (0..k)
                .map(|f| (0..targets.len()).filter(|&i| bin_of[i] == b && folds[i] == f).count())
                .collect();
            sizes.sort_unstable();
            (b, sizes)
        })
        .collect();
    out.sort();
    out
}

fn spec_16(n: usize) -> SyntheticTaskSpec {
    SyntheticTaskSpec {
        n_samples: n,
        height: 12,
        width: 12,
        frames_min: 16,
        frames_max: 20,
        tab_dim: 3,
        ..SyntheticTaskSpec::default()
    }
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 4,
        lr: 1e-2,
        augment: AugmentFlags::ALL,
        ..TrainConfig::default()
    }
}

#[test]
fn predict_sample_averages_tail_rule_segments() {
    let mut model = Model::<f64>::new(ModelConfig::new(ModelKind::Tabattention, tiny_arch(16)), 8).unwrap();
    randomize(&mut model.store, &mut rng(72), 0.3);
    let mut r = rng(73);
    let video = rand_tensor(&mut r, &[40, 1, 12, 12], 0.0, 1.0);
    let tab = rand_tensor(&mut r, &[3], -1.0, 1.0);
    let got = predict_sample(&mut model, &video, Some(&tab)).unwrap();
    let mut manual = 0.0;
    for start in [0, 16, 24] {
        let seg = Tensor::new(
            &[1, 1, 16, 12, 12],
            video.data()[start * 144..(start + 16) * 144].to_vec(),
        )
        .unwrap();
        let t = Tensor::new(&[1, 3], tab.data().to_vec()).unwrap();
        manual += model.predict(&seg, Some(&t)).unwrap()[0] / 3.0;
    }
    assert!((got - manual).abs() <= 1e-12);

    let single = Tensor::new(&[16, 1, 12, 12], video.data()[..16 * 144].to_vec()).unwrap();
    let seg = single.reshape(&[1, 1, 16, 12, 12]).unwrap();
    let t = tab.reshape(&[1, 3]).unwrap();
    assert_eq!(
        predict_sample(&mut model, &single, Some(&tab)).unwrap(),
        model.predict(&seg, Some(&t)).unwrap()[0]
    );
    let short = Tensor::zeros(&[12, 1, 12, 12]).unwrap();
    assert!(matches!(
        predict_sample(&mut model, &short, Some(&tab)),
        Err(Error::TooShort { .. })
    ));
}

#[test]
fn fit_standardizes_on_training_rows_only() {
    let ds = generate(&spec_16(12), 4).unwrap();
    let train: Vec<usize> = (0..8).collect();
    let config = ModelConfig::new(ModelKind::Tabattention, tiny_arch(16));
    let cfg = TrainConfig {
        epochs: 1,
        ..quick_cfg()
    };
    let (fitted, curve) = fit(&ds, &train, &config, &cfg, 1).unwrap();
    assert_eq!(curve.len(), 1);
    let oracle = Standardizer::fit(&ds.tab_matrix(&train).unwrap()).unwrap();
    assert_eq!(fitted.tab_scaler, oracle);
    let everything = Standardizer::fit(&ds.tab_matrix(&(0..12).collect::<Vec<_>>()).unwrap()).unwrap();
    assert_ne!(fitted.tab_scaler.mean, everything.mean);
    let (m, s) = mean_std(&train.iter().map(|&i| ds.samples[i].target).collect::<Vec<_>>());
    assert!((fitted.target_scale.mean - m).abs() <= 1e-9 && (fitted.target_scale.std - s).abs() <= 1e-9);
}

#[test]
fn linreg_fit_has_no_network() {
    let ds = generate(&spec_16(20), 4).unwrap();
    let config = ModelConfig::new(ModelKind::TabularLinreg, tiny_arch(16));
    let (mut fitted, curve) = fit(&ds, &(0..15).collect::<Vec<_>>(), &config, &quick_cfg(), 0).unwrap();
    assert!(curve.is_empty());
    assert!(matches!(fitted.predictor, Predictor::Linreg(_)));
    let (preds, m) = evaluate(&mut fitted, &ds, &[15, 16, 17, 18, 19]).unwrap();
    assert_eq!(preds.len(), 5);
    assert!(m.mape.is_finite());
}

#[test]
fn fitted_models_survive_save_and_load() {
    let ds = generate(&spec_16(10), 6).unwrap();
    let config = ModelConfig::new(ModelKind::Tabattention, tiny_arch(16));
    let (mut fitted, _) = fit(&ds, &(0..8).collect::<Vec<_>>(), &config, &quick_cfg(), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    fitted.save(dir.path()).unwrap();
    assert!(dir.path().join("model.ckpt").is_file());
    let mut loaded = FittedModel::load(dir.path()).unwrap();
    for s in &ds.samples[8..] {
        assert_eq!(
            fitted.predict(s).unwrap().to_bits(),
            loaded.predict(s).unwrap().to_bits()
        );
    }
}

fn cv_dataset() -> Dataset {
    generate(&spec_16(15), 8).unwrap()
}

#[test]
fn run_cv_is_deterministic_and_self_consistent() {
    let ds = cv_dataset();
    let config = ModelConfig::new(ModelKind::Tabattention, tiny_arch(16));
    let cfg = quick_cfg();
    let a = run_cv(&ds, "full", &config, &cfg, 1).unwrap().report;
    let b = run_cv(&ds, "full", &config, &cfg, 2).unwrap().report;
    assert_eq!(a, b);
    assert_eq!(a.folds.len(), 5);

    let assignment = stratified_folds(&ds.targets(), 5, &Bins::Tertiles, cfg.seed).unwrap();
    assert_eq!(a.fold_hash, fold_hash(&assignment));
    let mut seen = BTreeMap::new();
    for f in &a.folds {
        assert_eq!(f.recompute().unwrap(), f.metrics);
        assert_eq!(f.loss_curve.len(), cfg.epochs);
        assert_eq!(f.train_size + f.predictions.len(), ds.len());
        for p in &f.predictions {
            assert!(seen.insert(p.id.clone(), f.fold).is_none());
            let i = ds.samples.iter().position(|s| s.id == p.id).unwrap();
            assert_eq!(assignment[i], f.fold);
        }
    }
    assert_eq!(seen.len(), ds.len());
    let (mean, std) = aggregate(&a.folds.iter().map(|f| f.metrics).collect::<Vec<_>>());
    assert_eq!((mean, std), (a.mean, a.std));

    let json = serde_json::to_string(&a).unwrap();
    let back: CvReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
}

#[test]
fn fold_subset_and_validation() {
    let ds = cv_dataset();
    let config = ModelConfig::new(ModelKind::TabularLinreg, tiny_arch(16));
    let cfg = TrainConfig {
        folds: Some(vec![0, 3]),
        ..quick_cfg()
    };
    let rep = run_cv(&ds, "linreg", &config, &cfg, 1).unwrap().report;
    assert_eq!(rep.folds.iter().map(|f| f.fold).collect::<Vec<_>>(), vec![0, 3]);
    assert!(!rep.uses_images && rep.uses_tab);

    for bad in [
        TrainConfig {
            batch_size: 1,
            ..quick_cfg()
        },
        TrainConfig {
            epochs: 0,
            ..quick_cfg()
        },
        TrainConfig {
            folds: Some(vec![7]),
            ..quick_cfg()
        },
        TrainConfig { lr: 0.0, ..quick_cfg() },
    ] {
        assert!(matches!(
            run_cv(&ds, "x", &config, &bad, 1),
            Err(Error::InvalidConfig(_))
        ));
    }
    let wrong = ModelConfig::new(
        ModelKind::Tabattention,
        ArchConfig {
            input_size: 16,
            ..tiny_arch(16)
        },
    );
    assert!(run_cv(&ds, "x", &wrong, &quick_cfg(), 1).is_err());
}

#[test]
fn ablation_rows_share_partitions() {
    let ds = cv_dataset();
    let cfg = TrainConfig {
        epochs: 1,
        folds: Some(vec![1]),
        ..quick_cfg()
    };
    let runs = run_ablation(&ds, &tiny_arch(16), &cfg, &AblationVariant::ALL, 1).unwrap();
    let reports: Vec<CvReport> = runs.into_iter().map(|r| r.report).collect();
    let labels: Vec<&str> = reports.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(labels, ["baseline", "+TAM", "+CBAM+Tab", "+TAM+Tab", "TabAttention"]);
    assert!(reports.iter().all(|r| r.fold_hash == reports[0].fold_hash));
    let tab: Vec<bool> = reports.iter().map(|r| r.uses_tab).collect();
    assert_eq!(tab, [false, false, true, true, true]);

    let csv = summary_csv(&reports);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,img,tab,mMAE,sMAE,mRMSE,sRMSE,mMAPE,sMAPE,fold_hash");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("baseline,✓,✗,"));
    assert!(lines[5].starts_with("TabAttention,✓,✓,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn folds_are_balanced_partitions(seed in 0u64..10_000, n in 10usize..80, k in 2usize..6) {
        let mut r = rng(seed);
        let targets = rand_tensor(&mut r, &[n], 1.0, 100.0).into_data();
        let folds = stratified_folds(&targets, k, &Bins::Tertiles, seed).unwrap();
        check_partition(&targets, &folds, k, &Bins::Tertiles);
        let sizes: Vec<usize> = (0..k).map(|f| folds.iter().filter(|&&x| x == f).count()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn fold_allocation_ignores_input_order(seed in 0u64..10_000, order in Just((0..30).collect::<Vec<usize>>()).prop_shuffle()) {
        let mut r = rng(seed);
        let targets = rand_tensor(&mut r, &[30], 1.0, 100.0).into_data();
        let permuted: Vec<f64> = order.iter().map(|&i| targets[i]).collect();
        let a = stratified_folds(&targets, 5, &Bins::Tertiles, seed).unwrap();
        let b = stratified_folds(&permuted, 5, &Bins::Tertiles, seed).unwrap();
        prop_assert_eq!(allocation(&targets, &a, &Bins::Tertiles, 5), allocation(&permuted, &b, &Bins::Tertiles, 5));
    }

    #[test]
    fn metrics_oracle_property(seed in 0u64..10_000, n in 1usize..40) {
        let mut r = rng(seed);
        let t = rand_tensor(&mut r, &[n], 0.5, 10.0);
        let p = rand_tensor(&mut r, &[n], -10.0, 20.0);
        let m = metrics(p.data(), t.data()).unwrap();
        let (mae, rmse, mape) = metrics_oracle(p.data(), t.data());
        prop_assert!((m.mae - mae).abs() <= 1e-12 * mae.max(1.0));
        prop_assert!((m.rmse - rmse).abs() <= 1e-12 * rmse.max(1.0));
        prop_assert!((m.mape - mape).abs() <= 1e-12 * mape.max(1.0));
    }

    #[test]
    fn cosine_stays_between_bounds(total in 2usize..300, lr0 in 1e-5f64..1.0, frac in 0.0f64..1.0) {
        let lr_min = lr0 * frac;
        for e in 0..total {
            let lr = cosine_lr(e, total, lr0, lr_min).unwrap();
            prop_assert!(lr >= lr_min && lr <= lr0);
        }
        prop_assert_eq!(cosine_lr(total - 1, total, lr0, lr_min).unwrap(), lr_min);
    }
}
