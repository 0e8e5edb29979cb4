use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folds::{fold_hash, stratified_folds, Bins};
use super::metrics::{aggregate, metrics, mse_loss, Metrics};
use super::optim::{cosine_lr, Adam, AdamConfig};
use crate::datagen::{augment, segment, segment_starts, AugmentFlags, Dataset, Sample, Standardizer};
use crate::error::{Error, Result};
use crate::fusion::{LinearRegression, ModelKind};
use crate::model::{Model, ModelConfig};
use crate::ndtensor::Tensor;
use crate::nn::Session;

/// Learning rates searched when no explicit rate is given.
pub const LR_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Mixes seed components into one 64-bit seed (SplitMix64 finalizer per part).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub augment: AugmentFlags,
    pub k: usize,
    pub bins: Bins,
    /// Ridge penalty for the tabular linear regression.
    pub ridge: f64,
    /// Train on z-scored targets (train-fold statistics).
    pub standardize_target: bool,
    /// Subset of folds to run; all when absent.
    pub folds: Option<Vec<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: 1e-3,
            lr_min: 0.0,
            weight_decay: 1e-4,
            seed: 0,
            augment: AugmentFlags::ALL,
            k: 5,
            bins: Bins::Tertiles,
            ridge: 1e-8,
            standardize_target: true,
            folds: None,
        }
    }
}

impl TrainConfig {
    pub fn paper_scale() -> Self {
        Self {
            epochs: 250,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!(
                "batch_size {} < 2 (batch statistics need two samples)",
                self.batch_size
            ));
        }
        if !(self.lr > 0.0) || !(self.lr_min >= 0.0) || self.lr_min > self.lr {
            return bad(format!("learning rates lr={} lr_min={} invalid", self.lr, self.lr_min));
        }
        if !(self.weight_decay >= 0.0) || !(self.ridge >= 0.0) {
            return bad("penalties must be >= 0".into());
        }
        if self.k < 2 {
            return bad(format!("k = {} folds", self.k));
        }
        if let Some(f) = &self.folds {
            if f.is_empty() || f.iter().any(|&i| i >= self.k) {
                return bad(format!("fold subset {f:?} outside 0..{}", self.k));
            }
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            l2: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Mean of the model's raw outputs over every segment of `video[T0,1,H,W]`.
pub fn predict_sample(model: &mut Model<f64>, video: &Tensor<f64>, tab: Option<&Tensor<f64>>) -> Result<f64> {
    let frames = model.config().arch.frames;
    let segs = segment(video, frames)?;
    let s = segs.len();
    let (h, w) = (video.shape()[2], video.shape()[3]);
    let mut data = Vec::with_capacity(s * frames * h * w);
    for seg in &segs {
        data.extend_from_slice(seg.data());
    }
    let batch = Tensor::new(&[s, 1, frames, h, w], data)?;
    let tabs = match tab {
        Some(t) if model.config().uses_tab() => {
            let d = t.numel();
            let rows: Vec<f64> = (0..s).flat_map(|_| t.data().iter().copied()).collect();
            Some(Tensor::new(&[s, d], rows)?)
        }
        _ => None,
    };
    let preds = model.predict(&batch, tabs.as_ref())?;
    Ok(preds.iter().sum::<f64>() / s as f64)
}

/// Affine target transform learned on the training fold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl TargetScale {
    pub const IDENTITY: Self = Self { mean: 0.0, std: 1.0 };

    fn fit(y: &[f64]) -> Self {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Clone, Debug)]
pub enum Predictor {
    Network(Box<Model<f64>>),
    Linreg(LinearRegression),
}

/// A trained fold model with the preprocessing fitted on its training rows.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub config: ModelConfig,
    pub predictor: Predictor,
    pub tab_scaler: Standardizer,
    pub target_scale: TargetScale,
}

#[derive(Serialize, Deserialize)]
struct FittedMeta {
    config: ModelConfig,
    tab_scaler: Standardizer,
    target_scale: TargetScale,
    linreg_weights: Option<Vec<f64>>,
}

const META_FILE: &str = "model.json";
const CHECKPOINT_FILE: &str = "model.ckpt";

impl FittedModel {
    fn standardized_tab(&self, sample: &Sample) -> Result<Tensor<f64>> {
        let row = sample.tab.reshape(&[1, sample.tab.numel()])?;
        self.tab_scaler.apply(&row)?.reshape(&[sample.tab.numel()])
    }

    /// Segment-averaged prediction in target units.
    pub fn predict(&mut self, sample: &Sample) -> Result<f64> {
        let tab = self.standardized_tab(sample)?;
        match &mut self.predictor {
            Predictor::Linreg(r) => Ok(r.predict_row(tab.data())),
            Predictor::Network(m) => {
                let z = predict_sample(m, &sample.video, Some(&tab))?;
                Ok(self.target_scale.inverse(z))
            }
        }
    }

    /// Writes `model.json` and, for networks, `model.ckpt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = FittedMeta {
            config: self.config.clone(),
            tab_scaler: self.tab_scaler.clone(),
            target_scale: self.target_scale,
            linreg_weights: match &self.predictor {
                Predictor::Linreg(r) => Some(r.weights.clone()),
                Predictor::Network(_) => None,
            },
        };
        fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
        if let Predictor::Network(m) = &self.predictor {
            m.store.save(&dir.join(CHECKPOINT_FILE))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: FittedMeta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)?;
        let predictor = match meta.linreg_weights {
            Some(weights) => Predictor::Linreg(LinearRegression { weights }),
            None => {
                let mut m = Model::new(meta.config.clone(), 0)?;
                m.store.load(&dir.join(CHECKPOINT_FILE))?;
                Predictor::Network(Box::new(m))
            }
        };
        Ok(Self {
            config: meta.config,
            predictor,
            tab_scaler: meta.tab_scaler,
            target_scale: meta.target_scale,
        })
    }
}

fn check_compatible(ds: &Dataset, config: &ModelConfig) -> Result<()> {
    let arch = &config.arch;
    if ds.tab_dim != arch.tab_dim {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} tabular features, model expects {}",
            ds.tab_dim, arch.tab_dim
        )));
    }
    if config.kind.uses_images() {
        for s in &ds.samples {
            let v = s.video.shape();
            if v[2] != arch.input_size || v[3] != arch.input_size {
                return Err(Error::InvalidConfig(format!(
                    "sample {} is {}x{}, model input is {}x{}",
                    s.id, v[2], v[3], arch.input_size, arch.input_size
                )));
            }
            if v[0] < arch.frames {
                return Err(Error::TooShort {
                    frames: v[0],
                    min: arch.frames,
                });
            }
        }
    }
    Ok(())
}

/// Trains one model on the samples `train` of `ds`. Returns the fitted
/// model and the mean training loss of every epoch (empty for linreg).
pub fn fit(
    ds: &Dataset,
    train: &[usize],
    config: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(FittedModel, Vec<f64>)> {
    cfg.validate()?;
    check_compatible(ds, config)?;
    let raw_tab = ds.tab_matrix(train)?;
    let tab_scaler = Standardizer::fit(&raw_tab)?;
    let tab_std = tab_scaler.apply(&raw_tab)?;
    let y: Vec<f64> = train.iter().map(|&i| ds.samples[i].target).collect();

    if config.kind == ModelKind::TabularLinreg {
        let reg = LinearRegression::fit(&tab_std, &y, cfg.ridge)?;
        let fitted = FittedModel {
            config: config.clone(),
            predictor: Predictor::Linreg(reg),
            tab_scaler,
            target_scale: TargetScale::IDENTITY,
        };
        return Ok((fitted, Vec::new()));
    }

    let target_scale = if cfg.standardize_target {
        TargetScale::fit(&y)
    } else {
        TargetScale::IDENTITY
    };
    let arch = config.arch.clone();
    let (f, side, d) = (arch.frames, arch.input_size, arch.tab_dim);
    let frame_len = side * side;

    let mut examples = Vec::new();
    for (row, &i) in train.iter().enumerate() {
        for start in segment_starts(ds.samples[i].video.shape()[0], f)? {
            examples.push((row, i, start));
        }
    }
    if examples.len() < 2 {
        return Err(Error::InvalidConfig("need at least two training segments".into()));
    }

    let mut model = Model::<f64>::new(config.clone(), derive_seed(&[seed, 1]))?;
    let mut adam = Adam::new(cfg.adam());
    let uses_tab = config.uses_tab();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr, cfg.lr_min)?;
        let mut order = examples.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 2, epoch as u64])));
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let n = chunk.len();
            let mut video = Vec::with_capacity(n * f * frame_len);
            let mut tab = Vec::with_capacity(n * d);
            let mut target = Vec::with_capacity(n);
            for (j, &(row, i, start)) in chunk.iter().enumerate() {
                let s = &ds.samples[i];
                let clip = &s.video.data()[start * frame_len..(start + f) * frame_len];
                if cfg.augment.any() {
                    let t = Tensor::new(&[f, 1, side, side], clip.to_vec())?;
                    let aug_seed = derive_seed(&[seed, 3, epoch as u64, b as u64, j as u64]);
                    video.extend_from_slice(augment(&t, aug_seed, cfg.augment).data());
                } else {
                    video.extend_from_slice(clip);
                }
                tab.extend_from_slice(&tab_std.data()[row * d..(row + 1) * d]);
                target.push(target_scale.forward(s.target));
            }
            let mut sess = Session::new(&mut model.store, true);
            let v = sess.input(Tensor::new(&[n, 1, f, side, side], video)?);
            let t = if uses_tab {
                Some(sess.input(Tensor::new(&[n, d], tab)?))
            } else {
                None
            };
            let pred = model.net.forward(&mut sess, v, t)?;
            let tgt = sess.input(Tensor::new(&[n], target)?);
            let loss = mse_loss(&mut sess.tape, pred, tgt)?;
            loss_sum += sess.tape.value(loss).item();
            let grads = sess.gradients(loss)?;
            drop(sess);
            adam.step(&mut model.store, &grads, lr);
            batches += 1;
        }
        curve.push(loss_sum / batches.max(1) as f64);
    }
    let fitted = FittedModel {
        config: config.clone(),
        predictor: Predictor::Network(Box::new(model)),
        tab_scaler,
        target_scale,
    };
    Ok((fitted, curve))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub target: f64,
    pub prediction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub predictions: Vec<Prediction>,
    pub metrics: Metrics,
    pub loss_curve: Vec<f64>,
}

impl FoldReport {
    /// Metrics recomputed from the stored predictions.
    pub fn recompute(&self) -> Result<Metrics> {
        let p: Vec<f64> = self.predictions.iter().map(|p| p.prediction).collect();
        let t: Vec<f64> = self.predictions.iter().map(|p| p.target).collect();
        metrics(&p, &t)
    }
}

/// Evaluates a fitted model on the given samples.
pub fn evaluate(model: &mut FittedModel, ds: &Dataset, indices: &[usize]) -> Result<(Vec<Prediction>, Metrics)> {
    let mut preds = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = &ds.samples[i];
        preds.push(Prediction {
            id: s.id.clone(),
            target: s.target,
            prediction: model.predict(s)?,
        });
    }
    let p: Vec<f64> = preds.iter().map(|p| p.prediction).collect();
    let t: Vec<f64> = preds.iter().map(|p| p.target).collect();
    let m = metrics(&p, &t)?;
    Ok((preds, m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub variant: String,
    pub uses_images: bool,
    pub uses_tab: bool,
    pub folds: Vec<FoldReport>,
    pub mean: Metrics,
    pub std: Metrics,
    pub fold_hash: String,
}

pub struct CvRun {
    pub report: CvReport,
    pub models: Vec<FittedModel>,
}

/// Runs `f(i)` for `i in 0..n` on up to `jobs` threads, keeping result order.
pub(crate) fn parallel_map<R: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                out.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every index computed"))
        .collect()
}

/// Stratified k-fold cross-validation of one model variant.
pub fn run_cv(ds: &Dataset, variant: &str, config: &ModelConfig, cfg: &TrainConfig, jobs: usize) -> Result<CvRun> {
    cfg.validate()?;
    check_compatible(ds, config)?;
    let assignment = stratified_folds(&ds.targets(), cfg.k, &cfg.bins, cfg.seed)?;
    let fold_ids: Vec<usize> = cfg.folds.clone().unwrap_or_else(|| (0..cfg.k).collect());
    let results = parallel_map(fold_ids.len(), jobs, |j| -> Result<(FoldReport, FittedModel)> {
        let fold = fold_ids[j];
        let train: Vec<usize> = (0..ds.len()).filter(|&i| assignment[i] != fold).collect();
        let val: Vec<usize> = (0..ds.len()).filter(|&i| assignment[i] == fold).collect();
        let (mut model, loss_curve) = fit(ds, &train, config, cfg, derive_seed(&[cfg.seed, fold as u64]))?;
        let (predictions, metrics) = evaluate(&mut model, ds, &val)?;
        let report = FoldReport {
            fold,
            train_size: train.len(),
            predictions,
            metrics,
            loss_curve,
        };
        Ok((report, model))
    });
    let mut folds = Vec::with_capacity(results.len());
    let mut models = Vec::with_capacity(results.len());
    for r in results {
        let (rep, m) = r?;
        folds.push(rep);
        models.push(m);
    }
    let all: Vec<Metrics> = folds.iter().map(|f| f.metrics).collect();
    let (mean, std) = aggregate(&all);
    Ok(CvRun {
        report: CvReport {
            variant: variant.to_string(),
            uses_images: config.kind.uses_images(),
            uses_tab: config.uses_tab(),
            folds,
            mean,
            std,
            fold_hash: fold_hash(&assignment),
        },
        models,
    })
}

/// Runs cross-validation for every rate in `grid` and returns the rate with
/// the lowest mean MAPE together with all reports.
pub fn grid_search_lr(
    ds: &Dataset,
    variant: &str,
    config: &ModelConfig,
    cfg: &TrainConfig,
    grid: &[f64],
    jobs: usize,
) -> Result<(f64, Vec<CvRun>)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty learning-rate grid".into()));
    }
    let mut runs = Vec::with_capacity(grid.len());
    for &lr in grid {
        let c = TrainConfig {
            lr,
            lr_min: cfg.lr_min.min(lr),
            ..cfg.clone()
        };
        runs.push(run_cv(ds, variant, config, &c, jobs)?);
    }
    let best = (0..grid.len())
        .min_by(|&a, &b| runs[a].report.mean.mape.total_cmp(&runs[b].report.mean.mape))
        .expect("non-empty grid");
    Ok((grid[best], runs))
}

/// Table-shaped summary: one row per report.
pub fn summary_csv(reports: &[CvReport]) -> String {
    let flag = |b: bool| if b { "✓" } else { "✗" };
    let mut out = String::from("variant,img,tab,mMAE,sMAE,mRMSE,sRMSE,mMAPE,sMAPE,fold_hash\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}\n",
            r.variant,
            flag(r.uses_images),
            flag(r.uses_tab),
            r.mean.mae,
            r.std.mae,
            r.mean.rmse,
            r.std.rmse,
            r.mean.mape,
            r.std.mape,
            r.fold_hash
        ));
    }
    out
}
