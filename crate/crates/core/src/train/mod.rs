//! Optimization, cross-validation and evaluation.

mod ablation;
mod cv;
mod folds;
mod metrics;
mod optim;

pub use ablation::{run_ablation, AblationVariant};
pub use cv::{
    derive_seed, evaluate, fit, grid_search_lr, predict_sample, run_cv, summary_csv, CvReport, CvRun, FittedModel,
    FoldReport, Prediction, Predictor, TargetScale, TrainConfig, LR_GRID,
};
pub use folds::{fold_hash, stratified_folds, Bins};
pub use metrics::{aggregate, metrics, mse_loss, Metrics};
pub use optim::{adam_update, cosine_lr, Adam, AdamConfig};
