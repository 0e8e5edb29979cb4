use std::fs;
use std::path::Path;

use serde::Serialize;
use tabattn::datagen::{generate, read_dataset, write_dataset, AugmentFlags, Dataset, SyntheticTaskSpec};
use tabattn::fusion::ModelKind;
use tabattn::gradcheck::{self, GradcheckOptions};
use tabattn::model::{ArchConfig, ModelConfig};
use tabattn::ndtensor::Fault;
use tabattn::train::{
    evaluate, grid_search_lr, run_ablation, run_cv, summary_csv, AblationVariant, Bins, CvRun, FittedModel,
    TrainConfig, LR_GRID,
};
use tabattn::{Error, Result};

use crate::args::{AblateArgs, EvalArgs, FaultArg, FitArgs, GenDataArgs, GradcheckArgs, ModelArg, TrainArgs};

/// Identifies the binary that produced a run directory.
pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("TABATTN_GIT_DESCRIBE"));

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn parse_frames(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidSpec(format!("--frames {s:?}: expected T or MIN:MAX"));
    let parse = |p: &str| p.trim().parse::<usize>().map_err(|_| bad());
    match s.split_once(':') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let t = parse(s)?;
            Ok((t, t))
        }
    }
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidSpec(format!("--size {s:?}: expected HxW"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        h.trim().parse().map_err(|_| bad())?,
        w.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let (frames_min, frames_max) = parse_frames(&a.frames)?;
    let default_size = if a.paper_scale { "128x128" } else { "64x64" };
    let (height, width) = parse_size(a.size.as_deref().unwrap_or(default_size))?;
    let spec = SyntheticTaskSpec {
        n_samples: a.n.unwrap_or(if a.paper_scale { 92 } else { 96 }),
        frames_min,
        frames_max,
        height,
        width,
        tab_dim: a.tab_dim,
        a_img: a.a_img,
        a_tab: a.a_tab,
        noise_std: a.noise_std,
        redundancy: a.redundancy,
    };
    let ds = generate(&spec, a.seed)?;
    write_dataset(&ds, &a.out)?;
    let y = ds.targets();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    println!(
        "wrote {} samples to {}: {}x{} frames, T0 in [{}, {}], {} tabular features, target {:.1} ± {:.1}",
        ds.len(),
        a.out.display(),
        height,
        width,
        frames_min,
        frames_max,
        ds.tab_dim,
        mean,
        std
    );
    Ok(())
}

fn model_kind(m: ModelArg) -> ModelKind {
    match m {
        ModelArg::ImageOnly => ModelKind::ImageOnly,
        ModelArg::Linreg => ModelKind::TabularLinreg,
        ModelArg::LateConcat => ModelKind::LateConcat,
        ModelArg::Interactive => ModelKind::Interactive,
        ModelArg::Daft => ModelKind::Daft,
        ModelArg::Tabattention => ModelKind::Tabattention,
    }
}

fn frame_side(ds: &Dataset) -> Result<usize> {
    let first = ds
        .samples
        .first()
        .ok_or_else(|| Error::InvalidConfig("dataset is empty".into()))?;
    let (h, w) = (first.video.shape()[2], first.video.shape()[3]);
    if h != w {
        return Err(Error::InvalidConfig(format!(
            "frames are {h}x{w}; the model needs square input"
        )));
    }
    Ok(h)
}

fn arch_config(f: &FitArgs, ds: &Dataset) -> Result<ArchConfig> {
    let arch = ArchConfig {
        stages: f.widths.len(),
        widths: f.widths.clone(),
        z: f.reduction,
        heads: f.heads,
        d: f.head_dim,
        frames: f.segment_frames,
        input_size: frame_side(ds)?,
        tab_dim: ds.tab_dim,
        ..ArchConfig::desk()
    };
    arch.validate()?;
    Ok(arch)
}

fn train_config(f: &FitArgs) -> Result<TrainConfig> {
    let base = if f.paper_scale {
        TrainConfig::paper_scale()
    } else {
        TrainConfig::default()
    };
    let cfg = TrainConfig {
        epochs: f.epochs.unwrap_or(base.epochs),
        batch_size: f.batch_size,
        lr: f.lr,
        weight_decay: f.weight_decay,
        seed: f.seed,
        augment: if f.no_augment {
            AugmentFlags::default()
        } else {
            AugmentFlags::ALL
        },
        k: f.folds,
        bins: if f.bins.is_empty() {
            Bins::Tertiles
        } else {
            Bins::Thresholds(f.bins.clone())
        },
        ridge: f.ridge,
        standardize_target: !f.raw_targets,
        folds: (!f.only_folds.is_empty()).then(|| f.only_folds.clone()),
        ..base
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct RunEcho<'a, A: Serialize> {
    command: &'a str,
    build: &'a str,
    args: &'a A,
    train: &'a TrainConfig,
    models: Vec<(&'a str, &'a ModelConfig)>,
}

fn write_cv(dir: &Path, run: &CvRun, save_models: bool) -> Result<()> {
    for f in &run.report.folds {
        write_json(&dir.join("folds").join(format!("fold{}.json", f.fold)), f)?;
    }
    if save_models {
        for (f, m) in run.report.folds.iter().zip(&run.models) {
            m.save(&dir.join("models").join(format!("fold{}", f.fold)))?;
        }
    }
    write_json(&dir.join("cv.json"), &run.report)
}

fn print_summary(csv: &str) {
    for line in csv.lines() {
        println!("{line}");
    }
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let f = &a.fit;
    let ds = read_dataset(&f.data)?;
    let kind = model_kind(a.model);
    let mut arch = arch_config(f, &ds)?;
    arch.use_cam = !a.no_cam;
    arch.use_sam = !a.no_sam;
    arch.use_tam = !a.no_tam;
    arch.use_tab = !a.no_tab;
    let config = ModelConfig::new(kind, arch);
    let mut cfg = train_config(f)?;
    let variant = kind.name();

    let run = if f.lr_grid {
        let (best, runs) = grid_search_lr(&ds, variant, &config, &cfg, &LR_GRID, f.jobs)?;
        let mut grid = String::from("lr,mMAPE\n");
        for (lr, r) in LR_GRID.iter().zip(&runs) {
            grid.push_str(&format!("{lr:e},{:.4}\n", r.report.mean.mape));
        }
        fs::create_dir_all(&f.out)?;
        fs::write(f.out.join("lr_grid.csv"), grid)?;
        cfg.lr = best;
        let idx = LR_GRID
            .iter()
            .position(|&l| l == best)
            .expect("best rate is in the grid");
        runs.into_iter().nth(idx).expect("one run per rate")
    } else {
        run_cv(&ds, variant, &config, &cfg, f.jobs)?
    };

    write_json(
        &f.out.join("config.json"),
        &RunEcho {
            command: "train",
            build: BUILD_ID,
            args: a,
            train: &cfg,
            models: vec![(variant, &config)],
        },
    )?;
    write_cv(&f.out, &run, kind != ModelKind::TabularLinreg)?;
    let csv = summary_csv(std::slice::from_ref(&run.report));
    fs::write(f.out.join("summary.csv"), &csv)?;
    print_summary(&csv);
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let f = &a.fit;
    let ds = read_dataset(&f.data)?;
    let arch = arch_config(f, &ds)?;
    let cfg = train_config(f)?;
    let configs: Vec<ModelConfig> = AblationVariant::ALL.iter().map(|v| v.model_config(&arch)).collect();
    let runs = run_ablation(&ds, &arch, &cfg, &AblationVariant::ALL, f.jobs)?;
    write_json(
        &f.out.join("config.json"),
        &RunEcho {
            command: "ablate",
            build: BUILD_ID,
            args: a,
            train: &cfg,
            models: AblationVariant::ALL.iter().map(|v| v.label()).zip(&configs).collect(),
        },
    )?;
    for (v, run) in AblationVariant::ALL.iter().zip(&runs) {
        let name = serde_json::to_value(v)?.as_str().unwrap_or("variant").to_string();
        write_cv(&f.out.join("variants").join(name), run, false)?;
    }
    let reports: Vec<_> = runs.into_iter().map(|r| r.report).collect();
    let csv = summary_csv(&reports);
    fs::write(f.out.join("summary.csv"), &csv)?;
    print_summary(&csv);
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut model = FittedModel::load(&a.model_dir)?;
    let ds = read_dataset(&a.data)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let (predictions, metrics) = evaluate(&mut model, &ds, &all)?;
    println!(
        "{} samples: MAE {:.4}  RMSE {:.4}  MAPE {:.4}%",
        ds.len(),
        metrics.mae,
        metrics.rmse,
        metrics.mape
    );
    if let Some(out) = &a.out {
        #[derive(Serialize)]
        struct EvalReport<'a> {
            build: &'a str,
            metrics: tabattn::train::Metrics,
            predictions: Vec<tabattn::train::Prediction>,
        }
        write_json(
            out,
            &EvalReport {
                build: BUILD_ID,
                metrics,
                predictions,
            },
        )?;
    }
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    if a.step.is_nan() || a.step <= 0.0 {
        return Err(Error::InvalidConfig(format!("--step {} must be positive", a.step)));
    }
    let opts = GradcheckOptions {
        step: a.step,
        seed: a.seed,
        fault: a.inject_fault.map(|f| match f {
            FaultArg::SigmoidSignFlip => Fault::SigmoidBackwardSignFlip,
        }),
    };
    let report = gradcheck::run(&opts)?;
    print!("{}", report.render());
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    report.into_result().map(|_| ())
}
