//! Runs the component ablation on a small synthetic dataset and prints
//! validation MAPE per variant.
//!
//! `cargo run --release --example desk_ablation -- <size> <n> <epochs> <seeds> [lr]`

use std::time::Instant;

use tabattn::datagen::{generate, SyntheticTaskSpec};
use tabattn::model::ArchConfig;
use tabattn::train::{run_ablation, AblationVariant, TrainConfig};

fn main() -> tabattn::Result<()> {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let lr = raw.get(4).map_or(1e-3, |a| a.parse().expect("learning rate"));
    let args: Vec<usize> = raw
        .iter()
        .take(4)
        .map(|a| a.parse().expect("integer argument"))
        .collect();
    let size = args.first().copied().unwrap_or(16);
    let n = args.get(1).copied().unwrap_or(96);
    let epochs = args.get(2).copied().unwrap_or(20);
    let seeds = args.get(3).copied().unwrap_or(1) as u64;
    let arch = ArchConfig {
        input_size: size,
        ..ArchConfig::desk()
    };
    let mut totals = vec![0.0; AblationVariant::ALL.len()];
    for seed in 0..seeds {
        let spec = SyntheticTaskSpec {
            n_samples: n,
            frames_min: 16,
            frames_max: 16,
            height: size,
            width: size,
            ..Default::default()
        };
        let ds = generate(&spec, seed)?;
        let cfg = TrainConfig {
            epochs,
            lr,
            seed,
            folds: Some(vec![0]),
            ..Default::default()
        };
        let start = Instant::now();
        let runs = run_ablation(&ds, &arch, &cfg, &AblationVariant::ALL, 1)?;
        for (i, r) in runs.iter().enumerate() {
            totals[i] += r.report.mean.mape / seeds as f64;
            println!(
                "seed {seed} {:<14} mape {:.3} final loss {:.4}",
                r.report.variant,
                r.report.mean.mape,
                r.report.folds[0].loss_curve.last().copied().unwrap_or(f64::NAN)
            );
        }
        println!("seed {seed} took {:.1}s", start.elapsed().as_secs_f64());
    }
    for (v, t) in AblationVariant::ALL.iter().zip(&totals) {
        println!("{:<14} mean mape {:.3}", v.label(), t);
    }
    Ok(())
}
