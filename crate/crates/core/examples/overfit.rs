//! Overfits the full model to a handful of samples and prints the loss curve.
//!
//! `cargo run --release --example overfit -- <size> <samples> <steps> [lr]`

use std::time::Instant;

use tabattn::datagen::{generate, SyntheticTaskSpec};
use tabattn::fusion::ModelKind;
use tabattn::model::{ArchConfig, Model, ModelConfig};
use tabattn::ndtensor::Tensor;
use tabattn::nn::Session;
use tabattn::train::{mse_loss, Adam, AdamConfig};

fn main() -> tabattn::Result<()> {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let size: usize = raw.first().map_or(32, |a| a.parse().expect("size"));
    let n: usize = raw.get(1).map_or(8, |a| a.parse().expect("samples"));
    let steps: usize = raw.get(2).map_or(400, |a| a.parse().expect("steps"));
    let lr: f64 = raw.get(3).map_or(1e-3, |a| a.parse().expect("lr"));
    let spec = SyntheticTaskSpec {
        n_samples: n,
        frames_min: 16,
        frames_max: 16,
        height: size,
        width: size,
        ..Default::default()
    };
    let ds = generate(&spec, 11)?;
    let arch = ArchConfig {
        input_size: size,
        ..ArchConfig::desk()
    };
    let mut model = Model::<f64>::new(ModelConfig::new(ModelKind::Tabattention, arch), 3)?;
    let mut video = Vec::new();
    for s in &ds.samples {
        video.extend_from_slice(s.video.data());
    }
    let video = Tensor::new(&[n, 1, 16, size, size], video)?;
    let (st, _, _) = tabattn::datagen::standardize_fit_apply(&ds.tab_matrix(&(0..n).collect::<Vec<_>>())?, &[])?;
    let y = ds.targets();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let target = Tensor::new(&[n], y.iter().map(|v| (v - mean) / sd).collect())?;
    let mut adam = Adam::new(AdamConfig::default());
    let start = Instant::now();
    let mut first = None;
    for step in 0..steps {
        let mut s = Session::new(&mut model.store, true);
        let v = s.input(video.clone());
        let t = s.input(st.clone());
        let p = model.net.forward(&mut s, v, Some(t))?;
        let tg = s.input(target.clone());
        let loss = mse_loss(&mut s.tape, p, tg)?;
        let l = s.tape.value(loss).item();
        let g = s.gradients(loss)?;
        drop(s);
        adam.step(&mut model.store, &g, lr);
        let l0 = *first.get_or_insert(l);
        if step % 25 == 0 || l < 0.01 * l0 {
            println!(
                "step {step:4} loss {l:.6} ratio {:.5} ({:.0}s)",
                l / l0,
                start.elapsed().as_secs_f64()
            );
        }
        if l < 0.01 * l0 {
            break;
        }
    }
    Ok(())
}
