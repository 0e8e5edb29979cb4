//! Times one training-mode forward/backward pass of the full model.
//!
//! `cargo run --release --example throughput -- <input_size> <frames> <batch>`

use std::time::Instant;

use tabattn::fusion::ModelKind;
use tabattn::model::{ArchConfig, Model, ModelConfig};
use tabattn::ndtensor::Tensor;
use tabattn::nn::Session;

fn main() -> tabattn::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer argument"))
        .collect();
    let size = args.first().copied().unwrap_or(64);
    let frames = args.get(1).copied().unwrap_or(16);
    let batch = args.get(2).copied().unwrap_or(4);
    for kind in [ModelKind::ImageOnly, ModelKind::Tabattention] {
        let arch = ArchConfig {
            input_size: size,
            frames,
            ..ArchConfig::desk()
        };
        let mut model = Model::<f64>::new(ModelConfig::new(kind, arch), 0)?;
        let video = Tensor::from_fn(&[batch, 1, frames, size, size], |i| ((i * 37) % 101) as f64 / 101.0)?;
        let tab = Tensor::from_fn(&[batch, 6], |i| (i as f64).sin())?;
        let start = Instant::now();
        let reps = 3;
        for _ in 0..reps {
            let mut s = Session::new(&mut model.store, true);
            let v = s.input(video.clone());
            let t = s.input(tab.clone());
            let y = model.net.forward(&mut s, v, Some(t))?;
            let l = s.tape.mean_all(y);
            let g = s.gradients(l)?;
            assert!(!g.0.is_empty());
        }
        let per = start.elapsed().as_secs_f64() / reps as f64;
        println!(
            "{:<14} {size}x{size}x{frames} batch {batch}: {:.3}s per step, {:.4}s per sample",
            kind.name(),
            per,
            per / batch as f64
        );
    }
    Ok(())
}
