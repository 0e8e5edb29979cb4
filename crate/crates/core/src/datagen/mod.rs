//! Deterministic synthetic multimodal data: ellipse videos, tabular
//! features partially redundant with the image, and a scalar target.

mod augment;
mod format;
mod segment;
mod standardize;

pub use augment::{adjust_brightness_contrast, augment, hflip, rotate_nearest, AugmentFlags};
pub use format::{read_dataset, write_dataset, GeneratorInfo, Manifest, ManifestSample, MANIFEST_VERSION};
pub use segment::{segment, segment_starts, SEGMENT_LEN};
pub use standardize::{standardize_fit_apply, Standardizer};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndtensor::Tensor;

/// Semi-axes are drawn uniformly from this fraction range of the image side.
const AXIS_RANGE: (f64, f64) = (0.12, 0.30);
/// Approximate mean and std of the normalized circumference under `AXIS_RANGE`.
const LATENT_MEAN: f64 = 1.33;
const LATENT_STD: f64 = 0.23;
const BACKGROUND: f64 = 0.15;
const FOREGROUND: f64 = 0.75;
const SPECKLE_STD: f64 = 0.05;

/// Parameters of the synthetic regression task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub n_samples: usize,
    /// Clip lengths are drawn uniformly from `frames_min..=frames_max`.
    pub frames_min: usize,
    pub frames_max: usize,
    pub height: usize,
    pub width: usize,
    pub tab_dim: usize,
    /// Target units per unit of normalized ellipse circumference.
    pub a_img: f64,
    /// Target units per unit of the independent tabular factor.
    pub a_tab: f64,
    pub noise_std: f64,
    /// Correlation between the latent-copy tabular features and the image attribute.
    pub redundancy: f64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            n_samples: 96,
            frames_min: 16,
            frames_max: 48,
            height: 64,
            width: 64,
            tab_dim: 6,
            a_img: 2600.0,
            a_tab: 400.0,
            noise_std: 50.0,
            redundancy: 0.5,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_samples == 0 {
            return bad("n_samples must be >= 1".into());
        }
        if self.frames_min < SEGMENT_LEN {
            return Err(Error::TooShort {
                frames: self.frames_min,
                min: SEGMENT_LEN,
            });
        }
        if self.frames_max < self.frames_min {
            return bad(format!(
                "frames_max {} < frames_min {}",
                self.frames_max, self.frames_min
            ));
        }
        if self.height < 4 || self.width < 4 {
            return bad(format!("frame size {}x{} too small", self.height, self.width));
        }
        if self.tab_dim == 0 {
            return bad("tab_dim must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.redundancy) {
            return bad(format!("redundancy {} outside [0, 1]", self.redundancy));
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise_std {} must be >= 0", self.noise_std));
        }
        if !self.a_img.is_finite() || !self.a_tab.is_finite() {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }
}

/// One clip with its tabular vector and target.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `[T0,1,H,W]`, values in [0, 1].
    pub video: Tensor<f64>,
    /// `[D]`, raw (unstandardized).
    pub tab: Tensor<f64>,
    pub target: f64,
    /// Ground-truth image attribute (normalized circumference), when synthetic.
    pub latent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub tab_dim: usize,
    /// Generator provenance, when synthetic.
    pub generator: Option<(SyntheticTaskSpec, u64)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    /// Raw tabular rows of the given samples as `[n, D]`.
    pub fn tab_matrix(&self, indices: &[usize]) -> Result<Tensor<f64>> {
        let mut data = Vec::with_capacity(indices.len() * self.tab_dim);
        for &i in indices {
            data.extend_from_slice(self.samples[i].tab.data());
        }
        Tensor::new(&[indices.len(), self.tab_dim], data)
    }
}

/// Ramanujan's approximation of the perimeter of an ellipse with semi-axes `a`, `b`.
pub fn ellipse_circumference(a: f64, b: f64) -> f64 {
    std::f64::consts::PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt())
}

/// Per-sample random stream, independent of generation order.
pub(crate) fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `n_samples` samples; a pure function of `(spec, seed)`.
pub fn generate(spec: &SyntheticTaskSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let samples = (0..spec.n_samples)
        .map(|i| generate_sample(spec, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        tab_dim: spec.tab_dim,
        generator: Some((spec.clone(), seed)),
    })
}

fn generate_sample(spec: &SyntheticTaskSpec, seed: u64, index: usize) -> Result<Sample> {
    let mut rng = sample_rng(seed, index as u64);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (h, w) = (spec.height as f64, spec.width as f64);
    let side = h.min(w);

    let frames = rng.random_range(spec.frames_min..=spec.frames_max);
    let fa = rng.random_range(AXIS_RANGE.0..AXIS_RANGE.1);
    let fb = rng.random_range(AXIS_RANGE.0..AXIS_RANGE.1);
    let (ra, rb) = (fa * side, fb * side);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let cx0 = w / 2.0 + rng.random_range(-0.08..0.08) * w;
    let cy0 = h / 2.0 + rng.random_range(-0.08..0.08) * h;
    let latent = ellipse_circumference(fa, fb);

    let (sin, cos) = theta.sin_cos();
    let mut video = Vec::with_capacity(frames * spec.height * spec.width);
    for _ in 0..frames {
        let cx = cx0 + rng.random_range(-0.04..0.04) * w;
        let cy = cy0 + rng.random_range(-0.04..0.04) * h;
        for y in 0..spec.height {
            for x in 0..spec.width {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let u = (dx * cos + dy * sin) / ra;
                let v = (-dx * sin + dy * cos) / rb;
                let base = if u * u + v * v <= 1.0 { FOREGROUND } else { BACKGROUND };
                let px = base + SPECKLE_STD * std_normal.sample(&mut rng);
                video.push(px.clamp(0.0, 1.0));
            }
        }
    }

    // feature 0 and every even index: latent copies; 1: target factor; odd >= 3: pure noise
    let rho = spec.redundancy;
    let z_latent = (latent - LATENT_MEAN) / LATENT_STD;
    let factor: f64 = std_normal.sample(&mut rng);
    let mut tab = Vec::with_capacity(spec.tab_dim);
    for j in 0..spec.tab_dim {
        let z = match j {
            1 => factor,
            j if j % 2 == 0 => {
                let u: f64 = std_normal.sample(&mut rng);
                rho * z_latent + (1.0 - rho * rho).sqrt() * u
            }
            _ => std_normal.sample(&mut rng),
        };
        // raw units: distinct offsets and scales per column
        tab.push(10.0 * (j as f64 + 1.0) + (1.0 + 0.5 * j as f64) * z);
    }
    let factor_term = if spec.tab_dim > 1 { spec.a_tab * factor } else { 0.0 };
    let noise = if spec.noise_std > 0.0 {
        spec.noise_std * std_normal.sample(&mut rng)
    } else {
        0.0
    };
    let target = (spec.a_img * latent + factor_term + noise).max(1.0);

    Ok(Sample {
        id: format!("s{index:04}"),
        video: Tensor::new(&[frames, 1, spec.height, spec.width], video)?,
        tab: Tensor::new(&[spec.tab_dim], tab)?,
        target,
        latent: Some(latent),
    })
}
