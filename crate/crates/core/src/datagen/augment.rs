use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sample_rng;
use crate::ndtensor::Tensor;

const MAX_ROTATION_DEG: f64 = 15.0;
const BRIGHTNESS_RANGE: f64 = 0.1;
const CONTRAST_RANGE: (f64, f64) = (0.9, 1.1);
const NOISE_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentFlags {
    pub hflip: bool,
    pub brightness_contrast: bool,
    pub gaussian_noise: bool,
    pub rotation: bool,
}

impl AugmentFlags {
    pub const ALL: Self = Self {
        hflip: true,
        brightness_contrast: true,
        gaussian_noise: true,
        rotation: true,
    };

    pub fn any(&self) -> bool {
        self.hflip || self.brightness_contrast || self.gaussian_noise || self.rotation
    }
}

fn frame_dims(video: &Tensor<f64>) -> (usize, usize) {
    let s = video.shape();
    (s[s.len() - 2], s[s.len() - 1])
}

/// Mirrors every frame along its width axis.
pub fn hflip(video: &Tensor<f64>) -> Tensor<f64> {
    let (_, w) = frame_dims(video);
    let mut out = video.clone();
    for row in out.data_mut().chunks_mut(w) {
        row.reverse();
    }
    out
}

/// `(x - m) * gain + m + shift` with `m` the clip mean; not clipped.
pub fn adjust_brightness_contrast(video: &Tensor<f64>, shift: f64, gain: f64) -> Tensor<f64> {
    let m = video.data().iter().sum::<f64>() / video.numel() as f64;
    video.map(|x| (x - m) * gain + m + shift)
}

/// Rotates every frame about its center by `degrees`, nearest-neighbor
/// sampled; pixels mapping outside the frame become 0.
pub fn rotate_nearest(video: &Tensor<f64>, degrees: f64) -> Tensor<f64> {
    let (h, w) = frame_dims(video);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let src_index: Vec<Option<usize>> = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 - cy, (i % w) as f64 - cx);
            let sx = (cos * x + sin * y + cx).round();
            let sy = (-sin * x + cos * y + cy).round();
            (sx >= 0.0 && sy >= 0.0 && sx < w as f64 && sy < h as f64).then(|| sy as usize * w + sx as usize)
        })
        .collect();
    let mut out = video.clone();
    for (dst, src) in out.data_mut().chunks_mut(h * w).zip(video.data().chunks(h * w)) {
        for (d, idx) in dst.iter_mut().zip(&src_index) {
            *d = idx.map_or(0.0, |j| src[j]);
        }
    }
    out
}

/// Applies the enabled augmentations with one parameter draw per clip.
/// The result is clipped to [0, 1].
pub fn augment(video: &Tensor<f64>, seed: u64, flags: AugmentFlags) -> Tensor<f64> {
    if !flags.any() {
        return video.clone();
    }
    let mut rng = sample_rng(seed, u64::MAX);
    let mut v = video.clone();
    if flags.rotation {
        let deg = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
        v = rotate_nearest(&v, deg);
    }
    if flags.hflip && rng.random_bool(0.5) {
        v = hflip(&v);
    }
    if flags.brightness_contrast {
        let shift = rng.random_range(-BRIGHTNESS_RANGE..=BRIGHTNESS_RANGE);
        let gain = rng.random_range(CONTRAST_RANGE.0..=CONTRAST_RANGE.1);
        v = adjust_brightness_contrast(&v, shift, gain);
    }
    if flags.gaussian_noise {
        let n = Normal::new(0.0, NOISE_STD).expect("valid std");
        v.data_mut().iter_mut().for_each(|x| *x += n.sample(&mut rng));
    }
    v.map(|x| x.clamp(0.0, 1.0))
}
