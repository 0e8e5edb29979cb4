use crate::error::{Error, Result};
use crate::nn::{ParamGrads, ParamStore};
use crate::scalar::Scalar;

/// Adam hyperparameters; `l2` is added to the gradient (coupled decay).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 1e-4,
        }
    }
}

/// One bias-corrected Adam update of a flat parameter slice at step `t >= 1`.
pub fn adam_update<T: Scalar>(p: &mut [T], g: &[T], m: &mut [T], v: &mut [T], t: u64, lr: f64, cfg: &AdamConfig) {
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::one() - T::lit(cfg.beta1.powi(t as i32));
    let c2 = T::one() - T::lit(cfg.beta2.powi(t as i32));
    let (lr, eps, l2) = (T::lit(lr), T::lit(cfg.eps), T::lit(cfg.l2));
    for i in 0..p.len() {
        let gi = g[i] + l2 * p[i];
        m[i] = b1 * m[i] + (T::one() - b1) * gi;
        v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        p[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Adam state over a [`ParamStore`]; parameters without a gradient are left untouched.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Option<(Vec<T>, Vec<T>)>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &ParamGrads<T>, lr: f64) {
        self.step += 1;
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        for (&id, g) in &grads.0 {
            let p = store.value_mut(id);
            let (m, v) = self.moments[id.index()]
                .get_or_insert_with(|| (vec![T::zero(); p.numel()], vec![T::zero(); p.numel()]));
            adam_update(p.data_mut(), g.data(), m, v, self.step, lr, &self.config);
        }
    }
}

/// Per-epoch cosine annealing from `lr0` at epoch 0 to `lr_min` at the last epoch.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64, lr_min: f64) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(Error::InvalidEpoch {
            epoch,
            total: total_epochs,
        });
    }
    if epoch == 0 {
        return Ok(lr0);
    }
    if epoch == total_epochs - 1 {
        return Ok(lr_min);
    }
    let phase = std::f64::consts::PI * epoch as f64 / (total_epochs - 1) as f64;
    Ok(lr_min + 0.5 * (lr0 - lr_min) * (1.0 + phase.cos()))
}
