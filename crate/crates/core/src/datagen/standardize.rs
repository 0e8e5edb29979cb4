use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndtensor::Tensor;

/// Per-column affine map fitted on training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population std; 1 for constant columns.
    pub std: Vec<f64>,
    /// Columns constant on the training rows; these always map to 0.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(train: &Tensor<f64>) -> Result<Self> {
        if train.rank() != 2 || train.shape()[0] < 2 {
            return Err(Error::ShapeMismatch(format!(
                "standardization needs a [n>=2, D] matrix, got {:?}",
                train.shape()
            )));
        }
        let (n, d) = (train.shape()[0], train.shape()[1]);
        let rows = || train.data().chunks(d);
        let mut mean = vec![0.0; d];
        for r in rows() {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in rows() {
            for ((s, &v), &m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut std = Vec::with_capacity(d);
        let mut constant = Vec::with_capacity(d);
        for (&s, &m) in var.iter().zip(&mean) {
            let sd = (s / n as f64).sqrt();
            let is_const = sd <= 1e-12 * m.abs().max(1.0);
            constant.push(is_const);
            std.push(if is_const { 1.0 } else { sd });
        }
        Ok(Self { mean, std, constant })
    }

    pub fn apply(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        let d = self.mean.len();
        if x.rank() != 2 || x.shape()[1] != d {
            return Err(Error::ShapeMismatch(format!(
                "standardizer for {d} columns applied to {:?}",
                x.shape()
            )));
        }
        let data = x
            .data()
            .chunks(d)
            .flat_map(|r| {
                r.iter().enumerate().map(|(j, &v)| {
                    if self.constant[j] {
                        0.0
                    } else {
                        (v - self.mean[j]) / self.std[j]
                    }
                })
            })
            .collect();
        Tensor::new(x.shape(), data)
    }
}

/// Fits on `train` and applies the same statistics to `train` and every matrix in `others`.
pub fn standardize_fit_apply(
    train: &Tensor<f64>,
    others: &[&Tensor<f64>],
) -> Result<(Tensor<f64>, Vec<Tensor<f64>>, Standardizer)> {
    let st = Standardizer::fit(train)?;
    let t = st.apply(train)?;
    let o = others.iter().map(|m| st.apply(m)).collect::<Result<Vec<_>>>()?;
    Ok((t, o, st))
}
