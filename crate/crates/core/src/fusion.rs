//! Comparison methods: tabular linear regression, late concatenation,
//! channel-wise multiplicative (Interactive) and affine (DAFT-style)
//! conditioning of imaging features on tabular data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndtensor::{Tensor, Var};
use crate::nn::{reduced_width, Linear, Mlp, MlpSpec, ParamBuilder, Session};
use crate::scalar::Scalar;

/// Which comparison model is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ImageOnly,
    #[serde(alias = "linreg")]
    TabularLinreg,
    LateConcat,
    Interactive,
    Daft,
    Tabattention,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::ImageOnly,
        ModelKind::TabularLinreg,
        ModelKind::LateConcat,
        ModelKind::Interactive,
        ModelKind::Daft,
        ModelKind::Tabattention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ImageOnly => "image_only",
            ModelKind::TabularLinreg => "tabular_linreg",
            ModelKind::LateConcat => "late_concat",
            ModelKind::Interactive => "interactive",
            ModelKind::Daft => "daft",
            ModelKind::Tabattention => "tabattention",
        }
    }

    pub fn uses_images(self) -> bool {
        self != ModelKind::TabularLinreg
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linreg" => Ok(ModelKind::TabularLinreg),
            _ => ModelKind::ALL
                .into_iter()
                .find(|k| k.name() == s)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown model kind {s:?}"))),
        }
    }
}

/// Multiplies each channel of a `[N,C,T,H,W]` map by a tabular-derived gate.
#[derive(Clone, Debug)]
pub struct InteractiveFuse {
    pub branch: Mlp,
    channels: usize,
}

impl InteractiveFuse {
    /// The branch's output bias starts at one, so the untrained gate is close to identity.
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, tab_dim: usize, channels: usize) -> Result<Self> {
        let branch = Mlp::new(b, name, MlpSpec::new(tab_dim, reduced_width(channels, 2), channels))?;
        let fuse = Self { branch, channels };
        if let Some(bias) = fuse.branch.second.bias {
            b.set(bias, Tensor::ones(&[channels])?)?;
        }
        Ok(fuse)
    }

    pub fn gate<T: Scalar>(&self, s: &mut Session<'_, T>, tab: Var) -> Result<Var> {
        let g = self.branch.forward(s, tab)?;
        let n = s.tape.shape(g)[0];
        s.tape.reshape(g, &[n, self.channels, 1, 1, 1])
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, fmap: Var, tab: Var) -> Result<Var> {
        check_fmap(s, fmap, tab, self.channels)?;
        let g = self.gate(s, tab)?;
        s.tape.mul(fmap, g)
    }
}

/// `(1 + γ) ⊗ fmap + β` with per-channel γ, β predicted from tabular data.
#[derive(Clone, Debug)]
pub struct DaftFuse {
    pub branch: Mlp,
    channels: usize,
}

impl DaftFuse {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, tab_dim: usize, channels: usize) -> Result<Self> {
        Ok(Self {
            branch: Mlp::new(b, name, MlpSpec::new(tab_dim, reduced_width(channels, 2), 2 * channels))?,
            channels,
        })
    }

    /// Returns `(γ, β)`, each `[N,C,1,1,1]`.
    pub fn scale_shift<T: Scalar>(&self, s: &mut Session<'_, T>, tab: Var) -> Result<(Var, Var)> {
        let out = self.branch.forward(s, tab)?;
        let n = s.tape.shape(out)[0];
        let c = self.channels;
        let gamma = s.tape.slice(out, &[(0, n), (0, c)])?;
        let beta = s.tape.slice(out, &[(0, n), (c, 2 * c)])?;
        Ok((
            s.tape.reshape(gamma, &[n, c, 1, 1, 1])?,
            s.tape.reshape(beta, &[n, c, 1, 1, 1])?,
        ))
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, fmap: Var, tab: Var) -> Result<Var> {
        check_fmap(s, fmap, tab, self.channels)?;
        let (gamma, beta) = self.scale_shift(s, tab)?;
        let scale = s.tape.shift(gamma, T::one());
        let scaled = s.tape.mul(fmap, scale)?;
        s.tape.add(scaled, beta)
    }
}

fn check_fmap<T: Scalar>(s: &Session<'_, T>, fmap: Var, tab: Var, channels: usize) -> Result<()> {
    let fs = s.tape.shape(fmap);
    let ts = s.tape.shape(tab);
    if fs.len() != 5 || fs[1] != channels || ts.len() != 2 || ts[0] != fs[0] {
        return Err(Error::ShapeMismatch(format!(
            "fusion expects fmap [N,{channels},T,H,W] and tab [N,D], got {fs:?} and {ts:?}"
        )));
    }
    Ok(())
}

/// Linear head over `[pooled image features, tabular features]`.
pub fn late_concat_head<T: Scalar>(s: &mut Session<'_, T>, head: &Linear, pooled: Var, tab: Var) -> Result<Var> {
    let (ps, ts) = (s.tape.shape(pooled).to_vec(), s.tape.shape(tab).to_vec());
    if ps.len() != 2 || ts.len() != 2 || ps[0] != ts[0] || ps[1] + ts[1] != head.in_dim {
        return Err(Error::ShapeMismatch(format!(
            "late fusion head over {} inputs got pooled {ps:?} and tab {ts:?}",
            head.in_dim
        )));
    }
    let cat = s.tape.concat(&[pooled, tab], 1)?;
    let y = head.forward(s, cat)?;
    s.tape.reshape(y, &[ps[0]])
}

/// Ordinary / ridge least squares with an unpenalized intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRegression {
    /// `[intercept, w_1, …, w_D]`.
    pub weights: Vec<f64>,
}

/// Gram matrices whose condition estimate exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

impl LinearRegression {
    /// Fits `x[n,D]`, `y[n]` by the normal equations.
    pub fn fit(x: &Tensor<f64>, y: &[f64], ridge: f64) -> Result<Self> {
        if x.rank() != 2 || x.shape()[0] != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "linreg: X {:?} against {} targets",
                x.shape(),
                y.len()
            )));
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
        }
        let (n, d) = (x.shape()[0], x.shape()[1]);
        if n <= d + 1 {
            return Err(Error::TooFewSamples { n, k: d + 2 });
        }
        let p = d + 1;
        let row = |i: usize| std::iter::once(1.0).chain(x.data()[i * d..(i + 1) * d].iter().copied());
        let mut gram = vec![0.0; p * p];
        let mut rhs = vec![0.0; p];
        for (i, &yi) in y.iter().enumerate().take(n) {
            let r: Vec<f64> = row(i).collect();
            for a in 0..p {
                rhs[a] += r[a] * yi;
                for b in 0..p {
                    gram[a * p + b] += r[a] * r[b];
                }
            }
        }
        for a in 1..p {
            gram[a * p + a] += ridge;
        }
        let cond = condition_number(&gram, p);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::SingularSystem(cond));
        }
        let weights = cholesky_solve(&gram, &rhs, p).ok_or(Error::SingularSystem(cond))?;
        Ok(Self { weights })
    }

    pub fn predict_row(&self, features: &[f64]) -> f64 {
        self.weights[0] + self.weights[1..].iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn predict(&self, x: &Tensor<f64>) -> Vec<f64> {
        let d = x.shape()[1];
        x.data().chunks(d).map(|r| self.predict_row(r)).collect()
    }
}

/// Ratio of extreme eigenvalues of a symmetric matrix (cyclic Jacobi sweeps).
fn condition_number(a: &[f64], p: usize) -> f64 {
    let mut m = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * p + j] * m[i * p + j])
            .sum();
        let scale: f64 = (0..p).map(|i| m[i * p + i] * m[i * p + i]).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for i in 0..p {
            for j in i + 1..p {
                let aij = m[i * p + j];
                if aij == 0.0 {
                    continue;
                }
                let theta = (m[j * p + j] - m[i * p + i]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let (mki, mkj) = (m[k * p + i], m[k * p + j]);
                    m[k * p + i] = c * mki - s * mkj;
                    m[k * p + j] = s * mki + c * mkj;
                }
                for k in 0..p {
                    let (mik, mjk) = (m[i * p + k], m[j * p + k]);
                    m[i * p + k] = c * mik - s * mjk;
                    m[j * p + k] = s * mik + c * mjk;
                }
            }
        }
    }
    let eig: Vec<f64> = (0..p).map(|i| m[i * p + i].abs()).collect();
    let max = eig.iter().copied().fold(0.0, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn cholesky_solve(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = a[i * p + j] - (0..j).map(|k| l[i * p + k] * l[j * p + k]).sum::<f64>();
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut z = vec![0.0; p];
    for i in 0..p {
        z[i] = (b[i] - (0..i).map(|k| l[i * p + k] * z[k]).sum::<f64>()) / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        x[i] = (z[i] - (i + 1..p).map(|k| l[k * p + i] * x[k]).sum::<f64>()) / l[i * p + i];
    }
    Some(x)
}
