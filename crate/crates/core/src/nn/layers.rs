use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ndtensor::{ConvGeometry, Tape, Tensor, Var};
use crate::nn::params::{ParamId, ParamStore};
use crate::scalar::Scalar;

/// Batch-norm running-average momentum.
pub const BN_MOMENTUM: f64 = 0.1;
/// Batch-norm variance epsilon.
pub const BN_EPS: f64 = 1e-5;

/// `max(1, floor(n / divisor))`, used for bottleneck widths such as C/z, H·W/2, T/2.
pub fn reduced_width(n: usize, divisor: usize) -> usize {
    (n / divisor.max(1)).max(1)
}

/// Creates parameters in a deterministic order from a seeded stream.
pub struct ParamBuilder<'a, T> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<'a, T: Scalar> ParamBuilder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        Self {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// He-uniform weight: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    pub fn he_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let bound = he_uniform_bound(fan_in);
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..bound)))?;
        self.store.add(name, t, true)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.add(name, Tensor::zeros(shape)?, true)
    }

    pub fn filled(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        self.store.add(name, Tensor::full(shape, T::lit(value))?, true)
    }

    /// Overwrites an initial value (same shape).
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        self.store.set(id, value)
    }

    /// Non-trainable state.
    pub fn buffer(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        self.store.add(name, value, false)
    }
}

pub fn he_uniform_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// One forward pass of a model: a fresh tape plus lazily bound parameters.
pub struct Session<'s, T: Scalar> {
    pub tape: Tape<T>,
    store: &'s mut ParamStore<T>,
    bound: Vec<Option<Var>>,
    train: bool,
}

impl<'s, T: Scalar> Session<'s, T> {
    pub fn new(store: &'s mut ParamStore<T>, train: bool) -> Self {
        let n = store.len();
        Self {
            tape: Tape::new(),
            store,
            bound: vec![None; n],
            train,
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    /// Tape node for a parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let p = self.store.get(id);
        let v = self.tape.leaf(p.value.clone(), p.trainable);
        self.bound[id.index()] = Some(v);
        v
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.tape.constant(t)
    }

    /// Gradients of `loss` for every trainable parameter used in this pass.
    pub fn gradients(&self, loss: Var) -> Result<ParamGrads<T>> {
        let g = self.tape.backward(loss)?;
        let mut out = BTreeMap::new();
        for (i, v) in self.bound.iter().enumerate() {
            if let Some(v) = v {
                let id = ParamId::from_index(i);
                if self.store.get(id).trainable {
                    out.insert(id, g.wrt(*v));
                }
            }
        }
        Ok(ParamGrads(out))
    }

    fn update_running(&mut self, mean_id: ParamId, var_id: ParamId, mean: &[T], var: &[T]) {
        let m = T::lit(BN_MOMENTUM);
        for (r, &b) in self.store.value_mut(mean_id).data_mut().iter_mut().zip(mean) {
            *r = (T::one() - m) * *r + m * b;
        }
        for (r, &b) in self.store.value_mut(var_id).data_mut().iter_mut().zip(var) {
            *r = (T::one() - m) * *r + m * b;
        }
    }
}

/// Per-parameter gradients; parameters absent from the map had zero gradient.
#[derive(Clone, Debug, Default)]
pub struct ParamGrads<T>(pub BTreeMap<ParamId, Tensor<T>>);

impl<T: Scalar> ParamGrads<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.0.get(&id)
    }
}

/// Dense layer over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Result<Self> {
        Ok(Self {
            weight: b.he_uniform(&format!("{name}.weight"), &[out_dim, in_dim], in_dim)?,
            bias: if bias {
                Some(b.zeros(&format!("{name}.bias"), &[out_dim])?)
            } else {
                None
            },
            in_dim,
            out_dim,
        })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = self.bias.map(|b| s.param(b));
        s.tape.linear(x, w, b)
    }
}

/// Sizes of a two-layer perceptron.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub bias: bool,
}

impl MlpSpec {
    pub fn new(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            hidden_dim: hidden_dim.max(1),
            out_dim,
            bias: true,
        }
    }
}

/// `linear → relu → linear`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, spec: MlpSpec) -> Result<Self> {
        if spec.in_dim == 0 || spec.hidden_dim == 0 || spec.out_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "{name}: MLP sizes must be positive: {spec:?}"
            )));
        }
        Ok(Self {
            spec,
            first: Linear::new(b, &format!("{name}.fc1"), spec.in_dim, spec.hidden_dim, spec.bias)?,
            second: Linear::new(b, &format!("{name}.fc2"), spec.hidden_dim, spec.out_dim, spec.bias)?,
        })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let h = self.first.forward(s, x)?;
        let h = s.tape.relu(h);
        self.second.forward(s, h)
    }
}

/// 2D convolution with square kernel.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::InvalidGeometry(format!("{name}: kernel {kernel} must be odd")));
        }
        Ok(Self {
            weight: b.he_uniform(
                &format!("{name}.weight"),
                &[out_ch, in_ch, kernel, kernel],
                in_ch * kernel * kernel,
            )?,
            bias: if bias {
                Some(b.zeros(&format!("{name}.bias"), &[out_ch])?)
            } else {
                None
            },
            stride,
            pad,
        })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = self.bias.map(|b| s.param(b));
        s.tape.conv2d(x, w, b, self.stride, self.pad)
    }
}

/// 3D convolution over `[N,C,T,H,W]`.
#[derive(Clone, Debug)]
pub struct Conv3d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub geom: ConvGeometry,
}

impl Conv3d {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 3],
        geom: ConvGeometry,
        bias: bool,
    ) -> Result<Self> {
        if kernel.iter().any(|k| k % 2 == 0) {
            return Err(Error::InvalidGeometry(format!("{name}: kernel {kernel:?} must be odd")));
        }
        let fan_in = in_ch * kernel.iter().product::<usize>();
        Ok(Self {
            weight: b.he_uniform(
                &format!("{name}.weight"),
                &[out_ch, in_ch, kernel[0], kernel[1], kernel[2]],
                fan_in,
            )?,
            bias: if bias {
                Some(b.zeros(&format!("{name}.bias"), &[out_ch])?)
            } else {
                None
            },
            geom,
        })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = self.bias.map(|b| s.param(b));
        s.tape.conv3d(x, w, b, self.geom)
    }
}

/// Batch normalization over axis 1 with running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: b.filled(&format!("{name}.gamma"), &[channels], 1.0)?,
            beta: b.zeros(&format!("{name}.beta"), &[channels])?,
            running_mean: b.buffer(&format!("{name}.running_mean"), Tensor::zeros(&[channels])?)?,
            running_var: b.buffer(&format!("{name}.running_var"), Tensor::ones(&[channels])?)?,
        })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let gamma = s.param(self.gamma);
        let beta = s.param(self.beta);
        let eps = T::lit(BN_EPS);
        if s.is_train() {
            let (y, stats) = s.tape.batchnorm(x, gamma, beta, None, eps)?;
            let stats = stats.expect("train mode returns batch statistics");
            s.update_running(self.running_mean, self.running_var, &stats.mean, &stats.var_unbiased);
            Ok(y)
        } else {
            let rm = s.store().value(self.running_mean).data().to_vec();
            let rv = s.store().value(self.running_var).data().to_vec();
            let (y, _) = s.tape.batchnorm(x, gamma, beta, Some((&rm, &rv)), eps)?;
            Ok(y)
        }
    }
}
