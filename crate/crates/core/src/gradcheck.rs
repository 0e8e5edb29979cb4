//! Central-difference verification of every differentiable op, layer and a
//! tiny end-to-end model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::{late_concat_head, DaftFuse, InteractiveFuse, ModelKind};
use crate::model::{ArchConfig, ModelConfig, Network};
use crate::ndtensor::{ConvGeometry, Fault, ReduceOp, Tensor, Var};
use crate::nn::{BatchNorm, Conv2d, Conv3d, Linear, Mlp, MlpSpec, ParamBuilder, ParamStore, Session, BN_EPS};
use crate::tabattention::{
    AttentionSwitches, BlockShape, ChannelAttention, ConditioningSpec, Mhsa, ResidualBlock, SpatialAttention,
    TabAttention, TabAttentionConfig, TemporalAttention,
};
use crate::train::mse_loss;

/// Tolerance for single ops and layers.
pub const OP_TOLERANCE: f64 = 1e-6;
/// Tolerance for fusion layers and the end-to-end model.
pub const MODEL_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub seed: u64,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            seed: 1,
            fault: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Op,
    Layer,
    Model,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    /// Largest `|analytic - numeric| / max(1, |numeric|)` over all coordinates.
    pub worst_error: f64,
    pub tolerance: f64,
    pub coordinates: usize,
    /// Location of the worst coordinate, e.g. `input 0 [3]` or `param fc.weight [5]`.
    pub worst_at: String,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst_error <= self.tolerance
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(CheckResult::passed)
    }

    pub fn worst_error(&self) -> f64 {
        self.results.iter().map(|r| r.worst_error).fold(0.0, f64::max)
    }

    /// One line per check plus a verdict.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&format!(
                "{:<5} {:<6} {:<20} worst {:.3e}  tol {:.0e}  {:>5} coords  at {}\n",
                if r.passed() { "ok" } else { "FAIL" },
                format!("{:?}", r.kind).to_lowercase(),
                r.name,
                r.worst_error,
                r.tolerance,
                r.coordinates,
                r.worst_at
            ));
        }
        out.push_str(&format!(
            "{} checks, worst error {:.3e}: {}\n",
            self.results.len(),
            self.worst_error(),
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }

    /// `Err(GradcheckFailure)` naming every failing check.
    pub fn into_result(self) -> Result<Self> {
        let failed: Vec<&str> = self
            .results
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.name.as_str())
            .collect();
        if failed.is_empty() {
            Ok(self)
        } else {
            Err(Error::GradcheckFailure(failed.join(", ")))
        }
    }
}

type Graph<'f> = dyn Fn(&mut Session<'_, f64>, &[Var]) -> Result<Var> + 'f;

/// A differentiable computation over some inputs and a parameter store.
pub struct Case<'f> {
    pub name: String,
    pub kind: CheckKind,
    pub tolerance: f64,
    pub inputs: Vec<Tensor<f64>>,
    pub store: ParamStore<f64>,
    pub train: bool,
    pub graph: Box<Graph<'f>>,
}

fn weighted_loss(s: &mut Session<'_, f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = s.tape.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let w = Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0))?;
    let w = s.input(w);
    let prod = s.tape.mul(out, w)?;
    Ok(s.tape.sum_all(prod))
}

fn loss_value(case: &Case<'_>, store: &ParamStore<f64>, inputs: &[Tensor<f64>], seed: u64) -> Result<f64> {
    let mut st = store.clone();
    let mut s = Session::new(&mut st, case.train);
    let vars: Vec<Var> = inputs.iter().map(|x| s.tape.leaf(x.clone(), false)).collect();
    let out = (case.graph)(&mut s, &vars)?;
    let loss = weighted_loss(&mut s, out, seed)?;
    Ok(s.tape.value(loss).item())
}

/// Compares analytic gradients of `case` with central differences.
pub fn check(case: &Case<'_>, opts: &GradcheckOptions) -> Result<CheckResult> {
    let (analytic_inputs, analytic_params) = {
        let mut st = case.store.clone();
        let mut s = Session::new(&mut st, case.train);
        if let Some(f) = opts.fault {
            s.tape.inject_fault(f);
        }
        let vars: Vec<Var> = case.inputs.iter().map(|x| s.tape.leaf(x.clone(), true)).collect();
        let out = (case.graph)(&mut s, &vars)?;
        let loss = weighted_loss(&mut s, out, opts.seed)?;
        let g = s.tape.backward(loss)?;
        let gi: Vec<Tensor<f64>> = vars.iter().map(|&v| g.wrt(v)).collect();
        let gp = s.gradients(loss)?;
        (gi, gp)
    };

    let h = opts.step;
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut coords = 0;
    let mut record = |a: f64, n: f64, at: &dyn Fn() -> String| {
        let e = (a - n).abs() / n.abs().max(1.0);
        if e > worst || coords == 0 {
            worst = worst.max(e);
            worst_at = at();
        }
        coords += 1;
    };
    for (k, x) in case.inputs.iter().enumerate() {
        for i in 0..x.numel() {
            let mut inputs = case.inputs.clone();
            inputs[k].data_mut()[i] = x.data()[i] + h;
            let up = loss_value(case, &case.store, &inputs, opts.seed)?;
            inputs[k].data_mut()[i] = x.data()[i] - h;
            let down = loss_value(case, &case.store, &inputs, opts.seed)?;
            record(analytic_inputs[k].data()[i], (up - down) / (2.0 * h), &|| {
                format!("input {k} [{i}]")
            });
        }
    }
    for id in case.store.trainable_ids() {
        let base = case.store.value(id).clone();
        let grad = analytic_params.get(id).cloned().unwrap_or_else(|| base.zeros_like());
        for i in 0..base.numel() {
            let mut st = case.store.clone();
            let mut t = base.clone();
            t.data_mut()[i] = base.data()[i] + h;
            st.set(id, t.clone())?;
            let up = loss_value(case, &st, &case.inputs, opts.seed)?;
            t.data_mut()[i] = base.data()[i] - h;
            st.set(id, t)?;
            let down = loss_value(case, &st, &case.inputs, opts.seed)?;
            record(grad.data()[i], (up - down) / (2.0 * h), &|| {
                format!("param {} [{i}]", case.store.get(id).name)
            });
        }
    }
    Ok(CheckResult {
        name: case.name.clone(),
        kind: case.kind,
        worst_error: worst,
        tolerance: case.tolerance,
        coordinates: coords,
        worst_at,
    })
}

struct Suite {
    rng: ChaCha8Rng,
    seed: u64,
    cases: Vec<Case<'static>>,
}

impl Suite {
    fn tensor(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| self.rng.random_range(lo..hi)).expect("valid shape")
    }

    fn op(
        &mut self,
        name: &str,
        shapes: &[&[usize]],
        graph: impl Fn(&mut Session<'_, f64>, &[Var]) -> Result<Var> + 'static,
    ) {
        let inputs = shapes.iter().map(|s| self.tensor(s, -2.0, 2.0)).collect();
        self.cases.push(Case {
            name: name.into(),
            kind: CheckKind::Op,
            tolerance: OP_TOLERANCE,
            inputs,
            store: ParamStore::new(),
            train: true,
            graph: Box::new(graph),
        });
    }

    /// Registers a parametrized layer; trainable parameters are jittered so
    /// that zero-initialized biases and unit gains are exercised generically.
    fn layer<L: 'static>(
        &mut self,
        name: &str,
        kind: CheckKind,
        tolerance: f64,
        shapes: &[&[usize]],
        build: impl FnOnce(&mut ParamBuilder<'_, f64>) -> Result<L>,
        graph: impl Fn(&L, &mut Session<'_, f64>, &[Var]) -> Result<Var> + 'static,
    ) -> Result<()> {
        let mut store = ParamStore::new();
        let layer = build(&mut ParamBuilder::new(&mut store, self.seed))?;
        for id in store.trainable_ids() {
            let v = store.value(id).clone();
            let jitter = self.tensor(v.shape(), -0.1, 0.1);
            let data = v.data().iter().zip(jitter.data()).map(|(a, b)| a + b).collect();
            store.set(id, Tensor::new(v.shape(), data)?)?;
        }
        let inputs = shapes.iter().map(|s| self.tensor(s, -1.0, 1.0)).collect();
        self.cases.push(Case {
            name: name.into(),
            kind,
            tolerance,
            inputs,
            store,
            train: true,
            graph: Box::new(move |s, x| graph(&layer, s, x)),
        });
        Ok(())
    }
}

fn sw(cam: bool, sam: bool, tam: bool) -> AttentionSwitches {
    AttentionSwitches {
        use_cam: cam,
        use_sam: sam,
        use_tam: tam,
        use_tab: true,
    }
}

/// Every registered check, in report order.
pub fn suite(seed: u64) -> Result<Vec<Case<'static>>> {
    let mut s = Suite {
        rng: ChaCha8Rng::seed_from_u64(seed),
        seed,
        cases: Vec::new(),
    };
    s.op("add", &[&[2, 3], &[3]], |s, x| s.tape.add(x[0], x[1]));
    s.op("sub", &[&[2, 1, 3], &[4, 1]], |s, x| s.tape.sub(x[0], x[1]));
    s.op("mul", &[&[2, 3], &[2, 1]], |s, x| s.tape.mul(x[0], x[1]));
    s.op("scale", &[&[2, 3]], |s, x| Ok(s.tape.scale(x[0], -1.7)));
    s.op("shift", &[&[2, 3]], |s, x| Ok(s.tape.shift(x[0], 0.4)));
    s.op("matmul", &[&[2, 3, 4], &[4, 2]], |s, x| s.tape.matmul(x[0], x[1]));
    s.op("linear", &[&[2, 3, 4], &[5, 4], &[5]], |s, x| {
        s.tape.linear(x[0], x[1], Some(x[2]))
    });
    s.op("sum", &[&[2, 3, 4]], |s, x| s.tape.sum(x[0], &[0, 2], false));
    s.op("mean", &[&[2, 3, 4]], |s, x| s.tape.mean(x[0], &[1], true));
    s.op("max", &[&[2, 3, 4]], |s, x| {
        s.tape.reduce(ReduceOp::Max, x[0], &[2], false)
    });
    s.op("sum_all", &[&[3, 2]], |s, x| Ok(s.tape.sum_all(x[0])));
    s.op("mean_all", &[&[3, 2]], |s, x| Ok(s.tape.mean_all(x[0])));
    s.op("relu", &[&[4, 5]], |s, x| Ok(s.tape.relu(x[0])));
    s.op("sigmoid", &[&[4, 5]], |s, x| Ok(s.tape.sigmoid(x[0])));
    s.op("softmax", &[&[3, 5]], |s, x| Ok(s.tape.softmax_lastaxis(x[0])));
    s.op("reshape", &[&[2, 6]], |s, x| s.tape.reshape(x[0], &[3, 4]));
    s.op("permute", &[&[2, 3, 4]], |s, x| s.tape.permute(x[0], &[2, 0, 1]));
    s.op("transpose_last", &[&[2, 3, 4]], |s, x| s.tape.transpose_last(x[0]));
    s.op("concat", &[&[2, 3], &[2, 1]], |s, x| s.tape.concat(&[x[0], x[1]], 1));
    s.op("slice", &[&[4, 5]], |s, x| s.tape.slice(x[0], &[(1, 3), (0, 4)]));
    s.op("broadcast_to", &[&[3, 1]], |s, x| s.tape.broadcast_to(x[0], &[2, 3, 4]));
    s.op("conv3d", &[&[1, 1, 3, 4, 4], &[2, 1, 3, 3, 3], &[2]], |s, x| {
        s.tape
            .conv3d(x[0], x[1], Some(x[2]), ConvGeometry::new([1, 2, 1], [1, 1, 0]))
    });
    s.op("conv2d", &[&[1, 2, 4, 4], &[2, 2, 3, 3], &[2]], |s, x| {
        s.tape.conv2d(x[0], x[1], Some(x[2]), 2, 1)
    });
    s.op("batchnorm_train", &[&[4, 3, 2, 2], &[3], &[3]], |s, x| {
        Ok(s.tape.batchnorm(x[0], x[1], x[2], None, BN_EPS)?.0)
    });
    s.op("batchnorm_eval", &[&[2, 3, 2], &[3], &[3]], |s, x| {
        let (mean, var) = ([0.1, -0.2, 0.0], [0.5, 1.5, 2.0]);
        Ok(s.tape.batchnorm(x[0], x[1], x[2], Some((&mean, &var)), BN_EPS)?.0)
    });
    s.op("mse_loss", &[&[5], &[5]], |s, x| mse_loss(&mut s.tape, x[0], x[1]));

    let (lay, op_tol) = (CheckKind::Layer, OP_TOLERANCE);
    s.layer(
        "Linear",
        lay,
        op_tol,
        &[&[3, 4]],
        |b| Linear::new(b, "l", 4, 2, true),
        |l, s, x| l.forward(s, x[0]),
    )?;
    s.layer(
        "Mlp",
        lay,
        op_tol,
        &[&[3, 4]],
        |b| Mlp::new(b, "m", MlpSpec::new(4, 3, 2)),
        |l, s, x| l.forward(s, x[0]),
    )?;
    s.layer(
        "Conv2d",
        lay,
        op_tol,
        &[&[2, 2, 5, 5]],
        |b| Conv2d::new(b, "c", 2, 2, 3, 1, 1, true),
        |l, s, x| l.forward(s, x[0]),
    )?;
    s.layer(
        "Conv3d",
        lay,
        op_tol,
        &[&[2, 1, 3, 4, 4]],
        |b| Conv3d::new(b, "c", 1, 2, [3, 3, 3], ConvGeometry::new([1, 2, 2], [1, 1, 1]), false),
        |l, s, x| l.forward(s, x[0]),
    )?;
    s.layer(
        "BatchNorm",
        lay,
        op_tol,
        &[&[3, 2, 2, 3]],
        |b| BatchNorm::new(b, "bn", 2),
        |l, s, x| l.forward(s, x[0]),
    )?;

    let cfg = TabAttentionConfig::new(4, 4, 5, 5, 3);
    let (x_shape, tab_shape): (&[usize], &[usize]) = (&[2, 4, 4, 5, 5], &[2, 3]);
    let c = cfg;
    s.layer(
        "ChannelAttention",
        lay,
        op_tol,
        &[x_shape, tab_shape],
        move |b| ChannelAttention::new(b, "cam", &c),
        |l, s, x| l.forward(s, x[0], Some(x[1])),
    )?;
    let c = cfg;
    s.layer(
        "SpatialAttention",
        lay,
        op_tol,
        &[x_shape, tab_shape],
        move |b| SpatialAttention::new(b, "sam", &c),
        |l, s, x| l.forward(s, x[0], Some(x[1])),
    )?;
    s.layer(
        "Mhsa",
        lay,
        op_tol,
        &[&[2, 4, 3]],
        |b| Mhsa::new(b, "mhsa", 3, 4, 2, 4),
        |l, s, x| l.forward(s, x[0]),
    )?;
    let c = cfg;
    s.layer(
        "TemporalAttention",
        lay,
        op_tol,
        &[x_shape, tab_shape],
        move |b| TemporalAttention::new(b, "tam", &c),
        |l, s, x| l.forward(s, x[0], Some(x[1])),
    )?;
    let c = cfg;
    s.layer(
        "TabAttention",
        lay,
        op_tol,
        &[x_shape, tab_shape],
        move |b| TabAttention::new(b, "ta", c),
        |l, s, x| l.forward(s, x[0], Some(x[1])),
    )?;
    let shape = BlockShape {
        in_channels: 2,
        out_channels: 3,
        frames: 3,
        height: 4,
        width: 4,
        spatial_stride: 2,
    };
    let cond = ConditioningSpec::Attention {
        switches: sw(true, true, true),
        reduction: 16,
        heads: 2,
        head_dim: 4,
        sam_kernel: 7,
        tab_dim: 3,
    };
    s.layer(
        "ResidualBlock",
        lay,
        op_tol,
        &[&[2, 2, 3, 4, 4], tab_shape],
        move |b| ResidualBlock::new(b, "block", shape, cond),
        |l, s, x| l.forward(s, x[0], Some(x[1])),
    )?;

    let model_tol = MODEL_TOLERANCE;
    s.layer(
        "InteractiveFuse",
        lay,
        model_tol,
        &[&[2, 3, 2, 2, 2], tab_shape],
        |b| InteractiveFuse::new(b, "gate", 3, 3),
        |l, s, x| l.forward(s, x[0], x[1]),
    )?;
    s.layer(
        "DaftFuse",
        lay,
        model_tol,
        &[&[2, 3, 2, 2, 2], tab_shape],
        |b| DaftFuse::new(b, "daft", 3, 3),
        |l, s, x| l.forward(s, x[0], x[1]),
    )?;
    s.layer(
        "LateConcatHead",
        lay,
        model_tol,
        &[&[2, 4], tab_shape],
        |b| Linear::new(b, "head", 7, 1, true),
        |l, s, x| late_concat_head(s, l, x[0], x[1]),
    )?;

    let arch = ArchConfig::tiny();
    let video_shape = [2, 1, arch.frames, arch.input_size, arch.input_size];
    let model_tab = [2, arch.tab_dim];
    let config = ModelConfig::new(ModelKind::Tabattention, arch);
    s.layer(
        "TabAttentionModel",
        CheckKind::Model,
        model_tol,
        &[&video_shape, &model_tab],
        move |b| Network::new(b, config),
        |l, s, x| l.forward(s, x[0], Some(x[1])),
    )?;
    Ok(s.cases)
}

/// Runs the whole suite. Failing checks are reported, not raised; use
/// [`GradcheckReport::into_result`] to turn failures into an error.
pub fn run(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let results = suite(opts.seed)?
        .iter()
        .map(|c| check(c, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport { results })
}
