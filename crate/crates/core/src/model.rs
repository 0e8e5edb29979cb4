//! Complete regression models: residual backbone, optional tabular fusion, scalar head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{late_concat_head, ModelKind};
use crate::ndtensor::{Tensor, Var};
use crate::nn::{Linear, ParamBuilder, ParamStore, Session};
use crate::scalar::Scalar;
use crate::tabattention::{AttentionSwitches, Backbone, BackboneSpec, ConditioningSpec};

fn default_sam_kernel() -> usize {
    7
}

/// Architecture hyperparameters, serialized as the model config JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub stages: usize,
    pub widths: Vec<usize>,
    /// Channel-attention reduction ratio.
    pub z: usize,
    pub heads: usize,
    /// Per-head query/key/value width.
    pub d: usize,
    pub use_cam: bool,
    pub use_sam: bool,
    pub use_tam: bool,
    pub use_tab: bool,
    /// Frames per input segment.
    pub frames: usize,
    /// Square input side length.
    pub input_size: usize,
    pub tab_dim: usize,
    #[serde(default = "default_sam_kernel")]
    pub sam_kernel: usize,
}

impl ArchConfig {
    /// Desk-scale default: 16×64×64 segments, widths (8, 16, 32).
    pub fn desk() -> Self {
        Self {
            stages: 3,
            widths: vec![8, 16, 32],
            z: 16,
            heads: 2,
            d: 4,
            use_cam: true,
            use_sam: true,
            use_tam: true,
            use_tab: true,
            frames: 16,
            input_size: 64,
            tab_dim: 6,
            sam_kernel: 7,
        }
    }

    /// One-stage network whose attention block sees T=4, C=4, H=W=6, D=3.
    pub fn tiny() -> Self {
        Self {
            stages: 1,
            widths: vec![4],
            frames: 4,
            input_size: 12,
            tab_dim: 3,
            ..Self::desk()
        }
    }

    pub fn switches(&self) -> AttentionSwitches {
        AttentionSwitches {
            use_cam: self.use_cam,
            use_sam: self.use_sam,
            use_tam: self.use_tam,
            use_tab: self.use_tab,
        }
    }

    pub fn with_switches(mut self, sw: AttentionSwitches) -> Self {
        self.use_cam = sw.use_cam;
        self.use_sam = sw.use_sam;
        self.use_tam = sw.use_tam;
        self.use_tab = sw.use_tab;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.widths.len() != self.stages {
            return Err(Error::InvalidConfig(format!(
                "stages = {} but widths = {:?}",
                self.stages, self.widths
            )));
        }
        if self.frames == 0 || self.input_size == 0 || self.heads == 0 || self.d == 0 || self.z == 0 {
            return Err(Error::InvalidConfig(format!("non-positive extent in {self:?}")));
        }
        Ok(())
    }
}

/// Model kind plus architecture.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(flatten)]
    pub arch: ArchConfig,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, arch: ArchConfig) -> Self {
        Self { kind, arch }
    }

    /// Whether the forward pass consumes the tabular vector.
    pub fn uses_tab(&self) -> bool {
        match self.kind {
            ModelKind::ImageOnly => false,
            ModelKind::Tabattention => self.arch.use_tab && self.arch.switches().any_stage(),
            _ => true,
        }
    }
}

/// Layer graph of an imaging model (parameters live in a separate [`ParamStore`]).
#[derive(Clone, Debug)]
pub struct Network {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub head: Linear,
    late_concat: bool,
}

impl Network {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, config: ModelConfig) -> Result<Self> {
        let arch = &config.arch;
        arch.validate()?;
        let stages = arch.stages;
        let none = vec![ConditioningSpec::None; stages];
        let (block_conditioning, interactive_tab_dim) = match config.kind {
            ModelKind::TabularLinreg => return Err(Error::InvalidConfig("linear regression has no network".into())),
            ModelKind::ImageOnly | ModelKind::LateConcat => (none, None),
            ModelKind::Interactive => (none, Some(arch.tab_dim)),
            ModelKind::Daft => {
                let mut c = none;
                c[stages - 1] = ConditioningSpec::Daft { tab_dim: arch.tab_dim };
                (c, None)
            }
            ModelKind::Tabattention => (
                vec![
                    ConditioningSpec::Attention {
                        switches: arch.switches(),
                        reduction: arch.z,
                        heads: arch.heads,
                        head_dim: arch.d,
                        sam_kernel: arch.sam_kernel,
                        tab_dim: arch.tab_dim,
                    };
                    stages
                ],
                None,
            ),
        };
        let spec = BackboneSpec {
            widths: arch.widths.clone(),
            frames: arch.frames,
            input_size: arch.input_size,
            block_conditioning,
            interactive_tab_dim,
        };
        let backbone = Backbone::new(b, "backbone", &spec)?;
        let late_concat = config.kind == ModelKind::LateConcat;
        let head_in = backbone.out_channels() + if late_concat { arch.tab_dim } else { 0 };
        let head = Linear::new(b, "head", head_in, 1, true)?;
        Ok(Self {
            config,
            backbone,
            head,
            late_concat,
        })
    }

    /// `video[N,1,T,H,W]`, `tab[N,D]` → predictions `[N]`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, video: Var, tab: Option<Var>) -> Result<Var> {
        let arch = &self.config.arch;
        let vs = s.tape.shape(video).to_vec();
        if vs.len() != 5 || vs[1..] != [1, arch.frames, arch.input_size, arch.input_size] {
            return Err(Error::ShapeMismatch(format!(
                "model expects video [N,1,{},{},{}], got {vs:?}",
                arch.frames, arch.input_size, arch.input_size
            )));
        }
        let tab = if self.config.uses_tab() {
            let t = tab.ok_or_else(|| Error::ShapeMismatch("model needs tabular input".into()))?;
            if s.tape.shape(t) != [vs[0], arch.tab_dim] {
                return Err(Error::ShapeMismatch(format!(
                    "tabular batch {:?}, expected [{}, {}]",
                    s.tape.shape(t),
                    vs[0],
                    arch.tab_dim
                )));
            }
            Some(t)
        } else {
            None
        };
        let pooled = self.backbone.pooled(s, video, tab)?;
        if self.late_concat {
            return late_concat_head(s, &self.head, pooled, tab.expect("late fusion uses tab"));
        }
        let y = self.head.forward(s, pooled)?;
        s.tape.reshape(y, &[vs[0]])
    }

    /// Trainable backbone scalars, excluding fusion-specific layers and the head.
    pub fn backbone_param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.count_scalars(|n| n.starts_with("backbone.") && !n.contains(".fusion."))
    }
}

/// A network together with its parameters.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    pub net: Network,
    pub store: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    /// Builds and initializes every parameter deterministically from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = Network::new(&mut ParamBuilder::new(&mut store, seed), config)?;
        Ok(Self { net, store })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    /// Eval-mode predictions for a batch.
    pub fn predict(&mut self, video: &Tensor<T>, tab: Option<&Tensor<T>>) -> Result<Vec<T>> {
        let mut s = Session::new(&mut self.store, false);
        let v = s.input(video.clone());
        let t = tab.map(|t| s.input(t.clone()));
        let y = self.net.forward(&mut s, v, t)?;
        Ok(s.tape.value(y).data().to_vec())
    }
}
