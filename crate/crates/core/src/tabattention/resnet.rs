use crate::error::{Error, Result};
use crate::fusion::{DaftFuse, InteractiveFuse};
use crate::ndtensor::{conv_out_len, ConvGeometry, Var};
use crate::nn::{BatchNorm, Conv3d, ParamBuilder, Session};
use crate::scalar::Scalar;
use crate::tabattention::block::TabAttention;
use crate::tabattention::config::{AttentionSwitches, TabAttentionConfig};

/// What sits between the first ReLU and the second convolution of a residual block.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum BlockConditioning {
    None,
    Attention(TabAttention),
    Daft(DaftFuse),
}

/// conv → BN → ReLU → conditioning → conv → BN → (+ skip) → ReLU, on `[N,C,T,H,W]`.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: Conv3d,
    pub bn1: BatchNorm,
    pub conditioning: BlockConditioning,
    pub conv2: Conv3d,
    pub bn2: BatchNorm,
    pub projection: Option<(Conv3d, BatchNorm)>,
    pub out_channels: usize,
}

/// Geometry of one residual block: input extents and the spatial stride of its first conv.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub spatial_stride: usize,
}

impl BlockShape {
    /// (T, H, W) after the block.
    pub fn output_extent(&self) -> Result<(usize, usize, usize)> {
        let s = self.spatial_stride;
        let h = conv_out_len(self.height, 3, s, 1);
        let w = conv_out_len(self.width, 3, s, 1);
        match (h, w) {
            (Some(h), Some(w)) => Ok((self.frames, h, w)),
            _ => Err(Error::InvalidGeometry(format!("block {self:?} leaves no output"))),
        }
    }
}

/// How a block is conditioned on tabular data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConditioningSpec {
    None,
    Attention {
        switches: AttentionSwitches,
        reduction: usize,
        heads: usize,
        head_dim: usize,
        sam_kernel: usize,
        tab_dim: usize,
    },
    Daft {
        tab_dim: usize,
    },
}

impl ResidualBlock {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        shape: BlockShape,
        cond: ConditioningSpec,
    ) -> Result<Self> {
        let s = shape.spatial_stride;
        let (t, h, w) = shape.output_extent()?;
        let geom1 = ConvGeometry::new([1, s, s], [1, 1, 1]);
        let conv1 = Conv3d::new(
            b,
            &format!("{name}.conv1"),
            shape.in_channels,
            shape.out_channels,
            [3, 3, 3],
            geom1,
            false,
        )?;
        let bn1 = BatchNorm::new(b, &format!("{name}.bn1"), shape.out_channels)?;
        let conditioning = match cond {
            ConditioningSpec::None => BlockConditioning::None,
            ConditioningSpec::Attention {
                switches,
                reduction,
                heads,
                head_dim,
                sam_kernel,
                tab_dim,
            } if switches.any_stage() => {
                let cfg = TabAttentionConfig {
                    channels: shape.out_channels,
                    frames: t,
                    height: h,
                    width: w,
                    tab_dim,
                    reduction,
                    heads,
                    head_dim,
                    sam_kernel,
                    switches,
                };
                BlockConditioning::Attention(TabAttention::new(b, &format!("{name}.fusion.attn"), cfg)?)
            }
            ConditioningSpec::Attention { .. } => BlockConditioning::None,
            ConditioningSpec::Daft { tab_dim } => BlockConditioning::Daft(DaftFuse::new(
                b,
                &format!("{name}.fusion.daft"),
                tab_dim,
                shape.out_channels,
            )?),
        };
        let conv2 = Conv3d::new(
            b,
            &format!("{name}.conv2"),
            shape.out_channels,
            shape.out_channels,
            [3, 3, 3],
            ConvGeometry::same([3, 3, 3]),
            false,
        )?;
        let bn2 = BatchNorm::new(b, &format!("{name}.bn2"), shape.out_channels)?;
        let projection = if s != 1 || shape.in_channels != shape.out_channels {
            Some((
                Conv3d::new(
                    b,
                    &format!("{name}.proj"),
                    shape.in_channels,
                    shape.out_channels,
                    [1, 1, 1],
                    ConvGeometry::new([1, s, s], [0, 0, 0]),
                    false,
                )?,
                BatchNorm::new(b, &format!("{name}.proj_bn"), shape.out_channels)?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1,
            bn1,
            conditioning,
            conv2,
            bn2,
            projection,
            out_channels: shape.out_channels,
        })
    }

    pub fn attention(&self) -> Option<&TabAttention> {
        match &self.conditioning {
            BlockConditioning::Attention(a) => Some(a),
            _ => None,
        }
    }

    /// `x[N,Cin,T,H,W]` → `[N,Cout,T,H',W']`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, tab: Option<Var>) -> Result<Var> {
        let h = self.conv1.forward(s, x)?;
        let h = self.bn1.forward(s, h)?;
        let mut h = s.tape.relu(h);
        match &self.conditioning {
            BlockConditioning::None => {}
            BlockConditioning::Attention(attn) => {
                let p = s.tape.permute(h, &[0, 2, 1, 3, 4])?;
                let p = attn.forward(s, p, tab)?;
                h = s.tape.permute(p, &[0, 2, 1, 3, 4])?;
            }
            BlockConditioning::Daft(daft) => {
                let tab = tab.ok_or_else(|| Error::ShapeMismatch("DAFT block needs tabular input".into()))?;
                h = daft.forward(s, h, tab)?;
            }
        }
        let h = self.conv2.forward(s, h)?;
        let h = self.bn2.forward(s, h)?;
        let skip = match &self.projection {
            Some((conv, bn)) => {
                let p = conv.forward(s, x)?;
                bn.forward(s, p)?
            }
            None => x,
        };
        let sum = s.tape.add(h, skip)?;
        Ok(s.tape.relu(sum))
    }
}

/// Stem plus one residual block per stage, global-average pooled.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub stem: Conv3d,
    pub stem_bn: BatchNorm,
    pub blocks: Vec<ResidualBlock>,
    /// Channel gates applied after each stage (Interactive fusion); empty otherwise.
    pub stage_gates: Vec<InteractiveFuse>,
    /// (C, T, H, W) at the output of every stage.
    pub stage_shapes: Vec<[usize; 4]>,
}

/// Per-stage conditioning and gating choices for [`Backbone::new`].
#[derive(Clone, Debug)]
pub struct BackboneSpec {
    pub widths: Vec<usize>,
    pub frames: usize,
    pub input_size: usize,
    pub block_conditioning: Vec<ConditioningSpec>,
    /// `Some(tab_dim)` adds a tabular channel gate after each stage.
    pub interactive_tab_dim: Option<usize>,
}

impl Backbone {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, spec: &BackboneSpec) -> Result<Self> {
        if spec.widths.is_empty() || spec.widths.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "stage widths {:?} must be non-empty and positive",
                spec.widths
            )));
        }
        if spec.block_conditioning.len() != spec.widths.len() {
            return Err(Error::InvalidConfig("one conditioning spec per stage required".into()));
        }
        let w0 = spec.widths[0];
        let stem = Conv3d::new(
            b,
            &format!("{name}.stem.conv"),
            1,
            w0,
            [3, 3, 3],
            ConvGeometry::new([1, 2, 2], [1, 1, 1]),
            false,
        )?;
        let stem_bn = BatchNorm::new(b, &format!("{name}.stem.bn"), w0)?;
        let mut hw = conv_out_len(spec.input_size, 3, 2, 1)
            .ok_or_else(|| Error::InvalidGeometry(format!("input size {} too small", spec.input_size)))?;
        let mut cin = w0;
        let mut blocks = Vec::new();
        let mut stage_gates = Vec::new();
        let mut stage_shapes = Vec::new();
        for (i, (&width, &cond)) in spec.widths.iter().zip(&spec.block_conditioning).enumerate() {
            let shape = BlockShape {
                in_channels: cin,
                out_channels: width,
                frames: spec.frames,
                height: hw,
                width: hw,
                spatial_stride: if i == 0 { 1 } else { 2 },
            };
            let (t, h, _) = shape.output_extent()?;
            blocks.push(ResidualBlock::new(b, &format!("{name}.stage{i}"), shape, cond)?);
            if let Some(d) = spec.interactive_tab_dim {
                stage_gates.push(InteractiveFuse::new(
                    b,
                    &format!("{name}.stage{i}.fusion.gate"),
                    d,
                    width,
                )?);
            }
            stage_shapes.push([width, t, h, h]);
            hw = h;
            cin = width;
        }
        Ok(Self {
            stem,
            stem_bn,
            blocks,
            stage_gates,
            stage_shapes,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.out_channels)
    }

    /// Feature map after the last stage, `[N,C,T,H,W]`.
    pub fn features<T: Scalar>(&self, s: &mut Session<'_, T>, video: Var, tab: Option<Var>) -> Result<Var> {
        let h = self.stem.forward(s, video)?;
        let h = self.stem_bn.forward(s, h)?;
        let mut h = s.tape.relu(h);
        for (i, block) in self.blocks.iter().enumerate() {
            h = block.forward(s, h, tab)?;
            if let Some(gate) = self.stage_gates.get(i) {
                let tab = tab.ok_or_else(|| Error::ShapeMismatch("stage gate needs tabular input".into()))?;
                h = gate.forward(s, h, tab)?;
            }
        }
        Ok(h)
    }

    /// Global average pool over (T, H, W): `[N,C]`.
    pub fn pooled<T: Scalar>(&self, s: &mut Session<'_, T>, video: Var, tab: Option<Var>) -> Result<Var> {
        let f = self.features(s, video, tab)?;
        s.tape.mean(f, &[2, 3, 4], false)
    }
}
