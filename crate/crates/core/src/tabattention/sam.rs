use crate::error::{Error, Result};
use crate::ndtensor::Var;
use crate::nn::{reduced_width, Conv2d, Mlp, MlpSpec, ParamBuilder, Session};
use crate::scalar::Scalar;
use crate::tabattention::config::TabAttentionConfig;

/// Spatial attention: per frame, `σ(Conv([maxpool_C, avgpool_C, reshape(embed(tab))]))`.
#[derive(Clone, Debug)]
pub struct SpatialAttention {
    pub conv: Conv2d,
    pub tab_embed: Option<Mlp>,
    height: usize,
    width: usize,
}

impl SpatialAttention {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, cfg: &TabAttentionConfig) -> Result<Self> {
        let hw = cfg.height * cfg.width;
        let tab_embed = if cfg.switches.use_tab {
            Some(Mlp::new(
                b,
                &format!("{name}.tab_emb"),
                MlpSpec::new(cfg.tab_dim, reduced_width(hw, 2), hw),
            )?)
        } else {
            None
        };
        let in_ch = if cfg.switches.use_tab { 3 } else { 2 };
        let k = cfg.sam_kernel;
        Ok(Self {
            conv: Conv2d::new(b, &format!("{name}.conv"), in_ch, 1, k, 1, k / 2, true)?,
            tab_embed,
            height: cfg.height,
            width: cfg.width,
        })
    }

    /// `x[N,T,C,H,W]`, `tab[N,D]` → `[N,T,1,H,W]`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, tab: Option<Var>) -> Result<Var> {
        let shape = s.tape.shape(x).to_vec();
        if shape.len() != 5 || shape[3] != self.height || shape[4] != self.width {
            return Err(Error::ShapeMismatch(format!(
                "spatial attention expects [N,T,C,{},{}], got {shape:?}",
                self.height, self.width
            )));
        }
        let (n, t, h, w) = (shape[0], shape[1], shape[3], shape[4]);
        let mx = s.tape.max(x, &[2], true)?;
        let av = s.tape.mean(x, &[2], true)?;
        let mut parts = vec![mx, av];
        if let Some(embed) = &self.tab_embed {
            let tab = tab.ok_or_else(|| Error::ShapeMismatch("spatial attention needs tabular input".into()))?;
            let e = embed.forward(s, tab)?;
            let e = s.tape.reshape(e, &[n, 1, 1, h, w])?;
            let e = s.tape.broadcast_to(e, &[n, t, 1, h, w])?;
            parts.push(e);
        }
        let k = parts.len();
        let cat = s.tape.concat(&parts, 2)?;
        let cat = s.tape.reshape(cat, &[n * t, k, h, w])?;
        let logits = self.conv.forward(s, cat)?;
        let m = s.tape.sigmoid(logits);
        s.tape.reshape(m, &[n, t, 1, h, w])
    }
}
