use crate::error::{Error, Result};
use crate::ndtensor::Var;
use crate::nn::{reduced_width, Mlp, MlpSpec, ParamBuilder, Session};
use crate::scalar::Scalar;
use crate::tabattention::config::TabAttentionConfig;

/// Channel attention: per frame,
/// `σ(MLP(maxpool) + MLP(avgpool) + MLP(embed(tab)))` with one MLP shared
/// across descriptors and frames.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    pub shared: Mlp,
    pub tab_embed: Option<Mlp>,
    channels: usize,
}

impl ChannelAttention {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, cfg: &TabAttentionConfig) -> Result<Self> {
        let c = cfg.channels;
        let hidden = reduced_width(c, cfg.reduction);
        let shared = Mlp::new(b, &format!("{name}.mlp"), MlpSpec::new(c, hidden, c))?;
        let tab_embed = if cfg.switches.use_tab {
            Some(Mlp::new(
                b,
                &format!("{name}.tab_emb"),
                MlpSpec::new(cfg.tab_dim, hidden, c),
            )?)
        } else {
            None
        };
        Ok(Self {
            shared,
            tab_embed,
            channels: c,
        })
    }

    /// `x[N,T,C,H,W]`, `tab[N,D]` → `[N,T,C,1,1]`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, tab: Option<Var>) -> Result<Var> {
        let shape = s.tape.shape(x).to_vec();
        if shape.len() != 5 || shape[2] != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "channel attention expects [N,T,{},H,W], got {shape:?}",
                self.channels
            )));
        }
        let (n, t, c) = (shape[0], shape[1], shape[2]);
        let mx = s.tape.max(x, &[3, 4], false)?;
        let av = s.tape.mean(x, &[3, 4], false)?;
        let a = self.shared.forward(s, mx)?;
        let b = self.shared.forward(s, av)?;
        let mut logits = s.tape.add(a, b)?;
        if let Some(embed) = &self.tab_embed {
            let tab = tab.ok_or_else(|| Error::ShapeMismatch("channel attention needs tabular input".into()))?;
            let e = embed.forward(s, tab)?;
            let e = self.shared.forward(s, e)?;
            let e = s.tape.reshape(e, &[n, 1, c])?;
            logits = s.tape.add(logits, e)?;
        }
        let m = s.tape.sigmoid(logits);
        s.tape.reshape(m, &[n, t, c, 1, 1])
    }
}
