use crate::error::{Error, Result};
use crate::ndtensor::Var;
use crate::nn::{reduced_width, Linear, Mlp, MlpSpec, ParamBuilder, ParamId, Session};
use crate::scalar::Scalar;
use crate::tabattention::config::TabAttentionConfig;

#[derive(Clone, Debug)]
pub struct AttentionHead {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
}

/// Multi-head self-attention over a `[N,T,F]` sequence with a learned
/// positional term `r[T,d]` added to every head's keys, squashed to one
/// output per timestep.
#[derive(Clone, Debug)]
pub struct Mhsa {
    pub heads: Vec<AttentionHead>,
    /// Relative positional encoding `r`, shared by all heads.
    pub rel_pos: ParamId,
    pub out: Linear,
    head_dim: usize,
    frames: usize,
}

impl Mhsa {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        in_dim: usize,
        frames: usize,
        heads: usize,
        head_dim: usize,
    ) -> Result<Self> {
        let heads = (0..heads)
            .map(|j| {
                Ok(AttentionHead {
                    query: Linear::new(b, &format!("{name}.head{j}.q"), in_dim, head_dim, true)?,
                    key: Linear::new(b, &format!("{name}.head{j}.k"), in_dim, head_dim, true)?,
                    value: Linear::new(b, &format!("{name}.head{j}.v"), in_dim, head_dim, true)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rel_pos = b.he_uniform(&format!("{name}.rel_pos"), &[frames, head_dim], head_dim)?;
        let out = Linear::new(b, &format!("{name}.out"), heads.len() * head_dim, 1, true)?;
        Ok(Self {
            heads,
            rel_pos,
            out,
            head_dim,
            frames,
        })
    }

    fn check_seq<T: Scalar>(&self, s: &Session<'_, T>, seq: Var) -> Result<()> {
        let shape = s.tape.shape(seq);
        if shape.len() != 3 || shape[1] != self.frames {
            return Err(Error::ShapeMismatch(format!(
                "MHSA expects [N,{},F], got {shape:?}",
                self.frames
            )));
        }
        Ok(())
    }

    /// Per-head `(softmax weights [N,T,T], values [N,T,d])`.
    pub fn attention<T: Scalar>(&self, s: &mut Session<'_, T>, seq: Var) -> Result<Vec<(Var, Var)>> {
        self.check_seq(s, seq)?;
        let r = s.param(self.rel_pos);
        let inv_sqrt_d = T::one() / T::lit(self.head_dim as f64).sqrt();
        let mut out = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = head.query.forward(s, seq)?;
            let k = head.key.forward(s, seq)?;
            let v = head.value.forward(s, seq)?;
            let kr = s.tape.add(k, r)?;
            let kt = s.tape.transpose_last(kr)?;
            let scores = s.tape.matmul(q, kt)?;
            let scores = s.tape.scale(scores, inv_sqrt_d);
            out.push((s.tape.softmax_lastaxis(scores), v));
        }
        Ok(out)
    }

    /// `seq[N,T,F]` → `[N,T,1]`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, seq: Var) -> Result<Var> {
        let mut outs = Vec::with_capacity(self.heads.len());
        for (weights, v) in self.attention(s, seq)? {
            outs.push(s.tape.matmul(weights, v)?);
        }
        let cat = s.tape.concat(&outs, 2)?;
        self.out.forward(s, cat)
    }
}

/// Temporal attention: `σ(MHSA([max_t, avg_t, embed(tab)]))`, one weight per frame.
#[derive(Clone, Debug)]
pub struct TemporalAttention {
    pub mhsa: Mhsa,
    pub tab_embed: Option<Mlp>,
    frames: usize,
}

impl TemporalAttention {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, cfg: &TabAttentionConfig) -> Result<Self> {
        let t = cfg.frames;
        let tab_embed = if cfg.switches.use_tab {
            Some(Mlp::new(
                b,
                &format!("{name}.tab_emb"),
                MlpSpec::new(cfg.tab_dim, reduced_width(t, 2), t),
            )?)
        } else {
            None
        };
        let features = if cfg.switches.use_tab { 3 } else { 2 };
        Ok(Self {
            mhsa: Mhsa::new(b, &format!("{name}.mhsa"), features, t, cfg.heads, cfg.head_dim)?,
            tab_embed,
            frames: t,
        })
    }

    /// The `[N,T,F]` sequence of per-frame descriptors (max, avg, tab).
    pub fn sequence<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, tab: Option<Var>) -> Result<Var> {
        let shape = s.tape.shape(x).to_vec();
        if shape.len() != 5 || shape[1] != self.frames {
            return Err(Error::ShapeMismatch(format!(
                "temporal attention expects [N,{},C,H,W], got {shape:?}",
                self.frames
            )));
        }
        let (n, t) = (shape[0], shape[1]);
        let mx = s.tape.max(x, &[2, 3, 4], true)?;
        let mx = s.tape.reshape(mx, &[n, t, 1])?;
        let av = s.tape.mean(x, &[2, 3, 4], true)?;
        let av = s.tape.reshape(av, &[n, t, 1])?;
        let mut parts = vec![mx, av];
        if let Some(embed) = &self.tab_embed {
            let tab = tab.ok_or_else(|| Error::ShapeMismatch("temporal attention needs tabular input".into()))?;
            let e = embed.forward(s, tab)?;
            parts.push(s.tape.reshape(e, &[n, t, 1])?);
        }
        s.tape.concat(&parts, 2)
    }

    /// `x[N,T,C,H,W]`, `tab[N,D]` → `[N,T,1,1,1]`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, tab: Option<Var>) -> Result<Var> {
        let seq = self.sequence(s, x, tab)?;
        let (n, t) = (s.tape.shape(seq)[0], s.tape.shape(seq)[1]);
        let logits = self.mhsa.forward(s, seq)?;
        let m = s.tape.sigmoid(logits);
        s.tape.reshape(m, &[n, t, 1, 1, 1])
    }
}
