use crate::error::{Error, Result};
use crate::ndtensor::Var;
use crate::nn::{ParamBuilder, Session};
use crate::scalar::Scalar;
use crate::tabattention::cam::ChannelAttention;
use crate::tabattention::config::TabAttentionConfig;
use crate::tabattention::sam::SpatialAttention;
use crate::tabattention::tam::TemporalAttention;

/// The three attention maps of one forward pass; `None` for disabled stages.
#[derive(Clone, Copy, Debug, Default)]
pub struct AttentionMaps {
    /// `[N,T,C,1,1]`
    pub channel: Option<Var>,
    /// `[N,T,1,H,W]`
    pub spatial: Option<Var>,
    /// `[N,T,1,1,1]`
    pub temporal: Option<Var>,
}

/// Sequential channel → spatial → temporal refinement of temporal feature maps.
#[derive(Clone, Debug)]
pub struct TabAttention {
    pub cfg: TabAttentionConfig,
    pub cam: Option<ChannelAttention>,
    pub sam: Option<SpatialAttention>,
    pub tam: Option<TemporalAttention>,
}

impl TabAttention {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, cfg: TabAttentionConfig) -> Result<Self> {
        cfg.validate()?;
        let sw = cfg.switches;
        Ok(Self {
            cam: if sw.use_cam {
                Some(ChannelAttention::new(b, &format!("{name}.cam"), &cfg)?)
            } else {
                None
            },
            sam: if sw.use_sam {
                Some(SpatialAttention::new(b, &format!("{name}.sam"), &cfg)?)
            } else {
                None
            },
            tam: if sw.use_tam {
                Some(TemporalAttention::new(b, &format!("{name}.tam"), &cfg)?)
            } else {
                None
            },
            cfg,
        })
    }

    fn check_input<T: Scalar>(&self, s: &Session<'_, T>, x: Var, tab: Option<Var>) -> Result<()> {
        let c = &self.cfg;
        let shape = s.tape.shape(x);
        if shape.len() != 5 || shape[1..] != [c.frames, c.channels, c.height, c.width] {
            return Err(Error::ShapeMismatch(format!(
                "attention block configured for [N,{},{},{},{}], got {shape:?}",
                c.frames, c.channels, c.height, c.width
            )));
        }
        if c.switches.use_tab {
            let Some(tab) = tab else {
                return Err(Error::ShapeMismatch("attention block needs tabular input".into()));
            };
            let ts = s.tape.shape(tab);
            if ts != [shape[0], c.tab_dim] {
                return Err(Error::ShapeMismatch(format!(
                    "tabular input {ts:?}, expected [{}, {}]",
                    shape[0], c.tab_dim
                )));
            }
        }
        Ok(())
    }

    /// `x[N,T,C,H,W]`, `tab[N,D]` → refined `[N,T,C,H,W]` plus the maps used.
    pub fn forward_with_maps<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        x: Var,
        tab: Option<Var>,
    ) -> Result<(Var, AttentionMaps)> {
        self.check_input(s, x, tab)?;
        let tab = if self.cfg.switches.use_tab { tab } else { None };
        let mut maps = AttentionMaps::default();
        let mut cur = x;
        if let Some(cam) = &self.cam {
            let m = cam.forward(s, cur, tab)?;
            cur = s.tape.mul(m, cur)?;
            maps.channel = Some(m);
        }
        if let Some(sam) = &self.sam {
            let m = sam.forward(s, cur, tab)?;
            cur = s.tape.mul(m, cur)?;
            maps.spatial = Some(m);
        }
        if let Some(tam) = &self.tam {
            let m = tam.forward(s, cur, tab)?;
            cur = s.tape.mul(m, cur)?;
            maps.temporal = Some(m);
        }
        Ok((cur, maps))
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, tab: Option<Var>) -> Result<Var> {
        Ok(self.forward_with_maps(s, x, tab)?.0)
    }

    /// Unbatched form: `x[T,C,H,W]`, `tab[D]` → output `[T,C,H,W]` and maps
    /// shaped `[T,C,1,1]`, `[T,1,H,W]`, `[T,1,1,1]`.
    pub fn forward_single<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        x: Var,
        tab: Option<Var>,
    ) -> Result<(Var, AttentionMaps)> {
        let shape = s.tape.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(Error::ShapeMismatch(format!("expected [T,C,H,W], got {shape:?}")));
        }
        let mut batched = vec![1];
        batched.extend_from_slice(&shape);
        let xb = s.tape.reshape(x, &batched)?;
        let tb = match tab {
            Some(t) => {
                let d = s.tape.shape(t).iter().product::<usize>();
                Some(s.tape.reshape(t, &[1, d])?)
            }
            None => None,
        };
        let (out, maps) = self.forward_with_maps(s, xb, tb)?;
        let out = s.tape.reshape(out, &shape)?;
        let squeeze = |s: &mut Session<'_, T>, v: Option<Var>| -> Result<Option<Var>> {
            v.map(|v| {
                let sh = s.tape.shape(v)[1..].to_vec();
                s.tape.reshape(v, &sh)
            })
            .transpose()
        };
        Ok((
            out,
            AttentionMaps {
                channel: squeeze(s, maps.channel)?,
                spatial: squeeze(s, maps.spatial)?,
                temporal: squeeze(s, maps.temporal)?,
            },
        ))
    }
}
