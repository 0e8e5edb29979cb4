//! Trainable layers, parameter registry and checkpoints.

mod layers;
mod params;

pub use layers::{
    he_uniform_bound, reduced_width, BatchNorm, Conv2d, Conv3d, Linear, Mlp, MlpSpec, ParamBuilder, ParamGrads,
    Session, BN_EPS, BN_MOMENTUM,
};
pub use params::{read_checkpoint, Param, ParamId, ParamStore, CHECKPOINT_MAGIC};
