//! Channel, spatial and temporal attention computed conditionally on
//! tabular embeddings, and the residual backbone they are inserted into.

mod block;
mod cam;
mod config;
mod resnet;
mod sam;
mod tam;

pub use block::{AttentionMaps, TabAttention};
pub use cam::ChannelAttention;
pub use config::{AttentionSwitches, TabAttentionConfig};
pub use resnet::{Backbone, BackboneSpec, BlockConditioning, BlockShape, ConditioningSpec, ResidualBlock};
pub use sam::SpatialAttention;
pub use tam::{AttentionHead, Mhsa, TemporalAttention};
