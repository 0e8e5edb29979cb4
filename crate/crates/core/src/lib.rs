//! Tabular-conditioned attention for 3D convolutional networks.
//!
//! The crate is layered bottom-up: [`ndtensor`] (dense tensors and a
//! reverse-mode tape), [`nn`] (layers and parameters), [`tabattention`]
//! (channel/spatial/temporal attention conditioned on tabular embeddings and
//! the residual backbone), [`fusion`] (comparison models), [`datagen`]
//! (synthetic multimodal data) and [`train`] (optimization and
//! cross-validation). All numeric code is generic over [`Scalar`]; the
//! aliases below pin it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod model;
pub mod ndtensor;
pub mod nn;
pub mod scalar;
pub mod tabattention;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type TensorF64 = ndtensor::Tensor<f64>;
pub type TensorF32 = ndtensor::Tensor<f32>;
pub type TapeF64 = ndtensor::Tape<f64>;
pub type ParamStoreF64 = nn::ParamStore<f64>;
pub type ModelF64 = model::Model<f64>;
