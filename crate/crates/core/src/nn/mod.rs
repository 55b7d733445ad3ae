//! Deterministic double-precision network substrate.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;

pub use adam::AdamState;
pub use mlp::{sigmoid, soft_update, softplus, Activation, LayerShape, MlpSpec, ParamVector, Trace};
