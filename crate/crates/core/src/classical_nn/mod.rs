//! Reverse-mode differentiable classical layers and the hybrid model.

mod adam;
#[cfg(test)]
pub(crate) mod gradcheck;
mod model;
pub mod ops;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use model::{
    ConvStage, EncoderConfig, ForwardVars, HybridModel, LinearClassifier, ParamSet,
    RepresentationKind, LEAKY_SLOPE,
};
pub use tape::{BackwardFn, Gradients, ParamId, Tape, Var};
pub use tensor::Tensor;
