//! A small reverse-mode automatic differentiation library.
//!
//! Values live on a [`Graph`] tape as row-major [`Tensor`]s; trainable
//! weights live in a [`ParamSet`] that outlives any single tape and carries
//! the [`Adam`] moments. Every operation is generic over [`Element`], so the
//! same model code runs in `f32` for training and `f64` for gradient checks.

mod backward;
mod element;
mod graph;
mod optim;
mod params;
mod tensor;

pub use backward::Gradients;
pub use element::Element;
pub use graph::{Graph, Var};
pub use optim::Adam;
pub use params::{Param, ParamId, ParamSet, PARAMS_MAGIC, PARAMS_VERSION};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("malformed parameter data: {0}")]
    Format(String),
    #[error("truncated parameter data: {0}")]
    Io(#[from] std::io::Error),
}
