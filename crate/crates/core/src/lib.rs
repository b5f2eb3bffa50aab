//! Attention-based encoder-decoder speech recognition with multi-head
//! decoders, trained end to end with a small reverse-mode autodiff core.

pub mod attention;
pub mod checkpoint;
pub mod data;
pub mod decoder;
pub mod decoding;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod export;
pub mod gradcheck;
pub mod graph;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod params;
pub mod real;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Backward, Graph, Var};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use real::{Precision, Real};
pub use rng::RngState;
pub use tensor::Tensor;
