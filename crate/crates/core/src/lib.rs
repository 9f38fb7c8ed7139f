//! Core library: tensors and quantization transforms, the STFT front-end,
//! the model graph family, FP16/INT8 compute kernels, the post-training
//! quantization pipeline, and the memory-hierarchy performance model.

pub mod error;
pub mod container;
pub mod dsp;
pub mod fp16;
pub mod graph;
pub mod tensor;
pub mod wav;

pub use error::{Error, Result};
