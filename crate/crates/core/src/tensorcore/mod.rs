//! Dense numeric arrays, the layered decoder with hand-derived
//! backpropagation, and the optimizer/scheduler stack.

mod checkpoint;
mod decoder;
mod optim;
mod tensor;

pub use checkpoint::{load_decoder, save_decoder, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use decoder::{
    decode_rows, Activation, DecoderGrads, DecoderParams, Layer, OutputActivation,
};
pub use optim::{
    adamw_step, early_stop_update, OptimizerConfig, OptimizerState, Schedule,
};
pub use tensor::Tensor;
