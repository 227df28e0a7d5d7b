//! A small pre-LN encoder-decoder transformer with tied embeddings,
//! hand-written backpropagation, Adam, greedy/beam decoding and exact
//! checkpoints.

mod checkpoint;
mod decode;
mod gradcheck;
pub mod ops;
mod optim;
mod params;
mod transformer;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use decode::{decode, decode_with_limits, default_limit, length_penalty, translate, DecodeMode, Hypothesis, Translation};
pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_FLOOR, GRAD_CHECK_STEP};
pub use ops::Scalar;
pub use optim::{global_norm, train_step, OptimConfig, OptimizerState, StepStats};
pub use params::{param_count, Layout, Model, ModelConfig, TensorInfo};
pub use transformer::{attention_maps, decoder_logits, forward_loss, loss_and_grad, LossOutput};
