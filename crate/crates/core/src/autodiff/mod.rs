//! Dense `f64` tensors, a define-by-run tape, and the adaptive-moment optimizer.

mod checkpoint;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{
    decode_params, encode_params, load_checkpoint, manifest_path, save_checkpoint,
    CheckpointManifest,
};
pub use optim::{adam_update, AdamConfig, OptimizerState};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{gaussian_kernel, sigmoid, softplus, Tape, Var, CE_EPS};
pub use tensor::{argmax, softmax_rows, Tensor};
