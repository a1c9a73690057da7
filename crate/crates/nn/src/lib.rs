//! A small CPU neural-network engine: sequential models of 2D/3D
//! convolutions, a 3D-to-2D shrinking module, pooling and dense layers with
//! a sigmoid multi-label head, trained with AdamW on binary cross-entropy.
//!
//! Models are generic over the scalar type; training runs in `f32` and
//! gradient checks in `f64`.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod layer;
pub mod loss;
pub mod model;
pub mod optim;
pub mod presets;
pub mod resources;
pub mod tensor;
pub mod train;

pub use error::{NnError, Result};
pub use layer::{LayerParams, LayerSpec};
pub use model::{Model, ModelSpec};
pub use resources::{resource_report, ResourceReport};
pub use tensor::Tensor;
pub use train::{train, train_with, Resume, SampleSource, TrainConfig, TrainOutcome, TrainingLog};

/// Single-precision model used for training and inference.
pub type Network = Model<f32>;
