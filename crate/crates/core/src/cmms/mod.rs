//! No-reference quality scoring: degradation sampling, the quality mapping,
//! and the transformer regressor.

pub mod checkpoint;
pub mod corruption;
pub mod model;
pub mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, MODEL_MAGIC};
pub use corruption::{
    corrupt_sample, corrupt_tokens, fragment_swap, fragment_swap_within, quality_target, CorruptionSpec,
    MAX_SEVERITY, QUALITY_DECAY,
};
pub use model::{
    forward, loss_and_grad, loss_and_grad_with, score_dataset, score_dataset_with, RegressorConfig, RegressorParams,
};
pub use train::{train, train_with, AdamW, TrainConfig, TrainLog};
