//! Layout-aware encoder, Global Pointer scorer, training and checkpoints.

mod checkpoint;
mod config;
mod features;
mod model;
mod params;
mod tape;
mod train;

#[cfg(test)]
mod gradcheck;

pub use checkpoint::{Checkpoint, CheckpointMeta, MAGIC as CHECKPOINT_MAGIC};
pub use config::{
    EncoderConfig, HeadKind, Optimizer, Position1d, Position2d, Task, TrainConfig, MAX_SEQUENCE,
};
pub use features::{
    layout_features, position_rows, relative_buckets, token_bucket, FEATURE_DIM_2D, OFFSET_BUCKETS,
};
pub use model::{classify_tokens, encode, global_pointer_scores, loss, score_document, ScoreGrids};
pub use params::{Gradients, HeadSpec, ModelParams};
pub use tape::class_imbalance_loss;
pub use train::{
    bio_targets, corpus_type_count, default_order, example_loss, grad, grid_targets, head_spec,
    train, train_with_callback, Example, Target, TrainLog, Trained,
};
