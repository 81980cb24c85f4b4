//! Token path prediction for document information extraction: data model,
//! grid labels, a small layout-aware scorer, decoders, metrics and a
//! synthetic corpus generator.

pub mod corpus;
pub mod datagen;
pub mod decode;
pub mod document;
pub mod error;
pub mod labels;
pub mod metrics;
pub mod scorer;
pub mod seed;

pub use corpus::{Corpus, Split, Splits};
pub use datagen::{gen_corpus, shuffle_order, GenConfig};
pub use decode::{
    el_decode, ner_decode, predict_entities, predict_links, reorder, reorder_from, rop_decode,
    DecodeConfig, Prediction, ScoredEntity,
};
pub use document::{
    apply_order, ocr_order, validate_document, BoundingBox, Document, Entity, EntityType,
    InputOrder, OrderedView, Segment, TypeRegistry, Word,
};
pub use error::{Error, Result};
pub use labels::{
    bio_decode, bio_encode, el_grid, entities_from_grids, ner_grids, rop_grid, BioTag,
    BioTagSequence, LabelGrid,
};
pub use metrics::{
    ard, continuous_entity_rate, dataset_stats, entity_f1, page_bleu, word_f1, DatasetStats,
    EvalReport,
};
pub use scorer::{
    Checkpoint, CheckpointMeta, EncoderConfig, HeadKind, HeadSpec, ModelParams, ScoreGrids, Task,
    TrainConfig,
};
