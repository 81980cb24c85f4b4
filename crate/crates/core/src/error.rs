use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a permutation: {0}")]
    InvalidPermutation(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("entity type {type_id}: token {token} begins edges to both {first} and {second}")]
    AmbiguousGrid {
        type_id: usize,
        token: usize,
        first: usize,
        second: usize,
    },

    #[error("grid violates path structure at bits {bits:?}")]
    GridStructure { bits: Vec<(usize, usize)> },

    #[error("link {link} references missing entity {entity}")]
    MissingEntity { link: usize, entity: usize },

    #[error("link {0} connects an entity to itself")]
    SelfLink(usize),

    #[error("sequence of {n} tokens exceeds the maximum of {max}")]
    SequenceTooLong { n: usize, max: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("training diverged at step {step}")]
    Divergence { step: usize },

    #[error("gold order is empty")]
    EmptyGold,

    #[error("token {0} appears more than once")]
    DuplicateToken(usize),

    #[error("token {0} is not part of the gold order")]
    UnknownToken(usize),

    #[error("invalid document `{id}`: {reason}")]
    InvalidDocument { id: String, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
