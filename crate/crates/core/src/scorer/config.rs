use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest token sequence the encoder accepts.
pub const MAX_SEQUENCE: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position1d {
    /// No order signal; the model is blind to the input order.
    None,
    /// Rank of the word in the whole input sequence.
    Global,
    /// Rank of the word's segment plus rank of the word inside the segment.
    Local,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position2d {
    /// Every word carries its segment's box.
    Segment,
    /// Every word carries its own box.
    Word,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden_dim: usize,
    pub vocab_buckets: usize,
    pub use_1d_position: Position1d,
    pub use_2d_position: Position2d,
    /// Self-attention blocks before the feed-forward blocks.
    pub attention_layers: usize,
    /// Learned attention bias per bucketed relative box offset.
    pub relative_2d_bias: bool,
    pub mlp_layers: usize,
    pub dropout_rate: f64,
    pub multi_dropout_k: usize,
    pub positional_residual: bool,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            vocab_buckets: 4096,
            use_1d_position: Position1d::Global,
            use_2d_position: Position2d::Word,
            attention_layers: 1,
            relative_2d_bias: true,
            mlp_layers: 2,
            dropout_rate: 0.1,
            multi_dropout_k: 4,
            positional_residual: true,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.hidden_dim == 0 || !self.hidden_dim.is_multiple_of(2) {
            return fail("hidden_dim must be positive and even");
        }
        if self.vocab_buckets < 2 {
            return fail("vocab_buckets must be at least 2");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must lie in [0, 1)");
        }
        if self.multi_dropout_k == 0 {
            return fail("multi_dropout_k must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ner,
    El,
    Rop,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ner" => Ok(Task::Ner),
            "el" => Ok(Task::El),
            "rop" => Ok(Task::Rop),
            _ => Err(Error::InvalidConfig(format!(
                "unknown task `{s}`, expected ner | el | rop"
            ))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Ner => "ner",
            Task::El => "el",
            Task::Rop => "rop",
        })
    }
}

/// Prediction head on top of the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Pairwise token-path scoring.
    Tpp,
    /// BIO token classification (sequence-labeling baseline, NER only).
    Bio,
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tpp" => Ok(HeadKind::Tpp),
            "bio" => Ok(HeadKind::Bio),
            _ => Err(Error::InvalidConfig(format!(
                "unknown head `{s}`, expected tpp | bio"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Gradient descent with linear warmup.
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    /// Fraction of training documents fed in a segment-shuffled order each
    /// epoch.
    pub shuffle_proportion: f64,
    pub optimizer: Optimizer,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            steps: 500,
            batch_size: 8,
            warmup_fraction: 0.01,
            weight_decay: 1e-5,
            shuffle_proportion: 0.0,
            optimizer: Optimizer::Sgd,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail("lr must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return fail("warmup_fraction must lie in [0, 1]");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail("weight_decay must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.shuffle_proportion) {
            return fail("shuffle_proportion must lie in [0, 1]");
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return fail("clip_norm must be positive");
        }
        Ok(())
    }
}
