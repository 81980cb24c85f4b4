use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tpp_core::{DecodeConfig, EncoderConfig, GenConfig, HeadKind, Split, TrainConfig};

use crate::error::Failure;

/// Which word order a command feeds the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OrderSource {
    /// Word-index order, as the OCR engine emitted it.
    Ocr,
    /// The document's `gold_order`.
    Gold,
    /// The document's `order` key, as written by `reorder`.
    Stored,
    /// A seeded segment-level shuffle, fixed per document id.
    Shuffled,
}

/// Input and output locations; filled from flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Everything a command needs. The top-level `seed` drives corpus
/// generation, parameter initialisation, dropout, batching and shuffled
/// input orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for document-parallel stages; 0 uses every core.
    pub workers: usize,
    pub head: HeadKind,
    /// Order of the training inputs.
    pub train_order: OrderSource,
    /// Order of the inputs for `decode`, `reorder` and `stats`.
    pub input_order: OrderSource,
    /// Split that `decode` and `eval` work on.
    pub split: Split,
    pub gen: GenConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            head: HeadKind::Tpp,
            train_order: OrderSource::Ocr,
            input_order: OrderSource::Ocr,
            split: Split::Test,
            gen: GenConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Parses a config file. A nested `seed` must repeat the top-level one,
    /// so an echoed config reads back unchanged.
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Failure::validation(format!("config: {e}")))?;
        let top = value.get("seed").cloned().unwrap_or(serde_json::json!(0));
        for section in ["gen", "encoder"] {
            if let Some(nested) = value.get(section).and_then(|s| s.get("seed")) {
                if *nested != top {
                    return Err(Failure::validation(format!(
                        "config: `{section}.seed` differs from the top-level `seed`"
                    )));
                }
            }
        }
        let cfg: Self = serde_json::from_value(value)
            .map_err(|e| Failure::validation(format!("config: {e}")))?;
        Ok(cfg.resolved())
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Copies the top-level seed into the nested configs.
    pub fn resolved(mut self) -> Self {
        self.gen.seed = self.seed;
        self.encoder.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let wrap = |section: &str, r: tpp_core::Result<()>| {
            r.map_err(|e| Failure::validation(format!("{section}: {e}")))
        };
        wrap("gen", self.gen.validate())?;
        wrap("encoder", self.encoder.validate())?;
        wrap("train", self.train.validate())?;
        wrap("decode", self.decode.validate())?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
