//! Corpus directories: one `<id>.json` file per document plus a
//! `manifest.json` with the train/val/test split.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::document::{ensure_valid, Document};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
        }
    }
}

impl Splits {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Documents in manifest order (train, then val, then test).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub splits: Splits,
}

impl Corpus {
    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Documents of one split, in manifest order.
    pub fn split(&self, split: Split) -> Vec<&Document> {
        let by_id: HashMap<&str, &Document> =
            self.documents.iter().map(|d| (d.id.as_str(), d)).collect();
        self.splits
            .ids(split)
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).copied())
            .collect()
    }

    /// Manifest ids must be unique, name existing documents, and every
    /// document must be valid.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let ids: BTreeSet<&str> = self.documents.iter().map(|d| d.id.as_str()).collect();
        if ids.len() != self.documents.len() {
            return Err(Error::InvalidConfig("duplicate document ids".into()));
        }
        for id in self
            .splits
            .train
            .iter()
            .chain(&self.splits.val)
            .chain(&self.splits.test)
        {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "`{id}` listed twice in the manifest"
                )));
            }
            if !ids.contains(id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "manifest names missing document `{id}`"
                )));
            }
        }
        for d in &self.documents {
            valid_id(&d.id)?;
            ensure_valid(d)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Splits = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST))?)?;
        let mut documents = Vec::new();
        for id in manifest
            .train
            .iter()
            .chain(&manifest.val)
            .chain(&manifest.test)
        {
            valid_id(id)?;
            let text = std::fs::read_to_string(dir.join(format!("{id}.json")))?;
            let doc = Document::from_json(&text).map_err(|e| Error::InvalidDocument {
                id: id.clone(),
                reason: e.to_string(),
            })?;
            if &doc.id != id {
                return Err(Error::InvalidDocument {
                    id: id.clone(),
                    reason: format!("file holds document `{}`", doc.id),
                });
            }
            documents.push(doc);
        }
        let corpus = Self {
            documents,
            splits: manifest,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    /// Writes into a sibling temporary directory and renames it over `dir`.
    /// Extra files (`extras`: name → contents) are written alongside.
    pub fn save(&self, dir: &Path, extras: &[(&str, String)]) -> Result<()> {
        self.validate()?;
        let mut files: Vec<(String, String)> =
            Vec::with_capacity(self.documents.len() + extras.len() + 1);
        files.push((MANIFEST.to_owned(), pretty(&self.splits)?));
        for d in &self.documents {
            files.push((format!("{}.json", d.id), d.to_json()?));
        }
        for (name, text) in extras {
            files.push(((*name).to_owned(), text.clone()));
        }
        write_dir_atomic(dir, &files)
    }
}

fn valid_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != MANIFEST.trim_end_matches(".json")
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "document id `{id}` is not a usable file name"
        )))
    }
}

pub fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn temp_sibling(dir: &Path) -> PathBuf {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    dir.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Replaces `dir` with a directory holding exactly `files`.
pub fn write_dir_atomic<C: AsRef<[u8]>>(dir: &Path, files: &[(String, C)]) -> Result<()> {
    let tmp = temp_sibling(dir);
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::create_dir(&tmp)?;
    let result = (|| {
        for (name, text) in files {
            std::fs::write(tmp.join(name), text.as_ref())?;
        }
        if dir.exists() {
            std::fs::remove_dir_all(dir)?;
        }
        std::fs::rename(&tmp, dir)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&tmp);
    }
    result
}

/// Writes one file through a temporary sibling and a rename.
pub fn write_file_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
