//! Binary checkpoints: the magic `TPPCKPT1`, a little-endian `u32` header
//! length, a JSON header, then every block as
//! `u32 name length, name, u32 rows, u32 cols, rows*cols f64 (LE, row-major)`.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::{EncoderConfig, HeadKind, Task, TrainConfig};
use super::params::{HeadSpec, ModelParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TPPCKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub task: Task,
    pub head_kind: HeadKind,
    /// Entity type names, in id order.
    pub type_names: Vec<String>,
    pub train: TrainConfig,
    pub steps_done: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    encoder: EncoderConfig,
    head: HeadSpec,
    meta: CheckpointMeta,
    blocks: usize,
}

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            encoder: self.params.config.clone(),
            head: self.params.head,
            meta: self.meta.clone(),
            blocks: self.params.blocks().len(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + self.params.parameter_count() * 8);
        out.extend_from_slice(MAGIC);
        push_u32(&mut out, json.len())?;
        out.extend_from_slice(&json);
        for (name, block) in self.params.names().iter().zip(self.params.blocks()) {
            push_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            push_u32(&mut out, block.nrows())?;
            push_u32(&mut out, block.ncols())?;
            for v in block.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let len = r.u32()?;
        let header: Header = serde_json::from_slice(r.take(len)?)?;
        let mut named = Vec::with_capacity(header.blocks);
        for _ in 0..header.blocks {
            let len = r.u32()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?
                .to_owned();
            let rows = r.u32()?;
            let cols = r.u32()?;
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint("block too large".into()))?;
            let raw = r.take(
                count
                    .checked_mul(8)
                    .ok_or_else(|| Error::Checkpoint("block too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let block = Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            named.push((name, block));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let params = ModelParams::from_blocks(header.encoder, header.head, named)?;
        Ok(Self {
            meta: header.meta,
            params,
        })
    }

    /// Writes through a temporary file and a rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
