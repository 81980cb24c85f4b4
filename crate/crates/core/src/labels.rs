//! Grid labels for NER, entity linking and reading order, plus BIO tags for
//! the sequence-labeling baseline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::document::{Document, Entity, InputOrder, TypeRegistry};
use crate::error::{Error, Result};

/// Square binary matrix addressed as `(from_token, to_token)`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "GridRecord", try_from = "GridRecord")]
pub struct LabelGrid {
    n: usize,
    bits: Vec<bool>,
}

/// On-disk form of a [`LabelGrid`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridRecord {
    pub n: usize,
    pub set_bits: Vec<[usize; 2]>,
}

impl From<LabelGrid> for GridRecord {
    fn from(g: LabelGrid) -> Self {
        GridRecord {
            n: g.n,
            set_bits: g.set_bits().map(|(i, j)| [i, j]).collect(),
        }
    }
}

impl TryFrom<GridRecord> for LabelGrid {
    type Error = Error;

    fn try_from(r: GridRecord) -> Result<Self> {
        let mut g = LabelGrid::zeros(r.n);
        for [i, j] in r.set_bits {
            if i >= r.n || j >= r.n {
                return Err(Error::ShapeMismatch(format!(
                    "bit ({i},{j}) outside a {n}x{n} grid",
                    n = r.n
                )));
            }
            g.set(i, j, true);
        }
        Ok(g)
    }
}

impl fmt::Debug for LabelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LabelGrid")
            .field("n", &self.n)
            .field("set_bits", &self.set_bits().collect::<Vec<_>>())
            .finish()
    }
}

impl LabelGrid {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> bool {
        self.bits[from * self.n + to]
    }

    pub fn set(&mut self, from: usize, to: usize, value: bool) {
        self.bits[from * self.n + to] = value;
    }

    /// Set bits in row-major order.
    pub fn set_bits(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / self.n, k % self.n))
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn as_bits(&self) -> &[bool] {
        &self.bits
    }
}

/// One grid per entity type. Each entity contributes its consecutive word
/// pairs; a single-word entity marks its diagonal cell.
pub fn ner_grids(doc: &Document, registry: &TypeRegistry) -> Result<Vec<LabelGrid>> {
    ner_grids_for(doc.len(), &doc.entities, registry.len())
}

pub fn ner_grids_for(n: usize, entities: &[Entity], type_count: usize) -> Result<Vec<LabelGrid>> {
    let mut grids = vec![LabelGrid::zeros(n); type_count];
    // successor[t][i] = first recorded successor of token i in grid t.
    let mut successor = vec![vec![None::<usize>; n]; type_count];
    for ent in entities {
        let t = ent.type_id;
        if t >= type_count {
            return Err(Error::ShapeMismatch(format!(
                "entity type {t} outside registry of {type_count}"
            )));
        }
        if let Some(&w) = ent.word_indices.iter().find(|&&w| w >= n) {
            return Err(Error::ShapeMismatch(format!(
                "entity word {w} outside document of {n} words"
            )));
        }
        let pairs: Vec<(usize, usize)> = match ent.word_indices.as_slice() {
            [] => continue,
            [only] => vec![(*only, *only)],
            ws => ws.windows(2).map(|p| (p[0], p[1])).collect(),
        };
        for (a, b) in pairs {
            match successor[t][a] {
                Some(prev) if prev != b => {
                    return Err(Error::AmbiguousGrid {
                        type_id: t,
                        token: a,
                        first: prev,
                        second: b,
                    })
                }
                _ => successor[t][a] = Some(b),
            }
            grids[t].set(a, b, true);
        }
    }
    Ok(grids)
}

/// Inverse of [`ner_grids`]. Entities come out grouped by type, each group
/// sorted by first word.
pub fn entities_from_grids(grids: &[LabelGrid]) -> Result<Vec<Entity>> {
    let mut out = Vec::new();
    for (t, g) in grids.iter().enumerate() {
        let n = g.size();
        let mut next = vec![None::<usize>; n];
        let mut has_in = vec![false; n];
        let mut singleton = vec![false; n];
        let mut bad = Vec::new();
        for (i, j) in g.set_bits() {
            if i == j {
                singleton[i] = true;
                continue;
            }
            if next[i].is_some() {
                bad.push((i, j));
                continue;
            }
            if has_in[j] {
                bad.push((i, j));
                continue;
            }
            next[i] = Some(j);
            has_in[j] = true;
        }
        for i in 0..n {
            if singleton[i] && (next[i].is_some() || has_in[i]) {
                bad.push((i, i));
            }
        }
        let mut visited = vec![false; n];
        let mut found = Vec::new();
        for start in 0..n {
            if singleton[start] && next[start].is_none() && !has_in[start] {
                visited[start] = true;
                found.push(Entity::new(t, vec![start]));
                continue;
            }
            if next[start].is_none() || has_in[start] {
                continue;
            }
            let mut path = vec![start];
            visited[start] = true;
            let mut cur = start;
            while let Some(j) = next[cur] {
                path.push(j);
                visited[j] = true;
                cur = j;
            }
            found.push(Entity::new(t, path));
        }
        // Edges never reached from a path start sit on cycles.
        for i in 0..n {
            if let Some(j) = next[i] {
                if !visited[i] {
                    bad.push((i, j));
                }
            }
        }
        if !bad.is_empty() {
            bad.sort_unstable();
            bad.dedup();
            return Err(Error::GridStructure { bits: bad });
        }
        out.extend(found);
    }
    Ok(out)
}

/// Directed head-to-tail links between every word pair of linked entities.
pub fn el_grid(doc: &Document) -> Result<LabelGrid> {
    let mut g = LabelGrid::zeros(doc.len());
    for (l, &(head, tail)) in doc.links.iter().enumerate() {
        for e in [head, tail] {
            if e >= doc.entities.len() {
                return Err(Error::MissingEntity { link: l, entity: e });
            }
        }
        if head == tail {
            return Err(Error::SelfLink(l));
        }
        for &a in &doc.entities[head].word_indices {
            for &b in &doc.entities[tail].word_indices {
                g.set(a, b, true);
            }
        }
    }
    Ok(g)
}

/// Reading-order grid of size `n + 1`. Node 0 is the auxiliary start token and
/// word `w` lives at node `w + 1`. The path is open: nothing leaves the last
/// word.
pub fn rop_grid(gold_order: &InputOrder) -> LabelGrid {
    let n = gold_order.len();
    let mut g = LabelGrid::zeros(n + 1);
    let mut prev = 0;
    for &w in gold_order.as_slice() {
        g.set(prev, w + 1, true);
        prev = w + 1;
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BioTag {
    O,
    B(usize),
    I(usize),
}

impl BioTag {
    /// Dense class index: `O = 0`, `B-t = 1 + 2t`, `I-t = 2 + 2t`.
    pub fn class_index(self) -> usize {
        match self {
            BioTag::O => 0,
            BioTag::B(t) => 1 + 2 * t,
            BioTag::I(t) => 2 + 2 * t,
        }
    }

    pub fn from_class_index(k: usize) -> Self {
        match k {
            0 => BioTag::O,
            k if k % 2 == 1 => BioTag::B((k - 1) / 2),
            k => BioTag::I((k - 2) / 2),
        }
    }

    pub fn class_count(type_count: usize) -> usize {
        1 + 2 * type_count
    }

    pub fn render(self, registry: &TypeRegistry) -> String {
        let name = |t: usize| {
            registry
                .name(t)
                .map_or_else(|| t.to_string(), str::to_owned)
        };
        match self {
            BioTag::O => "O".to_owned(),
            BioTag::B(t) => format!("B-{}", name(t)),
            BioTag::I(t) => format!("I-{}", name(t)),
        }
    }

    pub fn parse(s: &str, registry: &TypeRegistry) -> Result<Self> {
        if s == "O" {
            return Ok(BioTag::O);
        }
        let (prefix, name) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidConfig(format!("malformed BIO tag `{s}`")))?;
        let t = registry
            .id(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown entity type in tag `{s}`")))?;
        match prefix {
            "B" => Ok(BioTag::B(t)),
            "I" => Ok(BioTag::I(t)),
            _ => Err(Error::InvalidConfig(format!("malformed BIO tag `{s}`"))),
        }
    }
}

/// Tags aligned to input positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BioTagSequence {
    pub tags: Vec<BioTag>,
}

impl BioTagSequence {
    /// `I-t` must follow `B-t` or `I-t`.
    pub fn is_well_formed(&self) -> bool {
        let mut prev = BioTag::O;
        for &tag in &self.tags {
            if let BioTag::I(t) = tag {
                match prev {
                    BioTag::B(u) | BioTag::I(u) if u == t => {}
                    _ => return false,
                }
            }
            prev = tag;
        }
        true
    }

    pub fn render(&self, registry: &TypeRegistry) -> Vec<String> {
        self.tags.iter().map(|t| t.render(registry)).collect()
    }
}

/// Projects gold entities onto `order`. Each maximal run of an entity that is
/// consecutive both in the input and in the entity's own order becomes its own
/// `B I*` span. Words already claimed by an earlier entity stay with it.
pub fn bio_encode(doc: &Document, order: &InputOrder) -> BioTagSequence {
    let ranks = order.ranks();
    let mut tags = vec![BioTag::O; order.len()];
    let mut claimed = vec![false; order.len()];
    for ent in &doc.entities {
        let mut prev_rank: Option<usize> = None;
        for &w in &ent.word_indices {
            if w >= ranks.len() || claimed[ranks[w]] {
                prev_rank = None;
                continue;
            }
            let r = ranks[w];
            tags[r] = match prev_rank {
                Some(p) if p + 1 == r => BioTag::I(ent.type_id),
                _ => BioTag::B(ent.type_id),
            };
            claimed[r] = true;
            prev_rank = Some(r);
        }
    }
    BioTagSequence { tags }
}

/// Extracts `B-t I-t*` runs. A stray `I-t` opens a new entity.
pub fn bio_decode(tags: &BioTagSequence, order: &InputOrder) -> Vec<Entity> {
    let perm = order.as_slice();
    let mut out = Vec::new();
    let mut open: Option<Entity> = None;
    for (v, &tag) in tags.tags.iter().enumerate() {
        match tag {
            BioTag::O => out.extend(open.take()),
            BioTag::B(t) => {
                out.extend(open.take());
                open = Some(Entity::new(t, vec![perm[v]]));
            }
            BioTag::I(t) => match open.as_mut() {
                Some(e) if e.type_id == t => e.word_indices.push(perm[v]),
                _ => {
                    out.extend(open.take());
                    open = Some(Entity::new(t, vec![perm[v]]));
                }
            },
        }
    }
    out.extend(open);
    out
}
