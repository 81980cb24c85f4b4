//! Document and layout data model.
//!
//! Coordinates use a top-left origin with `y` growing downwards, the usual OCR
//! convention. Sources that describe boxes by their bottom-left and top-right
//! vertices with `y` growing upwards map onto this model through
//! [`BoundingBox::from_bottom_left_top_right`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance when checking that a segment box contains its words.
pub const DEFAULT_SEGMENT_SLACK: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Converts a box given by its bottom-left and top-right vertices in a
    /// frame whose `y` axis points up into the top-left-origin frame.
    pub fn from_bottom_left_top_right(
        bottom_left: (f64, f64),
        top_right: (f64, f64),
        page_height: f64,
    ) -> Self {
        Self {
            x0: bottom_left.0,
            y0: page_height - top_right.1,
            x1: top_right.0,
            y1: page_height - bottom_left.1,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn is_valid(&self) -> bool {
        let c = [self.x0, self.y0, self.x1, self.y1];
        c.iter().all(|v| v.is_finite() && *v >= 0.0) && self.x0 <= self.x1 && self.y0 <= self.y1
    }

    pub fn contains(&self, other: &BoundingBox, slack: f64) -> bool {
        other.x0 >= self.x0 - slack
            && other.y0 >= self.y0 - slack
            && other.x1 <= self.x1 + slack
            && other.y1 <= self.y1 + slack
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// A single-row run of words as emitted by an OCR engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub word_indices: Vec<usize>,
}

/// A typed token path. The order of `word_indices` is the reading order of
/// the entity's words and is part of its identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    #[serde(rename = "type")]
    pub type_id: usize,
    pub word_indices: Vec<usize>,
}

impl Entity {
    pub fn new(type_id: usize, word_indices: Vec<usize>) -> Self {
        Self {
            type_id,
            word_indices,
        }
    }

    pub fn len(&self) -> usize {
        self.word_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_indices.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityType {
    pub name: String,
    pub id: usize,
}

/// Entity types with dense ids `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeRegistry {
    names: Vec<String>,
}

impl TypeRegistry {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidConfig(format!("duplicate entity type `{n}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn types(&self) -> impl Iterator<Item = EntityType> + '_ {
        self.names.iter().enumerate().map(|(id, name)| EntityType {
            name: name.clone(),
            id,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub page_width: f64,
    pub page_height: f64,
    pub words: Vec<Word>,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub entity_types: Vec<String>,
    #[serde(default)]
    pub entities: Vec<Entity>,
    #[serde(default)]
    pub links: Vec<(usize, usize)>,
    /// Gold reading order, when annotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_order: Option<Vec<usize>>,
    /// Input order produced by a reordering model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn registry(&self) -> Result<TypeRegistry> {
        TypeRegistry::new(self.entity_types.iter().cloned())
    }

    /// Segment index of every word; `None` for words outside any segment.
    pub fn segment_of_words(&self) -> Vec<Option<usize>> {
        let mut seg = vec![None; self.words.len()];
        for (s, segment) in self.segments.iter().enumerate() {
            for &w in &segment.word_indices {
                if w < seg.len() && seg[w].is_none() {
                    seg[w] = Some(s);
                }
            }
        }
        seg
    }

    pub fn gold_input_order(&self) -> Option<Result<InputOrder>> {
        self.gold_order.clone().map(InputOrder::new)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A permutation of word indices: `perm[v]` is the word fed at input
/// position `v`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct InputOrder(Vec<usize>);

impl InputOrder {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        check_permutation(&perm)?;
        Ok(Self(perm))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    /// `ranks()[w]` is the input position of word `w`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut inv = vec![0; self.0.len()];
        for (v, &w) in self.0.iter().enumerate() {
            inv[w] = v;
        }
        inv
    }

    pub fn inverse(&self) -> InputOrder {
        InputOrder(self.ranks())
    }

    /// Composition `self ∘ other`: position `v` receives `self[other[v]]`.
    pub fn compose(&self, other: &InputOrder) -> Result<InputOrder> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(InputOrder(other.0.iter().map(|&v| self.0[v]).collect()))
    }
}

impl TryFrom<Vec<usize>> for InputOrder {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<InputOrder> for Vec<usize> {
    fn from(o: InputOrder) -> Self {
        o.0
    }
}

fn check_permutation(perm: &[usize]) -> Result<()> {
    let n = perm.len();
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n {
            return Err(Error::InvalidPermutation(format!(
                "index {p} out of range for length {n}"
            )));
        }
        if std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidPermutation(format!("index {p} repeated")));
        }
    }
    Ok(())
}

/// Words of a document seen through an input order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderedView {
    /// `view[v]` is the word at input position `v`.
    pub view: Vec<usize>,
    /// `inverse[w]` is the input position of word `w`.
    pub inverse: Vec<usize>,
}

pub fn apply_order(doc: &Document, order: &InputOrder) -> Result<OrderedView> {
    if order.len() != doc.len() {
        return Err(Error::InvalidPermutation(format!(
            "order covers {} words, document `{}` has {}",
            order.len(),
            doc.id,
            doc.len()
        )));
    }
    Ok(OrderedView {
        view: order.as_slice().to_vec(),
        inverse: order.ranks(),
    })
}

/// Segments sorted top-to-bottom then left-to-right, ties broken by segment
/// index; words inside a segment keep their annotated order.
pub fn ocr_order(doc: &Document) -> InputOrder {
    let mut segs: Vec<usize> = (0..doc.segments.len()).collect();
    segs.sort_by(|&a, &b| {
        let (sa, sb) = (&doc.segments[a].bbox, &doc.segments[b].bbox);
        sa.y0
            .total_cmp(&sb.y0)
            .then(sa.x0.total_cmp(&sb.x0))
            .then(a.cmp(&b))
    });
    let perm: Vec<usize> = segs
        .iter()
        .flat_map(|&s| doc.segments[s].word_indices.iter().copied())
        .collect();
    InputOrder(perm)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptyDocument,
    BadPageSize { width: f64, height: f64 },
    EmptyWordText { word: usize },
    LineBreakInWord { word: usize },
    BadWordBox { word: usize },
    EmptySegment { segment: usize },
    BadSegmentBox { segment: usize },
    SegmentWordOutOfRange { segment: usize, word: usize },
    SegmentWordRepeated { segment: usize, word: usize },
    WordOutsideSegmentBox { segment: usize, word: usize },
    WordInNoSegment { word: usize },
    WordInSeveralSegments { word: usize, segments: Vec<usize> },
    DuplicateTypeName { name: String },
    UnknownEntityType { entity: usize, type_id: usize },
    EmptyEntity { entity: usize },
    EntityWordOutOfRange { entity: usize, word: usize },
    EntityWordRepeated { entity: usize, word: usize },
    LinkOutOfRange { link: usize, entity: usize },
    SelfLink { link: usize },
    BadOrder { key: &'static str, reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyDocument => write!(f, "document has no words"),
            BadPageSize { width, height } => write!(f, "invalid page size {width}x{height}"),
            EmptyWordText { word } => write!(f, "word {word} has empty text"),
            LineBreakInWord { word } => write!(f, "word {word} contains a line break"),
            BadWordBox { word } => write!(f, "word {word} has an invalid box"),
            EmptySegment { segment } => write!(f, "segment {segment} is empty"),
            BadSegmentBox { segment } => write!(f, "segment {segment} has an invalid box"),
            SegmentWordOutOfRange { segment, word } => {
                write!(f, "segment {segment} references missing word {word}")
            }
            SegmentWordRepeated { segment, word } => {
                write!(f, "segment {segment} lists word {word} twice")
            }
            WordOutsideSegmentBox { segment, word } => {
                write!(f, "word {word} lies outside the box of segment {segment}")
            }
            WordInNoSegment { word } => write!(f, "word {word} belongs to no segment"),
            WordInSeveralSegments { word, segments } => {
                write!(f, "word {word} belongs to segments {segments:?}")
            }
            DuplicateTypeName { name } => write!(f, "entity type `{name}` declared twice"),
            UnknownEntityType { entity, type_id } => {
                write!(f, "entity {entity} has unknown type {type_id}")
            }
            EmptyEntity { entity } => write!(f, "entity {entity} has no words"),
            EntityWordOutOfRange { entity, word } => {
                write!(f, "entity {entity} references missing word {word}")
            }
            EntityWordRepeated { entity, word } => {
                write!(f, "entity {entity} lists word {word} twice")
            }
            LinkOutOfRange { link, entity } => {
                write!(f, "link {link} references missing entity {entity}")
            }
            SelfLink { link } => write!(f, "link {link} connects an entity to itself"),
            BadOrder { key, reason } => write!(f, "`{key}` is not a permutation: {reason}"),
        }
    }
}

pub fn validate_document(doc: &Document) -> Vec<Violation> {
    validate_document_with_slack(doc, DEFAULT_SEGMENT_SLACK)
}

pub fn validate_document_with_slack(doc: &Document, slack: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = doc.words.len();
    if n == 0 {
        out.push(Violation::EmptyDocument);
    }
    if !(doc.page_width.is_finite()
        && doc.page_height.is_finite()
        && doc.page_width > 0.0
        && doc.page_height > 0.0)
    {
        out.push(Violation::BadPageSize {
            width: doc.page_width,
            height: doc.page_height,
        });
    }
    for (i, w) in doc.words.iter().enumerate() {
        if w.text.is_empty() {
            out.push(Violation::EmptyWordText { word: i });
        }
        if w.text.contains(['\n', '\r']) {
            out.push(Violation::LineBreakInWord { word: i });
        }
        if !w.bbox.is_valid() {
            out.push(Violation::BadWordBox { word: i });
        }
    }

    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, seg) in doc.segments.iter().enumerate() {
        if seg.word_indices.is_empty() {
            out.push(Violation::EmptySegment { segment: s });
        }
        if !seg.bbox.is_valid() {
            out.push(Violation::BadSegmentBox { segment: s });
        }
        for (k, &w) in seg.word_indices.iter().enumerate() {
            if w >= n {
                out.push(Violation::SegmentWordOutOfRange {
                    segment: s,
                    word: w,
                });
                continue;
            }
            if seg.word_indices[..k].contains(&w) {
                out.push(Violation::SegmentWordRepeated {
                    segment: s,
                    word: w,
                });
                continue;
            }
            owners[w].push(s);
            if !seg.bbox.contains(&doc.words[w].bbox, slack) {
                out.push(Violation::WordOutsideSegmentBox {
                    segment: s,
                    word: w,
                });
            }
        }
    }
    for (w, segs) in owners.into_iter().enumerate() {
        match segs.len() {
            0 => out.push(Violation::WordInNoSegment { word: w }),
            1 => {}
            _ => out.push(Violation::WordInSeveralSegments {
                word: w,
                segments: segs,
            }),
        }
    }

    for (i, name) in doc.entity_types.iter().enumerate() {
        if doc.entity_types[..i].contains(name) {
            out.push(Violation::DuplicateTypeName { name: name.clone() });
        }
    }
    for (e, ent) in doc.entities.iter().enumerate() {
        if ent.type_id >= doc.entity_types.len() {
            out.push(Violation::UnknownEntityType {
                entity: e,
                type_id: ent.type_id,
            });
        }
        if ent.word_indices.is_empty() {
            out.push(Violation::EmptyEntity { entity: e });
        }
        for (k, &w) in ent.word_indices.iter().enumerate() {
            if w >= n {
                out.push(Violation::EntityWordOutOfRange { entity: e, word: w });
            } else if ent.word_indices[..k].contains(&w) {
                out.push(Violation::EntityWordRepeated { entity: e, word: w });
            }
        }
    }
    for (l, &(head, tail)) in doc.links.iter().enumerate() {
        for entity in [head, tail] {
            if entity >= doc.entities.len() {
                out.push(Violation::LinkOutOfRange { link: l, entity });
            }
        }
        if head == tail {
            out.push(Violation::SelfLink { link: l });
        }
    }

    for (key, order) in [("gold_order", &doc.gold_order), ("order", &doc.order)] {
        if let Some(perm) = order {
            let reason = if perm.len() != n {
                Some(format!("length {} for {n} words", perm.len()))
            } else {
                check_permutation(perm).err().map(|e| e.to_string())
            };
            if let Some(reason) = reason {
                out.push(Violation::BadOrder { key, reason });
            }
        }
    }
    out
}

/// Rejects documents with any violation.
pub fn ensure_valid(doc: &Document) -> Result<()> {
    let v = validate_document(doc);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidDocument {
            id: doc.id.clone(),
            reason: v
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        })
    }
}
