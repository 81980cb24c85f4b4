//! Seeded synthetic form generator.
//!
//! A page is a stack of bands; each band holds one or two column cells and
//! each cell holds a short run of fields (entities and filler words) that
//! flows left to right and wraps inside the cell. The gold reading order
//! walks bands top to bottom, cells left to right, and follows the flow
//! inside a cell. Words are then re-read the way an OCR engine would: row by
//! row across the whole page, split into segments at wide gaps. Narrow cells
//! next to a second column interleave rows of different fields, and short
//! interrupter words placed inside an entity break it apart.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Splits};
use crate::document::{BoundingBox, Document, Entity, InputOrder, Segment, Word};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, stream_rng, streams};

const MARGIN: f64 = 40.0;
const ROW_PITCH: f64 = 24.0;
const WORD_HEIGHT: f64 = 16.0;
const SEGMENT_GAP: f64 = 20.0;
const COLUMN_GAP: f64 = 40.0;
const MAX_ATTEMPTS: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub doc_count: usize,
    /// Inclusive bounds on words per document.
    pub words_per_doc: (usize, usize),
    pub entity_types: usize,
    /// Chance that a cell is narrow enough to wrap its fields over rows.
    pub multi_row_prob: f64,
    /// Chance that a band is split into two columns.
    pub multi_column_prob: f64,
    /// Chance that an entity is long (5 to 9 words instead of 1 to 4).
    pub long_entity_prob: f64,
    /// Chance that a multi-word entity has an interrupter word inside it.
    pub interleave_prob: f64,
    /// Chance that a key entity is linked to its value.
    pub link_prob: f64,
    pub page_width: f64,
    pub page_height: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            doc_count: 100,
            words_per_doc: (10, 40),
            entity_types: 3,
            multi_row_prob: 0.3,
            multi_column_prob: 0.3,
            long_entity_prob: 0.3,
            interleave_prob: 0.3,
            link_prob: 0.8,
            page_width: 1000.0,
            page_height: 1400.0,
            val_fraction: 0.0,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("multi_row_prob", self.multi_row_prob),
            ("multi_column_prob", self.multi_column_prob),
            ("long_entity_prob", self.long_entity_prob),
            ("interleave_prob", self.interleave_prob),
            ("link_prob", self.link_prob),
            ("val_fraction", self.val_fraction),
            ("test_fraction", self.test_fraction),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        if self.val_fraction + self.test_fraction > 1.0 {
            return Err(Error::InvalidConfig(
                "val and test fractions exceed 1".into(),
            ));
        }
        let (lo, hi) = self.words_per_doc;
        if lo == 0 || lo > hi || hi > crate::scorer::MAX_SEQUENCE {
            return Err(Error::InvalidConfig(format!(
                "words_per_doc must satisfy 1 <= min <= max <= {}",
                crate::scorer::MAX_SEQUENCE
            )));
        }
        if self.entity_types == 0 {
            return Err(Error::InvalidConfig(
                "entity_types must be at least 1".into(),
            ));
        }
        if !(self.page_width >= 2.0 * MARGIN + 400.0 && self.page_width.is_finite()) {
            return Err(Error::InvalidConfig("page_width too small".into()));
        }
        if !(self.page_height >= 2.0 * MARGIN + ROW_PITCH && self.page_height.is_finite()) {
            return Err(Error::InvalidConfig("page_height too small".into()));
        }
        Ok(())
    }
}

pub fn type_names(count: usize) -> Vec<String> {
    (0..count)
        .map(|t| match t {
            0 => "question".to_owned(),
            1 => "answer".to_owned(),
            2 => "header".to_owned(),
            t => format!("field{t}"),
        })
        .collect()
}

struct Lexicon {
    begin: Vec<String>,
    inner: Vec<String>,
}

const QUESTION_BEGIN: &[&str] = &[
    "Name", "Date", "Address", "Phone", "Account", "Store", "Total", "Item", "Brand", "Invoice",
    "Supplier", "Contact", "Order", "Region", "Fax",
];
const QUESTION_INNER: &[&str] = &[
    "of", "number", "no.", "code", "type", "ID", "amount", "ref", "for", "line", "field",
];
const ANSWER_BEGIN: &[&str] = &[
    "1024", "3.50", "$12.00", "12/03/98", "Smith", "Acme", "0071", "$4.75", "Boston", "Lee", "N/A",
    "Yes", "No",
];
const ANSWER_INNER: &[&str] = &[
    "Street", "Inc.", "45", "00", "Road", "Ave", "Co.", "200", "PM", "Ltd", "7", "and", "Jr.",
];
const HEADER_BEGIN: &[&str] = &[
    "SECTION", "REPORT", "SUMMARY", "ACCOUNT", "STORE", "PART", "SCHEDULE", "RECORD",
];
const HEADER_INNER: &[&str] = &[
    "INFORMATION",
    "DETAILS",
    "FORM",
    "DATA",
    "A",
    "B",
    "REVIEW",
    "STATUS",
    "LIST",
];
const FILLER: &[&str] = &[
    "the", "see", "page", "please", "note", "to", "by", "all", "-", "|", "if", "any", "per", "on",
];
const INTERRUPTERS: &[&str] = &["(Qty", "1.00)", "(x2)", "*", "(ea)", "#"];

fn own(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| (*w).to_owned()).collect()
}

fn lexicon(t: usize) -> Lexicon {
    match t {
        0 => Lexicon {
            begin: own(QUESTION_BEGIN),
            inner: own(QUESTION_INNER),
        },
        1 => Lexicon {
            begin: own(ANSWER_BEGIN),
            inner: own(ANSWER_INNER),
        },
        2 => Lexicon {
            begin: own(HEADER_BEGIN),
            inner: own(HEADER_INNER),
        },
        t => Lexicon {
            begin: (0..10).map(|k| format!("F{t}b{k}")).collect(),
            inner: (0..10).map(|k| format!("f{t}i{k}")).collect(),
        },
    }
}

pub fn word_width(text: &str) -> f64 {
    9.0 * text.chars().count() as f64 + 6.0
}

/// One word in a cell's physical flow.
struct Item {
    text: String,
    gap: f64,
}

#[derive(Default)]
struct Cell {
    items: Vec<Item>,
    /// Item indices in reading order.
    gold: Vec<usize>,
    /// (type, item indices in path order)
    entities: Vec<(usize, Vec<usize>)>,
    /// Local entity indices.
    links: Vec<(usize, usize)>,
}

impl Cell {
    fn push(&mut self, text: String, gap: f64) -> usize {
        self.items.push(Item { text, gap });
        self.items.len() - 1
    }

    fn filler(&mut self, rng: &mut ChaCha8Rng, count: usize) {
        for k in 0..count {
            let gap = if k == 0 {
                field_gap(rng)
            } else {
                rng.random_range(6.0..9.0)
            };
            let text = FILLER.choose(rng).expect("non-empty").to_string();
            let i = self.push(text, gap);
            self.gold.push(i);
        }
    }

    fn entity(&mut self, rng: &mut ChaCha8Rng, cfg: &GenConfig, t: usize, len: usize) -> usize {
        let lex = lexicon(t);
        let mut texts = vec![lex.begin.choose(rng).expect("non-empty").clone()];
        for _ in 1..len {
            texts.push(lex.inner.choose(rng).expect("non-empty").clone());
        }
        if t == 0 && rng.random::<f64>() < 0.7 {
            texts.last_mut().expect("non-empty").push(':');
        }
        let interrupt_after = (len >= 2 && rng.random::<f64>() < cfg.interleave_prob)
            .then(|| rng.random_range(0..len - 1));
        let mut path = Vec::with_capacity(len);
        let mut interrupter = None;
        for (k, text) in texts.into_iter().enumerate() {
            let gap = if k == 0 {
                field_gap(rng)
            } else if interrupt_after == Some(k - 1) {
                rng.random_range(8.0..14.0)
            } else {
                rng.random_range(6.0..9.0)
            };
            path.push(self.push(text, gap));
            if interrupt_after == Some(k) {
                let text = INTERRUPTERS.choose(rng).expect("non-empty").to_string();
                let gap = rng.random_range(8.0..14.0);
                interrupter = Some(self.push(text, gap));
            }
        }
        self.gold.extend(&path);
        self.gold.extend(interrupter);
        self.entities.push((t, path));
        self.entities.len() - 1
    }
}

fn field_gap(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<f64>() < 0.5 {
        rng.random_range(8.0..16.0)
    } else {
        rng.random_range(28.0..60.0)
    }
}

fn entity_len(rng: &mut ChaCha8Rng, cfg: &GenConfig, budget: usize) -> usize {
    let len = if rng.random::<f64>() < cfg.long_entity_prob {
        rng.random_range(5..=9)
    } else if rng.random::<f64>() < 0.2 {
        1
    } else {
        rng.random_range(2..=4)
    };
    len.min(budget).max(1)
}

/// Worst-case word count of an entity of `len` words (one interrupter).
fn with_interrupter(len: usize) -> usize {
    len + usize::from(len >= 2)
}

/// Fills a cell with at most `budget` words.
fn fill_cell(rng: &mut ChaCha8Rng, cfg: &GenConfig, budget: usize) -> Cell {
    let mut cell = Cell::default();
    let types = cfg.entity_types;
    let used = |c: &Cell| c.items.len();
    let r: f64 = rng.random();
    if types >= 2 && r < 0.55 && budget >= 2 {
        if rng.random::<f64>() < 0.2 && budget >= 4 {
            cell.filler(rng, 1);
        }
        let room = budget - used(&cell) - 1;
        let qlen = entity_len(rng, cfg, room)
            .min(room.saturating_sub(1))
            .max(1);
        let qlen = if with_interrupter(qlen) > room {
            1
        } else {
            qlen
        };
        let q = cell.entity(rng, cfg, 0, qlen);
        let room = budget - used(&cell);
        if room >= 1 {
            let alen = entity_len(rng, cfg, room);
            let alen = if with_interrupter(alen) > room {
                1
            } else {
                alen
            };
            let a = cell.entity(rng, cfg, 1, alen);
            if rng.random::<f64>() < cfg.link_prob {
                cell.links.push((q, a));
            }
        }
    } else if types >= 3 && r < 0.7 {
        let len = entity_len(rng, cfg, budget);
        let len = if with_interrupter(len) > budget {
            1
        } else {
            len
        };
        cell.entity(rng, cfg, 2, len);
    } else {
        let lead = rng.random_range(0..=2).min(budget.saturating_sub(1));
        cell.filler(rng, lead);
        let room = budget - used(&cell);
        if room >= 1 {
            let t = rng.random_range(0..types);
            let len = entity_len(rng, cfg, room);
            let len = if with_interrupter(len) > room { 1 } else { len };
            cell.entity(rng, cfg, t, len);
        }
        let room = budget - used(&cell);
        if room >= 1 && rng.random::<f64>() < 0.3 {
            cell.filler(rng, 1);
        }
    }
    cell
}

/// Row and left edge of every item when flowed into `[x0, x1]`.
fn flow(cell: &Cell, x0: f64, x1: f64) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(cell.items.len());
    let (mut row, mut x) = (0, x0);
    for item in &cell.items {
        let w = word_width(&item.text);
        if x > x0 && x + item.gap + w > x1 {
            row += 1;
            x = x0;
        } else if x > x0 {
            x += item.gap;
        }
        out.push((row, x));
        x += w;
    }
    out
}

struct Placed {
    row: usize,
    x: f64,
    text: String,
}

fn generate_doc(cfg: &GenConfig, id: String, rng: &mut ChaCha8Rng) -> Option<Document> {
    let (lo, hi) = cfg.words_per_doc;
    let target = rng.random_range(lo..=hi);
    let max_rows =
        ((cfg.page_height - 2.0 * MARGIN - WORD_HEIGHT) / ROW_PITCH).floor() as usize + 1;
    let right_edge = cfg.page_width - MARGIN;
    let mid = cfg.page_width / 2.0;

    let mut placed: Vec<Placed> = Vec::new();
    let mut gold: Vec<usize> = Vec::new();
    let mut entities: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut links: Vec<(usize, usize)> = Vec::new();
    let mut row0 = 0;

    while placed.len() < target {
        let remaining = target - placed.len();
        let two = remaining >= 2 && rng.random::<f64>() < cfg.multi_column_prob;
        let bounds: Vec<(f64, f64)> = if two {
            vec![
                (MARGIN, mid - COLUMN_GAP / 2.0),
                (mid + COLUMN_GAP / 2.0, right_edge),
            ]
        } else {
            vec![(MARGIN, right_edge)]
        };
        let mut band_rows = 1;
        let mut budget = remaining;
        for (c, &(x0, x1)) in bounds.iter().enumerate() {
            if budget == 0 {
                break;
            }
            let share = if two && c == 0 {
                rng.random_range(1..budget)
            } else {
                budget
            };
            let cell = fill_cell(rng, cfg, share.min(14));
            budget -= cell.items.len();
            let x1 = if rng.random::<f64>() < cfg.multi_row_prob {
                (x0 + rng.random_range(130.0..260.0)).min(x1)
            } else {
                x1
            };
            let pos = flow(&cell, x0, x1);
            let base = placed.len();
            for (item, &(r, x)) in cell.items.iter().zip(&pos) {
                placed.push(Placed {
                    row: row0 + r,
                    x,
                    text: item.text.clone(),
                });
                band_rows = band_rows.max(r + 1);
            }
            gold.extend(cell.gold.iter().map(|i| base + i));
            let ent_base = entities.len();
            entities.extend(
                cell.entities
                    .into_iter()
                    .map(|(t, p)| (t, p.into_iter().map(|i| base + i).collect())),
            );
            links.extend(
                cell.links
                    .iter()
                    .map(|&(a, b)| (ent_base + a, ent_base + b)),
            );
        }
        row0 += band_rows + usize::from(rng.random::<f64>() < 0.3);
    }
    if placed.iter().any(|p| p.row >= max_rows) {
        return None;
    }

    // OCR: rows top to bottom, left to right; word indices follow that order.
    let mut ocr: Vec<usize> = (0..placed.len()).collect();
    ocr.sort_by(|&a, &b| {
        placed[a]
            .row
            .cmp(&placed[b].row)
            .then(placed[a].x.total_cmp(&placed[b].x))
    });
    let mut index_of = vec![0; placed.len()];
    for (w, &p) in ocr.iter().enumerate() {
        index_of[p] = w;
    }
    let words: Vec<Word> = ocr
        .iter()
        .map(|&p| {
            let pl = &placed[p];
            let y = MARGIN + pl.row as f64 * ROW_PITCH;
            Word {
                text: pl.text.clone(),
                bbox: BoundingBox::new(pl.x, y, pl.x + word_width(&pl.text), y + WORD_HEIGHT),
            }
        })
        .collect();
    let mut segments: Vec<Segment> = Vec::new();
    for w in 0..words.len() {
        let starts_new = match segments.last() {
            None => true,
            Some(s) => {
                let prev = &words[*s.word_indices.last().expect("non-empty")].bbox;
                let cur = &words[w].bbox;
                prev.y0 != cur.y0 || cur.x0 - prev.x1 > SEGMENT_GAP
            }
        };
        if starts_new {
            segments.push(Segment {
                bbox: words[w].bbox,
                word_indices: vec![w],
            });
        } else {
            let s = segments.last_mut().expect("non-empty");
            s.bbox = s.bbox.union(&words[w].bbox);
            s.word_indices.push(w);
        }
    }

    let gold: Vec<usize> = gold.into_iter().map(|p| index_of[p]).collect();
    let mut rank = vec![0; gold.len()];
    for (r, &w) in gold.iter().enumerate() {
        rank[w] = r;
    }
    let mut ents: Vec<(usize, Entity)> = entities
        .into_iter()
        .enumerate()
        .map(|(k, (t, p))| {
            (
                k,
                Entity::new(t, p.into_iter().map(|i| index_of[i]).collect()),
            )
        })
        .collect();
    ents.sort_by_key(|(_, e)| rank[e.word_indices[0]]);
    let mut new_index = vec![0; ents.len()];
    for (pos, (k, _)) in ents.iter().enumerate() {
        new_index[*k] = pos;
    }
    let mut links: Vec<(usize, usize)> = links
        .into_iter()
        .map(|(a, b)| (new_index[a], new_index[b]))
        .collect();
    links.sort_unstable();

    Some(Document {
        id,
        page_width: cfg.page_width,
        page_height: cfg.page_height,
        words,
        segments,
        entity_types: type_names(cfg.entity_types),
        entities: ents.into_iter().map(|(_, e)| e).collect(),
        links,
        gold_order: Some(gold),
        order: None,
    })
}

/// Document `index` of the corpus described by `cfg`.
pub fn gen_document(cfg: &GenConfig, index: usize) -> Result<Document> {
    let doc_seed = derive_seed(cfg.seed, streams::DOCUMENT, index as u64);
    let id = format!("doc{index:05}");
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = stream_rng(doc_seed, streams::DOCUMENT, attempt);
        if let Some(doc) = generate_doc(cfg, id.clone(), &mut rng) {
            return Ok(doc);
        }
    }
    Err(Error::Generation(format!(
        "no feasible layout for `{id}` after {MAX_ATTEMPTS} attempts"
    )))
}

pub fn gen_corpus(cfg: &GenConfig) -> Result<Corpus> {
    cfg.validate()?;
    let documents = (0..cfg.doc_count)
        .into_par_iter()
        .map(|i| gen_document(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let n = documents.len();
    let test = (cfg.test_fraction * n as f64).round() as usize;
    let val = ((cfg.val_fraction * n as f64).round() as usize).min(n - test);
    let train = n - test - val;
    let ids: Vec<String> = documents.iter().map(|d| d.id.clone()).collect();
    Ok(Corpus {
        documents,
        splits: Splits {
            train: ids[..train].to_vec(),
            val: ids[train..train + val].to_vec(),
            test: ids[train + val..].to_vec(),
        },
    })
}

/// Uniform random permutation of segments, each keeping its internal word
/// order. Words outside every segment move as single units.
pub fn shuffle_order(doc: &Document, seed: u64) -> InputOrder {
    let seg_of = doc.segment_of_words();
    let mut units: Vec<Vec<usize>> = doc
        .segments
        .iter()
        .map(|s| s.word_indices.clone())
        .collect();
    units.extend(
        (0..doc.len())
            .filter(|&w| seg_of[w].is_none())
            .map(|w| vec![w]),
    );
    units.shuffle(&mut stream_rng(seed, streams::SHUFFLE_ORDER, 0));
    InputOrder::new(units.concat()).expect("segments partition the words")
}
