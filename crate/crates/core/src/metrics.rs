//! Evaluation metrics and corpus statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::document::{ocr_order, Document, Entity, InputOrder};
use crate::error::{Error, Result};

/// Raw match counts; `report` turns them into precision, recall and F1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.predicted += other.predicted;
        self.gold += other.gold;
        self.correct += other.correct;
    }

    /// Empty prediction against empty gold scores 1; an empty side against a
    /// non-empty one scores 0.
    pub fn scores(&self) -> Scores {
        let ratio = |num: usize, den: usize, other: usize| {
            if den > 0 {
                num as f64 / den as f64
            } else if other == 0 {
                1.0
            } else {
                0.0
            }
        };
        let precision = ratio(self.correct, self.predicted, self.gold);
        let recall = ratio(self.correct, self.gold, self.predicted);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Scores {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: Counts,
}

impl From<Counts> for TypeReport {
    fn from(c: Counts) -> Self {
        let s = c.scores();
        Self {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            support: c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: Counts,
    /// Keyed by type name when known, otherwise by type id.
    pub per_type: BTreeMap<String, TypeReport>,
}

/// Micro-averaged counts with a per-type breakdown; accumulates over a corpus.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tally {
    pub total: Counts,
    pub per_type: BTreeMap<usize, Counts>,
}

impl Tally {
    pub fn merge(&mut self, other: &Tally) {
        self.total.add(other.total);
        for (t, c) in &other.per_type {
            self.per_type.entry(*t).or_default().add(*c);
        }
    }

    pub fn report(&self, type_names: &[String]) -> EvalReport {
        let s = self.total.scores();
        EvalReport {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            support: self.total,
            per_type: self
                .per_type
                .iter()
                .map(|(t, c)| {
                    let key = type_names.get(*t).cloned().unwrap_or_else(|| t.to_string());
                    (key, TypeReport::from(*c))
                })
                .collect(),
        }
    }
}

/// Exact, ordered, one-to-one entity matching.
pub fn entity_tally(pred: &[Entity], gold: &[Entity]) -> Tally {
    let mut remaining: HashMap<&Entity, usize> = HashMap::new();
    for g in gold {
        *remaining.entry(g).or_default() += 1;
    }
    let mut t = Tally::default();
    for g in gold {
        t.per_type.entry(g.type_id).or_default().gold += 1;
        t.total.gold += 1;
    }
    for p in pred {
        let c = t.per_type.entry(p.type_id).or_default();
        c.predicted += 1;
        t.total.predicted += 1;
        if let Some(k) = remaining.get_mut(p).filter(|k| **k > 0) {
            *k -= 1;
            c.correct += 1;
            t.total.correct += 1;
        }
    }
    t
}

pub fn entity_f1(pred: &[Entity], gold: &[Entity]) -> EvalReport {
    entity_tally(pred, gold).report(&[])
}

fn word_types(entities: &[Entity], n: usize) -> Vec<Option<usize>> {
    let mut out = vec![None; n];
    for e in entities {
        for &w in &e.word_indices {
            if w < n && out[w].is_none() {
                out[w] = Some(e.type_id);
            }
        }
    }
    out
}

/// Per-word type agreement over `n` words.
pub fn word_tally(pred: &[Entity], gold: &[Entity], n: usize) -> Tally {
    let p = word_types(pred, n);
    let g = word_types(gold, n);
    let mut t = Tally::default();
    for (p, g) in p.into_iter().zip(g) {
        if let Some(g) = g {
            t.per_type.entry(g).or_default().gold += 1;
            t.total.gold += 1;
        }
        if let Some(p) = p {
            let c = t.per_type.entry(p).or_default();
            c.predicted += 1;
            t.total.predicted += 1;
            if Some(p) == g {
                c.correct += 1;
                t.total.correct += 1;
            }
        }
    }
    t
}

pub fn word_f1(pred: &[Entity], gold: &[Entity], n: usize) -> EvalReport {
    word_tally(pred, gold, n).report(&[])
}

fn ngram_counts(seq: &[usize], k: usize) -> HashMap<&[usize], usize> {
    let mut m = HashMap::new();
    for g in seq.windows(k) {
        *m.entry(g).or_default() += 1;
    }
    m
}

/// Unsmoothed BLEU over index sequences, ×100. The maximum n-gram order is
/// `min(4, gold length)`.
pub fn page_bleu(pred: &[usize], gold: &[usize]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let max_order = gold.len().min(4);
    if pred.len() < max_order {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for k in 1..=max_order {
        let reference = ngram_counts(gold, k);
        let matched: usize = ngram_counts(pred, k)
            .into_iter()
            .map(|(g, c)| c.min(reference.get(g).copied().unwrap_or(0)))
            .sum();
        if matched == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / (pred.len() + 1 - k) as f64).ln();
    }
    let (c, r) = (pred.len() as f64, gold.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(100.0 * bp * (log_sum / max_order as f64).exp())
}

/// Mean absolute rank displacement over the gold length; every gold token
/// missing from `pred` costs `n`.
pub fn ard(pred: &[usize], gold: &[usize]) -> Result<f64> {
    let n = gold.len();
    if n == 0 {
        return Err(Error::EmptyGold);
    }
    let mut gold_rank: HashMap<usize, usize> = HashMap::with_capacity(n);
    for (r, &t) in gold.iter().enumerate() {
        if gold_rank.insert(t, r).is_some() {
            return Err(Error::InvalidPermutation(format!("gold repeats token {t}")));
        }
    }
    let mut seen = BTreeSet::new();
    let mut total = 0usize;
    for (r, &t) in pred.iter().enumerate() {
        if !seen.insert(t) {
            return Err(Error::DuplicateToken(t));
        }
        let g = *gold_rank.get(&t).ok_or(Error::UnknownToken(t))?;
        total += r.abs_diff(g);
    }
    total += (n - seen.len()) * n;
    Ok(total as f64 / n as f64)
}

/// (continuous entities, entities) of `doc` read along `order`.
pub fn continuity_counts(doc: &Document, order: &InputOrder) -> (usize, usize) {
    let rank = order.ranks();
    let continuous = doc
        .entities
        .iter()
        .filter(|e| {
            e.word_indices
                .windows(2)
                .all(|p| rank[p[1]] == rank[p[0]] + 1)
        })
        .count();
    (continuous, doc.entities.len())
}

/// Share of entities whose words sit at consecutive ranks of `order`, in the
/// entity's own direction; `None` for a document without entities.
pub fn continuous_entity_rate(doc: &Document, order: &InputOrder) -> Option<f64> {
    let (c, t) = continuity_counts(doc, order);
    (t > 0).then(|| c as f64 / t as f64)
}

/// Entity-weighted rate over many documents.
pub fn corpus_continuous_rate<'a>(
    pairs: impl IntoIterator<Item = (&'a Document, &'a InputOrder)>,
) -> Option<f64> {
    let (c, t) = pairs
        .into_iter()
        .map(|(d, o)| continuity_counts(d, o))
        .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    (t > 0).then(|| c as f64 / t as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub segments: usize,
    pub words: usize,
    pub avg_segment_length: f64,
    pub entities: usize,
    pub avg_entity_length: f64,
    /// Continuous entity rate under OCR order; absent without entities.
    pub continuous_rate: Option<f64>,
    pub types: usize,
    pub splits: SplitSizes,
}

pub fn dataset_stats(corpus: &Corpus) -> DatasetStats {
    let docs = &corpus.documents;
    let segments: usize = docs.iter().map(|d| d.segments.len()).sum();
    let words: usize = docs.iter().map(|d| d.words.len()).sum();
    let entities: usize = docs.iter().map(|d| d.entities.len()).sum();
    let entity_words: usize = docs
        .iter()
        .flat_map(|d| d.entities.iter().map(Entity::len))
        .sum();
    let orders: Vec<InputOrder> = docs.iter().map(ocr_order).collect();
    let types: BTreeSet<&str> = docs
        .iter()
        .flat_map(|d| d.entity_types.iter().map(String::as_str))
        .collect();
    let mean = |num: usize, den: usize| {
        if den > 0 {
            num as f64 / den as f64
        } else {
            0.0
        }
    };
    DatasetStats {
        segments,
        words,
        avg_segment_length: mean(words, segments),
        entities,
        avg_entity_length: mean(entity_words, entities),
        continuous_rate: corpus_continuous_rate(docs.iter().zip(&orders)),
        types: types.len(),
        splits: SplitSizes {
            train: corpus.splits.train.len(),
            val: corpus.splits.val.len(),
            test: corpus.splits.test.len(),
        },
    }
}
