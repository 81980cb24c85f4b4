//! Decoding score grids into entities, links and reading orders.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::document::{ocr_order, Document, Entity, InputOrder};
use crate::error::{Error, Result};
use crate::labels::{bio_decode, BioTag, BioTagSequence};
use crate::scorer::{classify_tokens, score_document, HeadSpec, ModelParams, ScoreGrids};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub threshold: f64,
    pub max_entities: usize,
    pub beam_size: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            threshold: 0.0,
            max_entities: 100,
            beam_size: 8,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::InvalidConfig("threshold must be finite".into()));
        }
        if self.max_entities == 0 {
            return Err(Error::InvalidConfig(
                "max_entities must be at least 1".into(),
            ));
        }
        if self.beam_size == 0 {
            return Err(Error::InvalidConfig("beam_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    #[serde(flatten)]
    pub entity: Entity,
    pub confidence: f64,
}

/// Token paths of one type, each with its mean edge score.
fn decode_type(s: &Array2<f64>, t: usize, threshold: f64) -> Vec<ScoredEntity> {
    let n = s.nrows();
    let mut best_out: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && s[[i, j]] > threshold && best_out[i].is_none_or(|b| s[[i, j]] > s[[i, b]])
            {
                best_out[i] = Some(j);
            }
        }
    }
    let mut best_in: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if let Some(j) = best_out[i] {
            if best_in[j].is_none_or(|b| s[[i, j]] > s[[b, j]]) {
                best_in[j] = Some(i);
            }
        }
    }
    let succ: Vec<Option<usize>> = (0..n)
        .map(|i| best_out[i].filter(|&j| best_in[j] == Some(i)))
        .collect();
    let has_in: Vec<bool> = (0..n).map(|j| best_in[j].is_some()).collect();

    let mut absorbed = vec![false; n];
    let mut out = Vec::new();
    let follow = |start: usize, absorbed: &mut Vec<bool>| {
        let mut path = vec![start];
        let mut on_path = vec![false; n];
        on_path[start] = true;
        let mut cur = start;
        while let Some(j) = succ[cur] {
            if on_path[j] {
                break;
            }
            on_path[j] = true;
            path.push(j);
            cur = j;
        }
        let total: f64 = path.windows(2).map(|e| s[[e[0], e[1]]]).sum();
        for &w in &path {
            absorbed[w] = true;
        }
        ScoredEntity {
            confidence: total / (path.len() - 1) as f64,
            entity: Entity::new(t, path),
        }
    };
    for i in 0..n {
        if succ[i].is_some() && !has_in[i] && !absorbed[i] {
            out.push(follow(i, &mut absorbed));
        }
    }
    // Whatever still has an edge lies on a pure cycle; start at its lowest index.
    for i in 0..n {
        if succ[i].is_some() && !absorbed[i] {
            out.push(follow(i, &mut absorbed));
        }
    }
    for i in 0..n {
        if !absorbed[i] && s[[i, i]] > threshold {
            out.push(ScoredEntity {
                entity: Entity::new(t, vec![i]),
                confidence: s[[i, i]],
            });
        }
    }
    out
}

/// Entities of every type, at most `max_entities` overall ranked by mean
/// edge score, returned sorted by (type, word indices).
pub fn ner_decode(grids: &ScoreGrids, config: &DecodeConfig) -> Vec<ScoredEntity> {
    let mut all: Vec<ScoredEntity> = grids
        .grids
        .iter()
        .enumerate()
        .flat_map(|(t, g)| decode_type(g, t, config.threshold))
        .collect();
    all.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.entity.cmp(&b.entity))
    });
    all.truncate(config.max_entities);
    all.sort_by(|a, b| a.entity.cmp(&b.entity));
    all
}

/// Ordered entity pairs `(head, tail)`, as positions in `entities`, whose mean
/// pairwise logit is positive.
pub fn el_decode(scores: &Array2<f64>, entities: &[Entity]) -> Vec<(usize, usize)> {
    let mut links = Vec::new();
    for (a, ea) in entities.iter().enumerate() {
        for (b, eb) in entities.iter().enumerate() {
            if a == b || ea.is_empty() || eb.is_empty() {
                continue;
            }
            let mut total = 0.0;
            for &i in &ea.word_indices {
                for &j in &eb.word_indices {
                    total += scores[[i, j]];
                }
            }
            if total / (ea.len() * eb.len()) as f64 > 0.0 {
                links.push((a, b));
            }
        }
    }
    links
}

fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

/// Beam search for a Hamiltonian path from the start node 0 of an
/// `(n+1)×(n+1)` grid; returns word indices (node − 1).
pub fn rop_decode(scores: &Array2<f64>, config: &DecodeConfig) -> InputOrder {
    let size = scores.nrows();
    let n = size.saturating_sub(1);
    let width = config.beam_size.max(1);
    struct Beam {
        score: f64,
        path: Vec<usize>,
        visited: Vec<bool>,
    }
    let mut beams = vec![Beam {
        score: 0.0,
        path: vec![0],
        visited: {
            let mut v = vec![false; size];
            if size > 0 {
                v[0] = true;
            }
            v
        },
    }];
    for _ in 0..n {
        let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(beams.len() * n);
        for (bi, b) in beams.iter().enumerate() {
            let prev = *b.path.last().expect("non-empty path");
            for next in 1..size {
                if !b.visited[next] {
                    cand.push((b.score + log_sigmoid(scores[[prev, next]]), bi, next));
                }
            }
        }
        cand.sort_by(|x, y| y.0.total_cmp(&x.0));
        cand.truncate(width);
        beams = cand
            .into_iter()
            .map(|(score, bi, next)| {
                let mut path = beams[bi].path.clone();
                let mut visited = beams[bi].visited.clone();
                path.push(next);
                visited[next] = true;
                Beam {
                    score,
                    path,
                    visited,
                }
            })
            .collect();
    }
    let best = &beams[0];
    InputOrder::new(best.path[1..].iter().map(|v| v - 1).collect())
        .expect("beam paths visit every node once")
}

/// Predicted reading order for `doc`, scored under `order`.
pub fn reorder_from(
    doc: &Document,
    order: &InputOrder,
    params: &ModelParams,
    config: &DecodeConfig,
) -> Result<InputOrder> {
    match params.head {
        HeadSpec::GlobalPointer {
            start_token: true, ..
        } => {}
        _ => {
            return Err(Error::InvalidConfig(
                "reordering needs a reading-order model".into(),
            ))
        }
    }
    let grids = score_document(doc, order, params)?;
    Ok(rop_decode(&grids.grids[0], config))
}

/// Predicted reading order for `doc`, scored under its OCR order.
pub fn reorder(doc: &Document, params: &ModelParams, config: &DecodeConfig) -> Result<InputOrder> {
    reorder_from(doc, &ocr_order(doc), params, config)
}

/// Entity prediction with either head: token paths for a pointer model, BIO
/// tags read along `order` for a token classifier.
pub fn predict_entities(
    doc: &Document,
    order: &InputOrder,
    params: &ModelParams,
    config: &DecodeConfig,
) -> Result<Vec<ScoredEntity>> {
    match params.head {
        HeadSpec::GlobalPointer {
            start_token: false, ..
        } => Ok(ner_decode(&score_document(doc, order, params)?, config)),
        HeadSpec::GlobalPointer { .. } => Err(Error::InvalidConfig(
            "a reading-order model cannot predict entities".into(),
        )),
        HeadSpec::TokenClassifier { .. } => {
            let logits = classify_tokens(doc, order, params)?;
            let mut probs = vec![0.0; doc.len()];
            let tags = order
                .as_slice()
                .iter()
                .map(|&w| {
                    let row = logits.row(w);
                    let (best, &top) =
                        row.iter()
                            .enumerate()
                            .fold((0, &f64::NEG_INFINITY), |acc, (k, v)| {
                                if *v > *acc.1 {
                                    (k, v)
                                } else {
                                    acc
                                }
                            });
                    let z: f64 = row.iter().map(|v| (v - top).exp()).sum();
                    probs[w] = 1.0 / z;
                    BioTag::from_class_index(best)
                })
                .collect();
            let entities = bio_decode(&BioTagSequence { tags }, order);
            let mut out: Vec<ScoredEntity> = entities
                .into_iter()
                .map(|e| ScoredEntity {
                    confidence: e.word_indices.iter().map(|&w| probs[w]).sum::<f64>()
                        / e.len() as f64,
                    entity: e,
                })
                .collect();
            out.sort_by(|a, b| {
                b.confidence
                    .total_cmp(&a.confidence)
                    .then_with(|| a.entity.cmp(&b.entity))
            });
            out.truncate(config.max_entities);
            out.sort_by(|a, b| a.entity.cmp(&b.entity));
            Ok(out)
        }
    }
}

/// Links between `entities` predicted by an entity-linking model.
pub fn predict_links(
    doc: &Document,
    order: &InputOrder,
    params: &ModelParams,
    entities: &[Entity],
) -> Result<Vec<(usize, usize)>> {
    let grids = score_document(doc, order, params)?;
    if grids.size() != doc.len() {
        return Err(Error::InvalidConfig("not an entity-linking model".into()));
    }
    Ok(el_decode(&grids.grids[0], entities))
}

/// Per-document prediction record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<ScoredEntity>>,
    /// Pairs of positions into the gold entity list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_order: Option<Vec<usize>>,
}
