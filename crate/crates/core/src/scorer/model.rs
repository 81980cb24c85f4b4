//! Layout-aware encoder, Global Pointer scoring and the token classifier used
//! by the BIO baseline.
//!
//! Hidden states are indexed by word index, not by input position. The input
//! order only reaches the model through 1D position embeddings, so with
//! [`Position1d::None`] every output is bit-identical under any reordering.

use std::rc::Rc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};

use super::config::{Position1d, MAX_SEQUENCE};
use super::features::{layout_features, position_rows, relative_buckets, token_bucket};
use super::params::{HeadSpec, ModelParams};
use super::tape::{class_imbalance_loss, Tape, Var};
use crate::document::{Document, InputOrder};
use crate::error::{Error, Result};
use crate::labels::LabelGrid;

/// Real-valued logits, one square matrix per relation type.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGrids {
    pub grids: Vec<Array2<f64>>,
}

impl ScoreGrids {
    pub fn new(grids: Vec<Array2<f64>>) -> Self {
        Self { grids }
    }

    pub fn type_count(&self) -> usize {
        self.grids.len()
    }

    /// Side length of each grid.
    pub fn size(&self) -> usize {
        self.grids.first().map_or(0, |g| g.nrows())
    }

    pub fn get(&self, t: usize, i: usize, j: usize) -> f64 {
        self.grids[t][[i, j]]
    }

    /// `+value` on label bits and `-value` elsewhere.
    pub fn oracle(labels: &[LabelGrid], value: f64) -> Self {
        let grids = labels
            .iter()
            .map(|g| {
                let n = g.size();
                Array2::from_shape_fn((n, n), |(i, j)| if g.get(i, j) { value } else { -value })
            })
            .collect();
        Self { grids }
    }
}

pub(crate) fn dropout_mask(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: &mut impl Rng,
) -> Rc<Array2<f64>> {
    let keep = 1.0 / (1.0 - rate);
    Rc::new(Array2::from_shape_simple_fn((rows, cols), || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

/// Hidden states on the tape; also returns the 1D embedding when it is used
/// for positional residual linking.
pub(crate) fn encode_on_tape(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    doc: &Document,
    order: &InputOrder,
    train: bool,
    rng: &mut impl Rng,
) -> Result<Var> {
    let cfg = &params.config;
    let n = doc.len();
    if n > MAX_SEQUENCE {
        return Err(Error::SequenceTooLong {
            n,
            max: MAX_SEQUENCE,
        });
    }
    if n == 0 {
        return Err(Error::InvalidDocument {
            id: doc.id.clone(),
            reason: "no words".into(),
        });
    }
    if order.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: order.len(),
        });
    }
    let lay = &params.layout;
    let d = cfg.hidden_dim;

    let buckets = doc
        .words
        .iter()
        .map(|w| token_bucket(&w.text, cfg.vocab_buckets))
        .collect();
    let tok = tape.gather(lay.token, buckets);
    let feats = tape.input(layout_features(doc, cfg.use_2d_position));
    let w2d = tape.param(lay.pos2d_weight);
    let b2d = tape.param(lay.pos2d_bias);
    let p2d = tape.matmul(feats, w2d);
    let p2d = tape.add_row(p2d, b2d);
    let mut x = tape.add(tok, p2d);

    let mut pos1d = None;
    if let Some((outer, inner)) = position_rows(doc, order, cfg.use_1d_position) {
        let table = lay.pos1d.expect("1D table present for 1D modes");
        let mut p = tape.gather(table, outer);
        if let (Some(inner), Some(word_table)) = (inner, lay.pos1d_word) {
            let q = tape.gather(word_table, inner);
            p = tape.add(p, q);
        }
        x = tape.add(x, p);
        pos1d = Some(p);
    }
    debug_assert!(cfg.use_1d_position == Position1d::None || pos1d.is_some());

    if train && cfg.dropout_rate > 0.0 {
        let mask = dropout_mask(n, d, cfg.dropout_rate, rng);
        x = tape.mul_const(x, mask);
    }

    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let relative = lay.attention_bias.iter().any(Option::is_some).then(|| {
        let (g, a) = relative_buckets(doc, cfg.use_2d_position);
        (Rc::new(g), Rc::new(a))
    });
    for (&[wq, wk, wv, wo], bias) in lay.attention.iter().zip(&lay.attention_bias) {
        let (wq, wk, wv, wo) = (
            tape.param(wq),
            tape.param(wk),
            tape.param(wv),
            tape.param(wo),
        );
        let q = tape.matmul(x, wq);
        let k = tape.matmul(x, wk);
        let v = tape.matmul(x, wv);
        let logits = tape.matmul_t(q, k);
        let mut logits = tape.scale(logits, inv_sqrt_d);
        if let (Some([gb, ab]), Some((gi, ai))) = (bias, &relative) {
            let g = tape.gather_scalars(*gb, gi.clone(), n, n);
            let a = tape.gather_scalars(*ab, ai.clone(), n, n);
            logits = tape.sum(vec![logits, g, a]);
        }
        let attn = tape.softmax_rows(logits);
        let ctx = tape.matmul(attn, v);
        let out = tape.matmul(ctx, wo);
        x = tape.add(x, out);
    }
    for &[w1, b1, w2, b2] in &lay.mlp {
        let (w1, b1, w2, b2) = (
            tape.param(w1),
            tape.param(b1),
            tape.param(w2),
            tape.param(b2),
        );
        let u = tape.matmul(x, w1);
        let u = tape.add_row(u, b1);
        let u = tape.tanh(u);
        let u = tape.matmul(u, w2);
        let u = tape.add_row(u, b2);
        x = tape.add(x, u);
    }
    if let (true, Some(p)) = (cfg.positional_residual, pos1d) {
        x = tape.add(x, p);
    }
    Ok(x)
}

/// Hidden states `h` (one row per word index, `hidden_dim` columns).
pub fn encode(
    doc: &Document,
    order: &InputOrder,
    params: &ModelParams,
    train_mode: bool,
    rng: &mut impl Rng,
) -> Result<Array2<f64>> {
    let mut tape = Tape::new(params);
    let h = encode_on_tape(&mut tape, params, doc, order, train_mode, rng)?;
    Ok(tape.value(h).clone())
}

fn relation_scores(tape: &mut Tape<'_>, h: Var, proj: [Var; 4], inv_sqrt_d: f64) -> Var {
    let [wq, bq, wk, bk] = proj;
    let q = tape.matmul(h, wq);
    let q = tape.add_row(q, bq);
    let k = tape.matmul(h, wk);
    let k = tape.add_row(k, bk);
    let s = tape.matmul_t(q, k);
    tape.scale(s, inv_sqrt_d)
}

/// Prepends the learned start node when the head uses one.
fn scored_states(tape: &mut Tape<'_>, params: &ModelParams, h: Var) -> Var {
    match params.layout.start {
        Some(start) => {
            let s = tape.param(start);
            tape.concat_rows(s, h)
        }
        None => h,
    }
}

/// Global Pointer loss for one document. The final projections are shared
/// across `multi_dropout_k` dropout-masked copies whose losses are averaged.
pub(crate) fn pointer_loss_on_tape(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    h: Var,
    labels: &[LabelGrid],
    train: bool,
    rng: &mut impl Rng,
) -> Result<Var> {
    let cfg = &params.config;
    let h = scored_states(tape, params, h);
    let rows = tape.value(h).nrows();
    if labels.len() != params.layout.relations.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} label grids for {} relation heads",
            labels.len(),
            params.layout.relations.len()
        )));
    }
    if let Some(g) = labels.iter().find(|g| g.size() != rows) {
        return Err(Error::ShapeMismatch(format!(
            "label grid of size {} for {rows} scored tokens",
            g.size()
        )));
    }
    let proj: Vec<[Var; 4]> = params
        .layout
        .relations
        .iter()
        .map(|r| r.map(|b| tape.param(b)))
        .collect();
    let bits: Vec<Rc<Vec<bool>>> = labels
        .iter()
        .map(|g| Rc::new(g.as_bits().to_vec()))
        .collect();
    let dropout = train && cfg.dropout_rate > 0.0;
    let copies = if dropout { cfg.multi_dropout_k } else { 1 };
    let inv_sqrt_d = 1.0 / (cfg.hidden_dim as f64).sqrt();
    let mut terms = Vec::with_capacity(copies * proj.len());
    for _ in 0..copies {
        let hk = if dropout {
            let mask = dropout_mask(rows, cfg.hidden_dim, cfg.dropout_rate, rng);
            tape.mul_const(h, mask)
        } else {
            h
        };
        for (p, b) in proj.iter().zip(&bits) {
            let s = relation_scores(tape, hk, *p, inv_sqrt_d);
            terms.push(tape.class_imbalance_loss(s, b.clone()));
        }
    }
    let total = tape.sum(terms);
    Ok(tape.scale(total, 1.0 / copies as f64))
}

pub(crate) fn classifier_loss_on_tape(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    h: Var,
    targets: Vec<usize>,
    train: bool,
    rng: &mut impl Rng,
) -> Result<Var> {
    let [w, b] = params
        .layout
        .classifier
        .ok_or_else(|| Error::ShapeMismatch("model has no token classifier".into()))?;
    let cfg = &params.config;
    let h = if train && cfg.dropout_rate > 0.0 {
        let rows = tape.value(h).nrows();
        let mask = dropout_mask(rows, cfg.hidden_dim, cfg.dropout_rate, rng);
        tape.mul_const(h, mask)
    } else {
        h
    };
    let (w, b) = (tape.param(w), tape.param(b));
    let logits = tape.matmul(h, w);
    let logits = tape.add_row(logits, b);
    Ok(tape.cross_entropy(logits, Rc::new(targets)))
}

/// `s(i,j) = (W_q h_i + b_q)·(W_k h_j + b_k) / √d` for the first
/// `type_count` relation heads. `h` must already include the start node when
/// the head uses one.
pub fn global_pointer_scores(
    h: &Array2<f64>,
    params: &ModelParams,
    type_count: usize,
) -> Result<ScoreGrids> {
    if h.nrows() == 0 {
        return Err(Error::ShapeMismatch("no hidden states".into()));
    }
    if type_count > params.layout.relations.len() {
        return Err(Error::ShapeMismatch(format!(
            "{type_count} types requested, model has {}",
            params.layout.relations.len()
        )));
    }
    let inv_sqrt_d = 1.0 / (params.config.hidden_dim as f64).sqrt();
    let grids = params.layout.relations[..type_count]
        .iter()
        .map(|&[wq, bq, wk, bk]| {
            let q = h.dot(params.block(wq)) + params.block(bq).row(0);
            let k = h.dot(params.block(wk)) + params.block(bk).row(0);
            q.dot(&k.t()) * inv_sqrt_d
        })
        .collect();
    Ok(ScoreGrids { grids })
}

/// Evaluation-mode scores for a document. Reading-order heads return grids of
/// size `n + 1` with the start node at index 0.
pub fn score_document(
    doc: &Document,
    order: &InputOrder,
    params: &ModelParams,
) -> Result<ScoreGrids> {
    let HeadSpec::GlobalPointer { relations, .. } = params.head else {
        return Err(Error::ShapeMismatch("model has no pointer head".into()));
    };
    let mut tape = Tape::new(params);
    let h = encode_on_tape(
        &mut tape,
        params,
        doc,
        order,
        false,
        &mut rand_chacha::ChaCha8Rng::seed_from_u64(0),
    )?;
    let h = scored_states(&mut tape, params, h);
    global_pointer_scores(tape.value(h), params, relations)
}

/// Evaluation-mode tag logits, one row per word index.
pub fn classify_tokens(
    doc: &Document,
    order: &InputOrder,
    params: &ModelParams,
) -> Result<Array2<f64>> {
    let [w, b] = params
        .layout
        .classifier
        .ok_or_else(|| Error::ShapeMismatch("model has no token classifier".into()))?;
    let h = encode(
        doc,
        order,
        params,
        false,
        &mut rand_chacha::ChaCha8Rng::seed_from_u64(0),
    )?;
    Ok(h.dot(params.block(w)) + params.block(b).row(0))
}

/// Class-imbalance loss summed over relation types:
/// `log(1 + Σ_{neg} e^{s}) + log(1 + Σ_{pos} e^{-s})` per type.
pub fn loss(scores: &ScoreGrids, labels: &[LabelGrid]) -> Result<f64> {
    if scores.grids.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} score grids, {} label grids",
            scores.grids.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (s, l) in scores.grids.iter().zip(labels) {
        if s.dim() != (l.size(), l.size()) {
            return Err(Error::ShapeMismatch(format!(
                "score grid {:?} vs label grid {}",
                s.dim(),
                l.size()
            )));
        }
        let s = s.as_standard_layout();
        total += class_imbalance_loss(s.as_slice().unwrap(), l.as_bits());
    }
    Ok(total)
}
