//! Gradients and the mini-batch training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{EncoderConfig, HeadKind, Optimizer, Task, TrainConfig};
use super::model::{classifier_loss_on_tape, encode_on_tape, pointer_loss_on_tape};
use super::params::{Gradients, HeadSpec, ModelParams};
use super::tape::Tape;
use crate::datagen::shuffle_order;
use crate::document::{ensure_valid, ocr_order, Document, InputOrder};
use crate::error::{Error, Result};
use crate::labels::{bio_encode, el_grid, ner_grids_for, rop_grid, BioTag, LabelGrid};
use crate::seed::{derive_seed, stream_rng, streams};

/// Supervision for one document under one input order.
#[derive(Clone, Debug)]
pub enum Target {
    Grids(Vec<LabelGrid>),
    /// BIO class index per word index.
    Tags(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct Example<'a> {
    pub doc: &'a Document,
    pub order: InputOrder,
    pub target: Target,
}

/// The order a document is fed in when it is not shuffled: a stored reorder
/// result if present, otherwise OCR order.
pub fn default_order(doc: &Document) -> InputOrder {
    doc.order
        .clone()
        .and_then(|o| InputOrder::new(o).ok())
        .unwrap_or_else(|| ocr_order(doc))
}

pub fn head_spec(task: Task, head: HeadKind, type_count: usize) -> Result<HeadSpec> {
    match (task, head) {
        (Task::Ner, HeadKind::Tpp) => Ok(HeadSpec::GlobalPointer {
            relations: type_count,
            start_token: false,
        }),
        (Task::El, HeadKind::Tpp) => Ok(HeadSpec::GlobalPointer {
            relations: 1,
            start_token: false,
        }),
        (Task::Rop, HeadKind::Tpp) => Ok(HeadSpec::GlobalPointer {
            relations: 1,
            start_token: true,
        }),
        (Task::Ner, HeadKind::Bio) => Ok(HeadSpec::TokenClassifier {
            classes: BioTag::class_count(type_count),
        }),
        (task, HeadKind::Bio) => Err(Error::InvalidConfig(format!(
            "the BIO head only supports ner, not {task}"
        ))),
    }
}

/// Order-independent grid targets for a pointer head.
pub fn grid_targets(doc: &Document, task: Task, type_count: usize) -> Result<Vec<LabelGrid>> {
    match task {
        Task::Ner => ner_grids_for(doc.len(), &doc.entities, type_count),
        Task::El => Ok(vec![el_grid(doc)?]),
        Task::Rop => {
            let gold = doc
                .gold_input_order()
                .ok_or_else(|| Error::InvalidDocument {
                    id: doc.id.clone(),
                    reason: "reading-order training needs `gold_order`".into(),
                })??;
            Ok(vec![rop_grid(&gold)])
        }
    }
}

pub fn bio_targets(doc: &Document, order: &InputOrder) -> Vec<usize> {
    let tags = bio_encode(doc, order);
    let mut out = vec![0; doc.len()];
    for (v, &w) in order.as_slice().iter().enumerate() {
        out[w] = tags.tags[v].class_index();
    }
    out
}

/// Loss of one example; `train` enables dropout.
pub fn example_loss(
    params: &ModelParams,
    ex: &Example<'_>,
    train: bool,
    dropout_seed: u64,
) -> Result<f64> {
    let mut tape = Tape::new(params);
    let out = example_on_tape(&mut tape, params, ex, train, dropout_seed)?;
    Ok(tape.scalar(out))
}

fn example_on_tape(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    ex: &Example<'_>,
    train: bool,
    dropout_seed: u64,
) -> Result<usize> {
    let mut rng = stream_rng(dropout_seed, streams::DROPOUT, 0);
    let h = encode_on_tape(tape, params, ex.doc, &ex.order, train, &mut rng)?;
    match &ex.target {
        Target::Grids(g) => pointer_loss_on_tape(tape, params, h, g, train, &mut rng),
        Target::Tags(t) => classifier_loss_on_tape(tape, params, h, t.clone(), train, &mut rng),
    }
}

/// Mean batch loss and its exact gradient. Example `k` draws dropout masks
/// from `derive_seed(dropout_seed, k)`.
pub fn grad(
    params: &ModelParams,
    batch: &[Example<'_>],
    train: bool,
    dropout_seed: u64,
) -> Result<(f64, Gradients)> {
    let mut grads = params.zero_gradients();
    let mut total = 0.0;
    let w = 1.0 / batch.len().max(1) as f64;
    for (k, ex) in batch.iter().enumerate() {
        let mut tape = Tape::new(params);
        let seed = derive_seed(dropout_seed, streams::DROPOUT, k as u64);
        let out = example_on_tape(&mut tape, params, ex, train, seed)?;
        total += tape.scalar(out) * w;
        tape.backward(out, w, &mut grads);
    }
    if let Some(block) = grads.first_non_finite(params) {
        return Err(Error::NonFiniteGradient(block.to_owned()));
    }
    Ok((total, grads))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean batch loss before each update.
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub params: ModelParams,
    pub log: TrainLog,
    /// Step at which the loss or gradient became non-finite; `params` then
    /// hold the last finite state.
    pub diverged_at: Option<usize>,
}

struct AdamState {
    m: Vec<ndarray::Array2<f64>>,
    v: Vec<ndarray::Array2<f64>>,
    /// Running `β1^t` and `β2^t`. `powi` lowers differently across
    /// optimisation levels, which would make checkpoints build-dependent.
    b1_t: f64,
    b2_t: f64,
}

/// Number of entity types across a corpus.
pub fn corpus_type_count(docs: &[Document]) -> usize {
    docs.iter().map(|d| d.entity_types.len()).max().unwrap_or(0)
}

pub fn train(
    docs: &[Document],
    task: Task,
    head: HeadKind,
    encoder: &EncoderConfig,
    hyper: &TrainConfig,
) -> Result<Trained> {
    train_with_callback(docs, task, head, encoder, hyper, |_, _| {})
}

/// [`train`] with a per-step callback receiving `(step, loss)`.
pub fn train_with_callback(
    docs: &[Document],
    task: Task,
    head: HeadKind,
    encoder: &EncoderConfig,
    hyper: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Trained> {
    encoder.validate()?;
    hyper.validate()?;
    if docs.is_empty() {
        return Err(Error::InvalidConfig("training corpus is empty".into()));
    }
    let type_count = corpus_type_count(docs);
    let spec = head_spec(task, head, type_count)?;
    let mut grids = Vec::with_capacity(docs.len());
    for doc in docs {
        ensure_valid(doc)?;
        grids.push(match head {
            HeadKind::Tpp => Some(grid_targets(doc, task, type_count)?),
            HeadKind::Bio => None,
        });
    }

    let mut params = ModelParams::init(encoder, spec)?;
    let mut log = TrainLog::default();
    let seed = encoder.seed;
    let warmup = (hyper.warmup_fraction * hyper.steps as f64).ceil() as usize;
    let mut adam = matches!(hyper.optimizer, Optimizer::Adam).then(|| AdamState {
        m: params.zero_gradients().blocks,
        v: params.zero_gradients().blocks,
        b1_t: 1.0,
        b2_t: 1.0,
    });

    let n_docs = docs.len();
    let n_shuffled = (hyper.shuffle_proportion * n_docs as f64).round() as usize;
    let mut epoch = 0u64;
    let mut queue: Vec<(usize, bool)> = Vec::new();
    let mut cursor = 0;

    for step in 0..hyper.steps {
        let mut batch_ids = Vec::with_capacity(hyper.batch_size);
        while batch_ids.len() < hyper.batch_size {
            if cursor == queue.len() {
                let mut perm: Vec<usize> = (0..n_docs).collect();
                perm.shuffle(&mut stream_rng(seed, streams::BATCHES, epoch));
                let mut pick: Vec<usize> = (0..n_docs).collect();
                pick.shuffle(&mut stream_rng(seed, streams::SHUFFLE_PICK, epoch));
                let mut shuffled = vec![false; n_docs];
                for &i in &pick[..n_shuffled] {
                    shuffled[i] = true;
                }
                queue = perm.into_iter().map(|i| (i, shuffled[i])).collect();
                cursor = 0;
                epoch += 1;
            }
            batch_ids.push((queue[cursor], epoch - 1));
            cursor += 1;
        }

        let batch: Vec<Example<'_>> = batch_ids
            .iter()
            .map(|&((i, shuffled), ep)| {
                let doc = &docs[i];
                let order = if shuffled {
                    shuffle_order(
                        doc,
                        derive_seed(seed, streams::SHUFFLE_ORDER, ep << 32 | i as u64),
                    )
                } else {
                    default_order(doc)
                };
                let target = match &grids[i] {
                    Some(g) => Target::Grids(g.clone()),
                    None => Target::Tags(bio_targets(doc, &order)),
                };
                Example { doc, order, target }
            })
            .collect();

        let dropout_seed = derive_seed(seed, streams::DROPOUT, step as u64);
        let (loss, mut g) = match grad(&params, &batch, true, dropout_seed) {
            Ok((loss, g)) if loss.is_finite() => (loss, g),
            Ok(_) | Err(Error::NonFiniteGradient(_)) => {
                return Ok(Trained {
                    params,
                    log,
                    diverged_at: Some(step),
                })
            }
            Err(e) => return Err(e),
        };
        log.losses.push(loss);
        on_step(step, loss);

        if let Some(c) = hyper.clip_norm {
            let norm = g.norm();
            if norm > c {
                g.scale(c / norm);
            }
        }
        let lr = if warmup > 0 {
            hyper.lr * ((step + 1) as f64 / warmup as f64).min(1.0)
        } else {
            hyper.lr
        };
        apply_update(&mut params, &g, lr, hyper.weight_decay, adam.as_mut());
    }
    Ok(Trained {
        params,
        log,
        diverged_at: None,
    })
}

fn apply_update(
    params: &mut ModelParams,
    g: &Gradients,
    lr: f64,
    weight_decay: f64,
    adam: Option<&mut AdamState>,
) {
    match adam {
        None => {
            for (i, gb) in g.blocks.iter().enumerate() {
                let p = params.block_mut(i);
                p.zip_mut_with(gb, |p, &g| *p -= lr * (g + weight_decay * *p));
            }
        }
        Some(state) => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            state.b1_t *= B1;
            state.b2_t *= B2;
            let c1 = 1.0 - state.b1_t;
            let c2 = 1.0 - state.b2_t;
            for (i, gb) in g.blocks.iter().enumerate() {
                let m = &mut state.m[i];
                let v = &mut state.v[i];
                m.zip_mut_with(gb, |m, &g| *m = B1 * *m + (1.0 - B1) * g);
                v.zip_mut_with(gb, |v, &g| *v = B2 * *v + (1.0 - B2) * g * g);
                let p = params.block_mut(i);
                ndarray::Zip::from(p)
                    .and(&*m)
                    .and(&*v)
                    .for_each(|p, &m, &v| {
                        *p -= lr * ((m / c1) / ((v / c2).sqrt() + EPS) + weight_decay * *p);
                    });
            }
        }
    }
}
