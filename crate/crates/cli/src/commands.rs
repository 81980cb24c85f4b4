use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tpp_core::corpus::{pretty, write_dir_atomic};
use tpp_core::metrics::{
    ard, corpus_continuous_rate, entity_tally, page_bleu, word_tally, Counts, EvalReport, Tally,
};
use tpp_core::scorer::{grid_targets, head_spec, train_with_callback};
use tpp_core::seed::derive_seed;
use tpp_core::{
    dataset_stats, gen_corpus, ocr_order, predict_entities, predict_links, reorder_from,
    shuffle_order, Checkpoint, CheckpointMeta, Corpus, DatasetStats, Document, Entity, HeadKind,
    InputOrder, Prediction, Split, Task,
};

use crate::config::{OrderSource, RunConfig};
use crate::error::{failed, invalid, Failure};
use crate::{Cli, Command};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const REPORT_FILE: &str = "report.json";
pub const STATS_FILE: &str = "stats.json";

const EVAL_SHUFFLE_STREAM: u64 = 0x5348_5546;

/// Effective config for `cli`: file values, then flag overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    let p = &mut cfg.paths;
    match &cli.command {
        Command::Gen { out } => p.out = Some(out.clone()),
        Command::Train {
            corpus,
            out,
            head,
            order,
            ..
        } => {
            p.corpus = Some(corpus.clone());
            p.out = Some(out.clone());
            cfg.head = head.unwrap_or(cfg.head);
            cfg.train_order = order.unwrap_or(cfg.train_order);
        }
        Command::Decode {
            corpus,
            checkpoint,
            out,
            order,
            split,
            ..
        } => {
            p.corpus = Some(corpus.clone());
            p.checkpoint = Some(checkpoint.clone());
            p.out = Some(out.clone());
            cfg.input_order = order.unwrap_or(cfg.input_order);
            cfg.split = split.unwrap_or(cfg.split);
        }
        Command::Reorder {
            corpus,
            checkpoint,
            out,
            order,
        } => {
            p.corpus = Some(corpus.clone());
            p.checkpoint = Some(checkpoint.clone());
            p.out = Some(out.clone());
            cfg.input_order = order.unwrap_or(cfg.input_order);
        }
        Command::Eval {
            corpus,
            predictions,
            out,
            split,
            ..
        } => {
            p.corpus = Some(corpus.clone());
            p.predictions = Some(predictions.clone());
            p.out = out.clone();
            cfg.split = split.unwrap_or(cfg.split);
        }
        Command::Stats {
            corpus, out, order, ..
        } => {
            p.corpus = Some(corpus.clone());
            p.out = out.clone();
            cfg.input_order = order.unwrap_or(cfg.input_order);
        }
    }
    let cfg = cfg.resolved();
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    let cfg = effective_config(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Failure::runtime(format!("worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Gen { out } => cmd_gen(&cfg, out),
        Command::Train {
            task, corpus, out, ..
        } => cmd_train(&cfg, *task, corpus, out),
        Command::Decode {
            task,
            corpus,
            checkpoint,
            out,
            ..
        } => cmd_decode(&cfg, *task, corpus, checkpoint, out),
        Command::Reorder {
            corpus,
            checkpoint,
            out,
            ..
        } => cmd_reorder(&cfg, corpus, checkpoint, out),
        Command::Eval {
            task,
            corpus,
            predictions,
            out,
            ..
        } => cmd_eval(&cfg, *task, corpus, predictions, out.as_deref()),
        Command::Stats {
            corpus, out, split, ..
        } => cmd_stats(&cfg, corpus, out.as_deref(), *split),
    })
}

fn load_corpus(dir: &Path) -> Result<Corpus, Failure> {
    Corpus::load(dir).map_err(invalid(format!("corpus {}", dir.display())))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(invalid(format!("checkpoint {}", path.display())))
}

fn write_outputs(out: &Path, files: Vec<(String, Vec<u8>)>) -> Result<(), Failure> {
    write_dir_atomic(out, &files).map_err(failed(format!("writing {}", out.display())))
}

fn to_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    pretty(value).expect("output serializes").into_bytes()
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Input order of `doc` under `source`. Shuffles depend only on the seed and
/// the document id.
pub fn input_order(doc: &Document, source: OrderSource, seed: u64) -> Result<InputOrder, Failure> {
    let missing = |key: &str| Failure::validation(format!("document `{}` has no `{key}`", doc.id));
    match source {
        OrderSource::Ocr => Ok(ocr_order(doc)),
        OrderSource::Gold => doc
            .gold_input_order()
            .ok_or_else(|| missing("gold_order"))?
            .map_err(invalid(format!("document `{}`", doc.id))),
        OrderSource::Stored => InputOrder::new(doc.order.clone().ok_or_else(|| missing("order"))?)
            .map_err(invalid(format!("document `{}`", doc.id))),
        OrderSource::Shuffled => Ok(shuffle_order(
            doc,
            derive_seed(seed, EVAL_SHUFFLE_STREAM, fnv1a(&doc.id)),
        )),
    }
}

fn orders(docs: &[&Document], source: OrderSource, seed: u64) -> Result<Vec<InputOrder>, Failure> {
    docs.iter().map(|d| input_order(d, source, seed)).collect()
}

fn type_names(docs: &[Document]) -> Vec<String> {
    docs.iter()
        .map(|d| &d.entity_types)
        .max_by_key(|t| t.len())
        .cloned()
        .unwrap_or_default()
}

fn echo(cfg: &RunConfig) -> (String, Vec<u8>) {
    (CONFIG_FILE.to_owned(), cfg.to_json().into_bytes())
}

pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let corpus = gen_corpus(&cfg.gen).map_err(failed("generation"))?;
    corpus
        .save(out, &[(CONFIG_FILE, cfg.to_json())])
        .map_err(failed(format!("writing {}", out.display())))?;
    println!(
        "generated {} documents ({} train / {} val / {} test) in {}",
        corpus.documents.len(),
        corpus.splits.train.len(),
        corpus.splits.val.len(),
        corpus.splits.test.len(),
        out.display()
    );
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub task: Task,
    pub head: HeadKind,
    pub documents: usize,
    pub steps: usize,
    pub diverged_at: Option<usize>,
    pub losses: Vec<f64>,
}

pub fn cmd_train(
    cfg: &RunConfig,
    task: Task,
    corpus_dir: &Path,
    out: &Path,
) -> Result<(), Failure> {
    let corpus = load_corpus(corpus_dir)?;
    let split = corpus.split(Split::Train);
    if split.is_empty() {
        return Err(Failure::validation("the train split is empty"));
    }
    let train_orders = orders(&split, cfg.train_order, cfg.seed)?;
    let docs: Vec<Document> = split
        .iter()
        .zip(train_orders)
        .map(|(d, o)| Document {
            order: Some(o.into_vec()),
            ..(*d).clone()
        })
        .collect();
    let names = type_names(&docs);
    head_spec(task, cfg.head, names.len()).map_err(invalid("head"))?;
    if cfg.head == HeadKind::Tpp {
        for d in &docs {
            grid_targets(d, task, names.len()).map_err(invalid(format!("document `{}`", d.id)))?;
        }
    }

    let trained = train_with_callback(&docs, task, cfg.head, &cfg.encoder, &cfg.train, |_, _| {})
        .map_err(failed("training"))?;
    let record = TrainRecord {
        task,
        head: cfg.head,
        documents: docs.len(),
        steps: trained.log.losses.len(),
        diverged_at: trained.diverged_at,
        losses: trained.log.losses.clone(),
    };
    let checkpoint = Checkpoint {
        meta: CheckpointMeta {
            task,
            head_kind: cfg.head,
            type_names: names,
            train: cfg.train.clone(),
            steps_done: record.steps,
        },
        params: trained.params,
    };
    let bytes = checkpoint.to_bytes().map_err(failed("checkpoint"))?;
    write_outputs(
        out,
        vec![
            (CHECKPOINT_FILE.to_owned(), bytes),
            (TRAIN_LOG_FILE.to_owned(), to_pretty(&record)),
            echo(cfg),
        ],
    )?;
    if let Some(step) = record.diverged_at {
        return Err(Failure::runtime(format!(
            "training diverged at step {step}; the last finite parameters were saved to {}",
            out.display()
        )));
    }
    let tail = record.losses.len().min(50);
    let recent = record.losses[record.losses.len() - tail..]
        .iter()
        .sum::<f64>()
        / tail.max(1) as f64;
    println!(
        "trained {task} ({}) on {} documents for {} steps; mean loss over the last {tail} steps {recent:.4}",
        head_name(cfg.head),
        record.documents,
        record.steps
    );
    Ok(())
}

fn head_name(head: HeadKind) -> &'static str {
    match head {
        HeadKind::Tpp => "tpp",
        HeadKind::Bio => "bio",
    }
}

fn check_task(checkpoint: &Checkpoint, task: Task) -> Result<(), Failure> {
    if checkpoint.meta.task == task {
        Ok(())
    } else {
        Err(Failure::validation(format!(
            "checkpoint was trained for `{}`, not `{task}`",
            checkpoint.meta.task
        )))
    }
}

fn check_types(checkpoint: &Checkpoint, docs: &[&Document]) -> Result<(), Failure> {
    let known = &checkpoint.meta.type_names;
    let bad: Vec<String> = docs
        .iter()
        .filter(|d| {
            d.entity_types.len() > known.len()
                || known[..d.entity_types.len()] != d.entity_types[..]
        })
        .map(|d| {
            format!(
                "document `{}`: entity types {:?} do not match the checkpoint's {known:?}",
                d.id, d.entity_types
            )
        })
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::validation("entity types differ from the checkpoint").with_details(bad))
    }
}

pub fn cmd_decode(
    cfg: &RunConfig,
    task: Task,
    corpus_dir: &Path,
    checkpoint_path: &Path,
    out: &Path,
) -> Result<(), Failure> {
    let checkpoint = load_checkpoint(checkpoint_path)?;
    check_task(&checkpoint, task)?;
    let corpus = load_corpus(corpus_dir)?;
    let docs = corpus.split(cfg.split);
    if task == Task::Ner {
        check_types(&checkpoint, &docs)?;
    }
    let inputs = orders(&docs, cfg.input_order, cfg.seed)?;
    let params = &checkpoint.params;
    let predictions: Vec<Prediction> = docs
        .par_iter()
        .zip(inputs.par_iter())
        .map(|(doc, order)| {
            let mut p = Prediction {
                id: doc.id.clone(),
                ..Prediction::default()
            };
            let context = format!("document `{}`", doc.id);
            match task {
                Task::Ner => {
                    p.entities = Some(
                        predict_entities(doc, order, params, &cfg.decode)
                            .map_err(failed(context))?,
                    )
                }
                Task::El => {
                    p.links = Some(
                        predict_links(doc, order, params, &doc.entities)
                            .map_err(failed(context))?,
                    )
                }
                Task::Rop => {
                    p.predicted_order = Some(
                        reorder_from(doc, order, params, &cfg.decode)
                            .map_err(failed(context))?
                            .into_vec(),
                    )
                }
            }
            Ok(p)
        })
        .collect::<Result<_, Failure>>()?;
    write_outputs(
        out,
        vec![
            (PREDICTIONS_FILE.to_owned(), to_pretty(&predictions)),
            echo(cfg),
        ],
    )?;
    println!(
        "decoded {} {} documents for {task} into {}",
        predictions.len(),
        split_name(cfg.split),
        out.display()
    );
    Ok(())
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

pub fn cmd_reorder(
    cfg: &RunConfig,
    corpus_dir: &Path,
    checkpoint_path: &Path,
    out: &Path,
) -> Result<(), Failure> {
    let checkpoint = load_checkpoint(checkpoint_path)?;
    check_task(&checkpoint, Task::Rop)?;
    let mut corpus = load_corpus(corpus_dir)?;
    let all: Vec<&Document> = corpus.documents.iter().collect();
    let inputs = orders(&all, cfg.input_order, cfg.seed)?;
    let predicted: Vec<InputOrder> = all
        .par_iter()
        .zip(inputs.par_iter())
        .map(|(doc, order)| {
            reorder_from(doc, order, &checkpoint.params, &cfg.decode)
                .map_err(failed(format!("document `{}`", doc.id)))
        })
        .collect::<Result<_, Failure>>()?;
    let before = corpus_continuous_rate(all.iter().copied().zip(&inputs));
    let after = corpus_continuous_rate(all.iter().copied().zip(&predicted));
    for (doc, order) in corpus.documents.iter_mut().zip(predicted) {
        doc.order = Some(order.into_vec());
    }
    corpus
        .save(out, &[(CONFIG_FILE, cfg.to_json())])
        .map_err(failed(format!("writing {}", out.display())))?;
    println!(
        "reordered {} documents into {}; continuous entity rate {} -> {}",
        corpus.documents.len(),
        out.display(),
        rate(before),
        rate(after)
    );
    Ok(())
}

fn rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_owned(), |r| format!("{:.2}%", 100.0 * r))
}

/// Machine-readable evaluation result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: Task,
    pub split: Split,
    pub documents: usize,
    /// Exact entity matches (ner).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<EvalReport>,
    /// Word-level tagging view of the same predictions (ner).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<EvalReport>,
    /// Directed entity links (el).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<EvalReport>,
    /// Mean page-level BLEU ×100 (rop).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_bleu: Option<f64>,
    /// Mean average relative distance (rop).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ard: Option<f64>,
    /// Documents whose order is reproduced exactly (rop).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_orders: Option<usize>,
}

fn read_predictions(dir: &Path) -> Result<Vec<Prediction>, Failure> {
    let path: PathBuf = dir.join(PREDICTIONS_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::validation(format!("predictions {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::validation(format!("predictions {}: {e}", path.display())))
}

/// Pairs every document of the split with its prediction, or lists every id
/// that does not line up.
fn match_ids<'a>(
    docs: &[&'a Document],
    predictions: &'a [Prediction],
) -> Result<Vec<(&'a Document, &'a Prediction)>, Failure> {
    let mut by_id: BTreeMap<&str, &Prediction> = BTreeMap::new();
    let mut details = Vec::new();
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() {
            details.push(format!("duplicate prediction for `{}`", p.id));
        }
    }
    let known: BTreeSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    for id in by_id.keys().filter(|id| !known.contains(*id)) {
        details.push(format!("prediction for unknown document `{id}`"));
    }
    for d in docs.iter().filter(|d| !by_id.contains_key(d.id.as_str())) {
        details.push(format!("missing prediction for `{}`", d.id));
    }
    if details.is_empty() {
        Ok(docs.iter().map(|d| (*d, by_id[d.id.as_str()])).collect())
    } else {
        Err(Failure::validation("predictions do not match the corpus split").with_details(details))
    }
}

fn check_prediction(doc: &Document, p: &Prediction, task: Task) -> Result<(), String> {
    let n = doc.len();
    match task {
        Task::Ner => {
            let entities = p.entities.as_ref().ok_or("no `entities`")?;
            if entities.iter().any(|e| {
                e.entity.word_indices.is_empty() || e.entity.word_indices.iter().any(|&w| w >= n)
            }) {
                return Err("entity word index out of range".into());
            }
        }
        Task::El => {
            let links = p.links.as_ref().ok_or("no `links`")?;
            if links
                .iter()
                .any(|&(a, b)| a >= doc.entities.len() || b >= doc.entities.len())
            {
                return Err("link references a missing entity".into());
            }
        }
        Task::Rop => {
            let order = p.predicted_order.as_ref().ok_or("no `predicted_order`")?;
            if order.iter().any(|&w| w >= n) {
                return Err("predicted order names a missing word".into());
            }
        }
    }
    Ok(())
}

pub fn cmd_eval(
    cfg: &RunConfig,
    task: Task,
    corpus_dir: &Path,
    predictions_dir: &Path,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let corpus = load_corpus(corpus_dir)?;
    let docs = corpus.split(cfg.split);
    let predictions = read_predictions(predictions_dir)?;
    let pairs = match_ids(&docs, &predictions)?;
    let bad: Vec<String> = pairs
        .iter()
        .filter_map(|(d, p)| {
            check_prediction(d, p, task)
                .err()
                .map(|e| format!("`{}`: {e}", d.id))
        })
        .collect();
    if !bad.is_empty() {
        return Err(
            Failure::validation(format!("predictions are not valid for {task}")).with_details(bad),
        );
    }
    if task == Task::Rop {
        if let Some(d) = pairs.iter().find(|(d, _)| d.gold_order.is_none()) {
            return Err(Failure::validation(format!(
                "document `{}` has no `gold_order`",
                d.0.id
            )));
        }
    }

    let names = type_names(&corpus.documents);
    let mut report = Report {
        task,
        split: cfg.split,
        documents: pairs.len(),
        entity: None,
        word: None,
        link: None,
        page_bleu: None,
        ard: None,
        exact_orders: None,
    };
    match task {
        Task::Ner => {
            let (entity, word) = pairs
                .par_iter()
                .map(|(d, p)| {
                    let pred: Vec<Entity> = p
                        .entities
                        .as_ref()
                        .expect("checked")
                        .iter()
                        .map(|e| e.entity.clone())
                        .collect();
                    (
                        entity_tally(&pred, &d.entities),
                        word_tally(&pred, &d.entities, d.len()),
                    )
                })
                .collect::<Vec<_>>()
                .into_iter()
                .fold(
                    (Tally::default(), Tally::default()),
                    |(mut a, mut b), (x, y)| {
                        a.merge(&x);
                        b.merge(&y);
                        (a, b)
                    },
                );
            report.entity = Some(entity.report(&names));
            report.word = Some(word.report(&names));
        }
        Task::El => {
            let mut total = Counts::default();
            for (d, p) in &pairs {
                let pred: BTreeSet<(usize, usize)> =
                    p.links.as_ref().expect("checked").iter().copied().collect();
                let gold: BTreeSet<(usize, usize)> = d.links.iter().copied().collect();
                total.add(Counts {
                    predicted: pred.len(),
                    gold: gold.len(),
                    correct: pred.intersection(&gold).count(),
                });
            }
            report.link = Some(
                Tally {
                    total,
                    per_type: BTreeMap::new(),
                }
                .report(&[]),
            );
        }
        Task::Rop => {
            let scores = pairs
                .par_iter()
                .map(|(d, p)| {
                    let gold = d.gold_order.as_ref().expect("checked");
                    let pred = p.predicted_order.as_ref().expect("checked");
                    let context = format!("document `{}`", d.id);
                    Ok((
                        page_bleu(pred, gold).map_err(invalid(&context))?,
                        ard(pred, gold).map_err(invalid(&context))?,
                        pred == gold,
                    ))
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            let n = scores.len().max(1) as f64;
            report.page_bleu = Some(scores.iter().map(|s| s.0).sum::<f64>() / n);
            report.ard = Some(scores.iter().map(|s| s.1).sum::<f64>() / n);
            report.exact_orders = Some(scores.iter().filter(|s| s.2).count());
        }
    }
    print!("{}", render_report(&report));
    if let Some(out) = out {
        write_outputs(
            out,
            vec![(REPORT_FILE.to_owned(), to_pretty(&report)), echo(cfg)],
        )?;
    }
    Ok(())
}

fn eval_rows(out: &mut String, label: &str, r: &EvalReport) {
    use std::fmt::Write;
    let _ = writeln!(
        out,
        "{:<14} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}",
        label, "precision", "recall", "f1", "pred", "gold", "correct"
    );
    let mut row = |name: &str, p: f64, rc: f64, f: f64, c: &Counts| {
        let _ = writeln!(
            out,
            "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>7} {:>7}",
            name, p, rc, f, c.predicted, c.gold, c.correct
        );
    };
    for (name, t) in &r.per_type {
        row(name, t.precision, t.recall, t.f1, &t.support);
    }
    row("overall", r.precision, r.recall, r.f1, &r.support);
}

pub fn render_report(report: &Report) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} on {} {} documents",
        report.task,
        report.documents,
        split_name(report.split)
    );
    if let Some(r) = &report.entity {
        eval_rows(&mut out, "entity", r);
    }
    if let Some(r) = &report.word {
        eval_rows(&mut out, "word", r);
    }
    if let Some(r) = &report.link {
        eval_rows(&mut out, "link", r);
    }
    if let (Some(b), Some(a), Some(e)) = (report.page_bleu, report.ard, report.exact_orders) {
        let _ = writeln!(out, "page BLEU      {b:.2}");
        let _ = writeln!(out, "ARD            {a:.4}");
        let _ = writeln!(out, "exact orders   {e}/{}", report.documents);
    }
    out
}

/// Corpus statistics plus the continuous entity rate under a chosen order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub stats: DatasetStats,
    pub input_order: OrderSource,
    pub input_continuous_rate: Option<f64>,
}

pub fn cmd_stats(
    cfg: &RunConfig,
    corpus_dir: &Path,
    out: Option<&Path>,
    split: Option<Split>,
) -> Result<(), Failure> {
    let mut corpus = load_corpus(corpus_dir)?;
    if let Some(s) = split {
        let keep: BTreeSet<String> = corpus.splits.ids(s).iter().cloned().collect();
        corpus.documents.retain(|d| keep.contains(&d.id));
        for other in [Split::Train, Split::Val, Split::Test] {
            if other != s {
                match other {
                    Split::Train => corpus.splits.train.clear(),
                    Split::Val => corpus.splits.val.clear(),
                    Split::Test => corpus.splits.test.clear(),
                }
            }
        }
    }
    let docs: Vec<&Document> = corpus.documents.iter().collect();
    let inputs = orders(&docs, cfg.input_order, cfg.seed)?;
    let record = StatsRecord {
        split,
        stats: dataset_stats(&corpus),
        input_order: cfg.input_order,
        input_continuous_rate: corpus_continuous_rate(docs.iter().copied().zip(&inputs)),
    };
    print!("{}", render_stats(&record));
    if let Some(out) = out {
        write_outputs(
            out,
            vec![(STATS_FILE.to_owned(), to_pretty(&record)), echo(cfg)],
        )?;
    }
    Ok(())
}

pub fn render_stats(r: &StatsRecord) -> String {
    let s = &r.stats;
    let order = match r.input_order {
        OrderSource::Ocr => "ocr",
        OrderSource::Gold => "gold",
        OrderSource::Stored => "stored",
        OrderSource::Shuffled => "shuffled",
    };
    format!(
        "segments            {}\n\
         words               {}\n\
         avg segment length  {:.2}\n\
         entities            {}\n\
         avg entity length   {:.2}\n\
         continuous (ocr)    {}\n\
         {:<19} {}\n\
         types               {}\n\
         split sizes         {}-{}-{}\n",
        s.segments,
        s.words,
        s.avg_segment_length,
        s.entities,
        s.avg_entity_length,
        rate(s.continuous_rate),
        format!("continuous ({order})"),
        rate(r.input_continuous_rate),
        s.types,
        s.splits.train,
        s.splits.val,
        s.splits.test
    )
}
