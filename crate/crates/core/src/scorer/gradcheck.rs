use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EncoderConfig, Position1d, Position2d};
use super::params::{HeadSpec, ModelParams};
use super::tape::Tape;
use super::train::{example_loss, grad, Example, Target};
use crate::document::{BoundingBox, Document, InputOrder, Segment, Word};
use crate::labels::LabelGrid;

const STEP: f64 = 1e-4;
const TOLERANCE: f64 = 1e-4;

fn random_doc(rng: &mut ChaCha8Rng, n: usize) -> Document {
    let mut words = Vec::new();
    let mut segments = Vec::new();
    let mut w = 0;
    let mut y = 20.0;
    while w < n {
        let len = rng.random_range(1..=3).min(n - w);
        let mut x = rng.random_range(10.0..400.0);
        let start = w;
        for _ in 0..len {
            let width = rng.random_range(20.0..80.0);
            words.push(Word {
                text: format!("w{}", rng.random_range(0..50)),
                bbox: BoundingBox::new(x, y, x + width, y + 16.0),
            });
            x += width + 6.0;
            w += 1;
        }
        let ids: Vec<usize> = (start..w).collect();
        let bbox = ids
            .iter()
            .map(|&i| words[i].bbox)
            .reduce(|a, b| a.union(&b))
            .unwrap();
        segments.push(Segment {
            bbox,
            word_indices: ids,
        });
        y += 24.0;
    }
    Document {
        id: "g".into(),
        page_width: 1000.0,
        page_height: 1400.0,
        words,
        segments,
        entity_types: vec![],
        entities: vec![],
        links: vec![],
        gold_order: None,
        order: None,
    }
}

fn random_order(rng: &mut ChaCha8Rng, n: usize) -> InputOrder {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    InputOrder::new(v).unwrap()
}

fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> LabelGrid {
    let mut g = LabelGrid::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < 0.15 {
                g.set(i, j, true);
            }
        }
    }
    g
}

struct Case {
    config: EncoderConfig,
    head: HeadSpec,
}

fn cases() -> Vec<Case> {
    let base = EncoderConfig {
        vocab_buckets: 64,
        ..EncoderConfig::default()
    };
    vec![
        Case {
            config: EncoderConfig {
                hidden_dim: 8,
                use_1d_position: Position1d::Global,
                use_2d_position: Position2d::Word,
                attention_layers: 1,
                mlp_layers: 1,
                dropout_rate: 0.2,
                multi_dropout_k: 3,
                seed: 1,
                ..base.clone()
            },
            head: HeadSpec::GlobalPointer {
                relations: 2,
                start_token: false,
            },
        },
        Case {
            config: EncoderConfig {
                hidden_dim: 12,
                use_1d_position: Position1d::Local,
                use_2d_position: Position2d::Segment,
                attention_layers: 2,
                mlp_layers: 0,
                dropout_rate: 0.0,
                multi_dropout_k: 1,
                seed: 2,
                ..base.clone()
            },
            head: HeadSpec::GlobalPointer {
                relations: 1,
                start_token: true,
            },
        },
        Case {
            config: EncoderConfig {
                hidden_dim: 16,
                use_1d_position: Position1d::None,
                attention_layers: 1,
                mlp_layers: 2,
                dropout_rate: 0.1,
                multi_dropout_k: 2,
                positional_residual: false,
                seed: 3,
                ..base.clone()
            },
            head: HeadSpec::GlobalPointer {
                relations: 3,
                start_token: false,
            },
        },
        Case {
            config: EncoderConfig {
                hidden_dim: 6,
                use_1d_position: Position1d::Global,
                attention_layers: 0,
                mlp_layers: 1,
                dropout_rate: 0.3,
                multi_dropout_k: 2,
                seed: 4,
                ..base.clone()
            },
            head: HeadSpec::TokenClassifier { classes: 5 },
        },
        Case {
            config: EncoderConfig {
                hidden_dim: 10,
                use_1d_position: Position1d::Local,
                attention_layers: 1,
                mlp_layers: 1,
                dropout_rate: 0.15,
                multi_dropout_k: 4,
                seed: 5,
                ..base
            },
            head: HeadSpec::GlobalPointer {
                relations: 1,
                start_token: true,
            },
        },
    ]
}

fn target(rng: &mut ChaCha8Rng, head: HeadSpec, n: usize) -> Target {
    match head {
        HeadSpec::GlobalPointer {
            relations,
            start_token,
        } => {
            let size = n + usize::from(start_token);
            Target::Grids((0..relations).map(|_| random_grid(rng, size)).collect())
        }
        HeadSpec::TokenClassifier { classes } => {
            Target::Tags((0..n).map(|_| rng.random_range(0..classes)).collect())
        }
    }
}

fn is_gathered(name: &str) -> bool {
    name == "token_embedding" || name.starts_with("pos1d")
}

fn is_relative_table(name: &str) -> bool {
    name.ends_with("gap_bias") || name.ends_with("align_bias")
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (ci, case) in cases().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + ci as u64);
        let mut params = ModelParams::init(&case.config, case.head).unwrap();
        for b in 0..params.names().len() {
            if is_relative_table(&params.names()[b]) {
                params
                    .block_mut(b)
                    .mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
        }
        let docs: Vec<Document> = (0..2)
            .map(|_| {
                let n = rng.random_range(3..=10);
                random_doc(&mut rng, n)
            })
            .collect();
        let batch: Vec<Example<'_>> = docs
            .iter()
            .map(|d| Example {
                doc: d,
                order: random_order(&mut rng, d.len()),
                target: target(&mut rng, case.head, d.len()),
            })
            .collect();
        let seed = 77 + ci as u64;
        let (_, analytic) = grad(&params, &batch, true, seed).unwrap();
        let batch_loss = |p: &ModelParams| -> f64 {
            let mut total = 0.0;
            for (k, ex) in batch.iter().enumerate() {
                let s = crate::seed::derive_seed(seed, crate::seed::streams::DROPOUT, k as u64);
                total += example_loss(p, ex, true, s).unwrap();
            }
            total / batch.len() as f64
        };

        let mut coords = Vec::new();
        let mut tables = Vec::new();
        for (b, name) in params.names().iter().enumerate() {
            let g = &analytic.blocks[b];
            for ((r, c), v) in g.indexed_iter() {
                if is_relative_table(name) {
                    if *v != 0.0 {
                        tables.push((b, r, c));
                    }
                } else if !is_gathered(name) || g.row(r).iter().any(|v| *v != 0.0) {
                    coords.push((b, r, c));
                }
            }
        }
        use rand::seq::SliceRandom;
        coords.shuffle(&mut rng);
        tables.shuffle(&mut rng);
        let chosen: Vec<_> = coords
            .iter()
            .take(200)
            .chain(tables.iter().take(20))
            .copied()
            .collect();
        let mut probe = params.clone();
        for &(b, r, c) in &chosen {
            let orig = params.block(b)[[r, c]];
            probe.block_mut(b)[[r, c]] = orig + STEP;
            let up = batch_loss(&probe);
            probe.block_mut(b)[[r, c]] = orig - STEP;
            let down = batch_loss(&probe);
            probe.block_mut(b)[[r, c]] = orig;
            let fd = (up - down) / (2.0 * STEP);
            let a = analytic.blocks[b][[r, c]];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            assert!(
                rel < TOLERANCE,
                "case {ci} block {} [{r},{c}]: analytic {a:e} vs numeric {fd:e} (rel {rel:e})",
                params.names()[b]
            );
            checked += 1;
        }
    }
    assert!(checked >= 1000, "only {checked} coordinates checked");
    eprintln!("checked {checked} coordinates, worst relative error {worst:e}");
}

#[test]
fn saturated_scores_give_vanishing_gradient() {
    let config = EncoderConfig {
        hidden_dim: 4,
        vocab_buckets: 8,
        ..EncoderConfig::default()
    };
    let params = ModelParams::init(
        &config,
        HeadSpec::GlobalPointer {
            relations: 1,
            start_token: false,
        },
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels = random_grid(&mut rng, 6);
    let scores =
        ndarray::Array2::from_shape_fn(
            (6, 6),
            |(i, j)| {
                if labels.get(i, j) {
                    60.0
                } else {
                    -60.0
                }
            },
        );
    let mut tape = Tape::new(&params);
    let s = tape.input(scores);
    let out = tape.class_imbalance_loss(s, std::rc::Rc::new(labels.as_bits().to_vec()));
    assert!(tape.scalar(out) < 1e-20);
    let mut grads = params.zero_gradients();
    let d = tape.input_gradient(out, s);
    tape.backward(out, 1.0, &mut grads);
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-10, "{norm:e}");
}

#[test]
fn single_copy_without_dropout_matches_plain_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let doc = random_doc(&mut rng, 7);
    let head = HeadSpec::GlobalPointer {
        relations: 2,
        start_token: false,
    };
    let mk = |k| EncoderConfig {
        hidden_dim: 8,
        vocab_buckets: 32,
        dropout_rate: 0.0,
        multi_dropout_k: k,
        ..EncoderConfig::default()
    };
    let ex = Example {
        doc: &doc,
        order: random_order(&mut rng, 7),
        target: target(&mut rng, head, 7),
    };
    let one = ModelParams::init(&mk(1), head).unwrap();
    let four = ModelParams::init(&mk(4), head).unwrap();
    assert_eq!(one.blocks(), four.blocks());
    let (l1, g1) = grad(&one, std::slice::from_ref(&ex), true, 3).unwrap();
    let (l4, g4) = grad(&four, std::slice::from_ref(&ex), true, 3).unwrap();
    let (le, ge) = grad(&one, std::slice::from_ref(&ex), false, 3).unwrap();
    assert_eq!(l1, l4);
    assert_eq!(g1.blocks, g4.blocks);
    assert_eq!(l1, le);
    assert_eq!(g1.blocks, ge.blocks);
}
