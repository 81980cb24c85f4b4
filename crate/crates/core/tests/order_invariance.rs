use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpp_core::scorer::{head_spec, score_document, Position1d};
use tpp_core::{
    gen_corpus, predict_entities, DecodeConfig, EncoderConfig, GenConfig, HeadKind, InputOrder,
    ModelParams, Task,
};

fn disordered(seed: u64) -> GenConfig {
    GenConfig {
        doc_count: 4,
        words_per_doc: (4, 24),
        multi_row_prob: 0.5,
        multi_column_prob: 0.5,
        long_entity_prob: 0.5,
        interleave_prob: 0.5,
        seed,
        ..GenConfig::default()
    }
}

fn model(task: Task, use_1d: Position1d, seed: u64) -> ModelParams {
    let cfg = EncoderConfig {
        hidden_dim: 16,
        vocab_buckets: 128,
        use_1d_position: use_1d,
        attention_layers: 2,
        seed,
        ..EncoderConfig::default()
    };
    let mut p = ModelParams::init(&cfg, head_spec(task, HeadKind::Tpp, 3).unwrap()).unwrap();
    // Non-zero attention bias tables.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for b in 0..p.names().len() {
        p.block_mut(b)
            .mapv_inplace(|v| v + 0.1 * (rand::Rng::random::<f64>(&mut rng) - 0.5));
    }
    p
}

fn permutation(n: usize, seed: u64) -> InputOrder {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    InputOrder::new(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pointer_scores_ignore_input_order(seed in 0u64..1000, a in any::<u64>(), b in any::<u64>()) {
        let corpus = gen_corpus(&disordered(seed)).unwrap();
        for task in [Task::Ner, Task::El] {
            let params = model(task, Position1d::None, seed);
            for doc in &corpus.documents {
                let x = score_document(doc, &permutation(doc.len(), a), &params).unwrap();
                let y = score_document(doc, &permutation(doc.len(), b), &params).unwrap();
                for (gx, gy) in x.grids.iter().zip(&y.grids) {
                    let diff = (gx - gy).mapv(f64::abs).fold(0.0_f64, |m, v| m.max(*v));
                    prop_assert!(diff < 1e-9, "max difference {diff}");
                }
            }
        }
    }

    #[test]
    fn predicted_entities_ignore_input_order(seed in 0u64..1000, a in any::<u64>()) {
        let corpus = gen_corpus(&disordered(seed)).unwrap();
        let params = model(Task::Ner, Position1d::None, seed);
        let cfg = DecodeConfig::default();
        for doc in &corpus.documents {
            let ocr = InputOrder::identity(doc.len());
            let x = predict_entities(doc, &ocr, &params, &cfg).unwrap();
            let y = predict_entities(doc, &permutation(doc.len(), a), &params, &cfg).unwrap();
            prop_assert_eq!(
                x.iter().map(|s| &s.entity).collect::<Vec<_>>(),
                y.iter().map(|s| &s.entity).collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn one_dimensional_positions_make_scores_order_dependent() {
    let corpus = gen_corpus(&disordered(3)).unwrap();
    let doc = corpus.documents.iter().find(|d| d.len() > 4).unwrap();
    let params = model(Task::Ner, Position1d::Global, 3);
    let x = score_document(doc, &InputOrder::identity(doc.len()), &params).unwrap();
    let y = score_document(doc, &permutation(doc.len(), 9), &params).unwrap();
    assert_ne!(x, y);
}
