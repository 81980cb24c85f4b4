use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{EncoderConfig, Position1d, MAX_SEQUENCE};
use super::features::{FEATURE_DIM_2D, OFFSET_BUCKETS};
use crate::error::{Error, Result};

/// What sits on top of the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadSpec {
    /// One query/key projection pair per relation type. With `start_token`
    /// a learned auxiliary node is prepended to the scored sequence.
    GlobalPointer {
        relations: usize,
        start_token: bool,
    },
    TokenClassifier {
        classes: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct Layout {
    pub token: usize,
    pub pos2d_weight: usize,
    pub pos2d_bias: usize,
    pub pos1d: Option<usize>,
    pub pos1d_word: Option<usize>,
    /// `[query, key, value, output]`
    pub attention: Vec<[usize; 4]>,
    /// `[gap table, alignment table]` per attention layer.
    pub attention_bias: Vec<Option<[usize; 2]>>,
    /// `[w1, b1, w2, b2]`
    pub mlp: Vec<[usize; 4]>,
    /// `[wq, bq, wk, bk]`
    pub relations: Vec<[usize; 4]>,
    pub start: Option<usize>,
    /// `[weight, bias]`
    pub classifier: Option<[usize; 2]>,
}

/// All trainable weights as named, row-major blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: EncoderConfig,
    pub head: HeadSpec,
    names: Vec<String>,
    blocks: Vec<Array2<f64>>,
    pub(crate) layout: Layout,
}

fn block_shapes(config: &EncoderConfig, head: &HeadSpec) -> Vec<(String, (usize, usize))> {
    let d = config.hidden_dim;
    let mut v = vec![
        ("token_embedding".to_owned(), (config.vocab_buckets, d)),
        ("pos2d.weight".to_owned(), (FEATURE_DIM_2D, d)),
        ("pos2d.bias".to_owned(), (1, d)),
    ];
    match config.use_1d_position {
        Position1d::None => {}
        Position1d::Global => v.push(("pos1d".to_owned(), (MAX_SEQUENCE + 1, d))),
        Position1d::Local => {
            v.push(("pos1d.segment".to_owned(), (MAX_SEQUENCE + 1, d)));
            v.push(("pos1d.word".to_owned(), (MAX_SEQUENCE + 1, d)));
        }
    }
    for l in 0..config.attention_layers {
        for p in ["query", "key", "value", "output"] {
            v.push((format!("attention.{l}.{p}"), (d, d)));
        }
        if config.relative_2d_bias {
            for p in ["gap_bias", "align_bias"] {
                v.push((
                    format!("attention.{l}.{p}"),
                    (OFFSET_BUCKETS, OFFSET_BUCKETS),
                ));
            }
        }
    }
    for l in 0..config.mlp_layers {
        v.push((format!("mlp.{l}.w1"), (d, d)));
        v.push((format!("mlp.{l}.b1"), (1, d)));
        v.push((format!("mlp.{l}.w2"), (d, d)));
        v.push((format!("mlp.{l}.b2"), (1, d)));
    }
    match *head {
        HeadSpec::GlobalPointer {
            relations,
            start_token,
        } => {
            for r in 0..relations {
                v.push((format!("head.{r}.query.weight"), (d, d)));
                v.push((format!("head.{r}.query.bias"), (1, d)));
                v.push((format!("head.{r}.key.weight"), (d, d)));
                v.push((format!("head.{r}.key.bias"), (1, d)));
            }
            if start_token {
                v.push(("head.start".to_owned(), (1, d)));
            }
        }
        HeadSpec::TokenClassifier { classes } => {
            v.push(("classifier.weight".to_owned(), (d, classes)));
            v.push(("classifier.bias".to_owned(), (1, classes)));
        }
    }
    v
}

fn layout_from_names(names: &[String]) -> Result<Layout> {
    let find = |n: &str| names.iter().position(|x| x == n);
    let need = |n: &str| find(n).ok_or_else(|| Error::Checkpoint(format!("missing block `{n}`")));
    let count = |prefix: &str| {
        (0..)
            .take_while(|l| {
                names
                    .iter()
                    .any(|x| x.starts_with(&format!("{prefix}.{l}.")))
            })
            .count()
    };
    let mut layout = Layout {
        token: need("token_embedding")?,
        pos2d_weight: need("pos2d.weight")?,
        pos2d_bias: need("pos2d.bias")?,
        pos1d: find("pos1d").or(find("pos1d.segment")),
        pos1d_word: find("pos1d.word"),
        start: find("head.start"),
        ..Default::default()
    };
    for l in 0..count("attention") {
        layout.attention.push([
            need(&format!("attention.{l}.query"))?,
            need(&format!("attention.{l}.key"))?,
            need(&format!("attention.{l}.value"))?,
            need(&format!("attention.{l}.output"))?,
        ]);
        layout.attention_bias.push(
            find(&format!("attention.{l}.gap_bias"))
                .zip(find(&format!("attention.{l}.align_bias")))
                .map(|(g, a)| [g, a]),
        );
    }
    for l in 0..count("mlp") {
        layout.mlp.push([
            need(&format!("mlp.{l}.w1"))?,
            need(&format!("mlp.{l}.b1"))?,
            need(&format!("mlp.{l}.w2"))?,
            need(&format!("mlp.{l}.b2"))?,
        ]);
    }
    for r in 0..count("head") {
        layout.relations.push([
            need(&format!("head.{r}.query.weight"))?,
            need(&format!("head.{r}.query.bias"))?,
            need(&format!("head.{r}.key.weight"))?,
            need(&format!("head.{r}.key.bias"))?,
        ]);
    }
    if let (Some(w), Some(b)) = (find("classifier.weight"), find("classifier.bias")) {
        layout.classifier = Some([w, b]);
    }
    Ok(layout)
}

impl ModelParams {
    /// Random initialization, fully determined by `config.seed`.
    pub fn init(config: &EncoderConfig, head: HeadSpec) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.hidden_dim;
        let shapes = block_shapes(config, &head);
        let mut names = Vec::with_capacity(shapes.len());
        let mut blocks = Vec::with_capacity(shapes.len());
        for (name, (r, c)) in shapes {
            let std = if name.ends_with("bias") || name.contains(".b1") || name.contains(".b2") {
                0.0
            } else if name == "token_embedding" || name.starts_with("pos1d") || name == "head.start"
            {
                0.1
            } else if name.ends_with(".output") || name.ends_with(".w2") {
                // Residual branches start close to the identity.
                0.1 / (r as f64).sqrt()
            } else {
                1.0 / (r as f64).sqrt()
            };
            let block = if std == 0.0 {
                Array2::zeros((r, c))
            } else {
                let normal = Normal::new(0.0, std).expect("positive deviation");
                Array2::from_shape_simple_fn((r, c), || normal.sample(&mut rng))
            };
            if name.starts_with("pos1d") {
                blocks.push(block + &sinusoid_table(r, d));
            } else {
                blocks.push(block);
            }
            names.push(name);
        }
        let layout = layout_from_names(&names)?;
        Ok(Self {
            config: config.clone(),
            head,
            names,
            blocks,
            layout,
        })
    }

    /// Rebuilds parameters from named blocks, checking every shape.
    pub fn from_blocks(
        config: EncoderConfig,
        head: HeadSpec,
        named: Vec<(String, Array2<f64>)>,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = block_shapes(&config, &head);
        if shapes.len() != named.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} blocks, found {}",
                shapes.len(),
                named.len()
            )));
        }
        for ((name, shape), (got_name, block)) in shapes.iter().zip(&named) {
            if name != got_name || *shape != block.dim() {
                return Err(Error::Checkpoint(format!(
                    "block `{got_name}` {:?} does not match `{name}` {shape:?}",
                    block.dim()
                )));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("block `{name}` is not finite")));
            }
        }
        let (names, blocks): (Vec<_>, Vec<_>) = named.into_iter().unzip();
        let layout = layout_from_names(&names)?;
        Ok(Self {
            config,
            head,
            names,
            blocks,
            layout,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn blocks(&self) -> &[Array2<f64>] {
        &self.blocks
    }

    pub fn block(&self, id: usize) -> &Array2<f64> {
        &self.blocks[id]
    }

    pub fn block_mut(&mut self, id: usize) -> &mut Array2<f64> {
        &mut self.blocks[id]
    }

    pub fn block_by_name(&self, name: &str) -> Option<&Array2<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.blocks[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().map(Array2::len).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            blocks: self.blocks.iter().map(|b| Array2::zeros(b.dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Sinusoidal position table used to seed learned 1D embeddings, so relative
/// offsets are linearly accessible from the start.
fn sinusoid_table(rows: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, d), |(p, k)| {
        let freq = 1.0 / 10000f64.powf((k / 2 * 2) as f64 / d as f64);
        let a = p as f64 * freq;
        0.5 * if k % 2 == 0 { a.sin() } else { a.cos() }
    })
}

/// Gradient blocks aligned with [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Array2<f64>>,
}

impl Gradients {
    pub fn block_mut(&mut self, id: usize) -> &mut Array2<f64> {
        &mut self.blocks[id]
    }

    pub fn scale(&mut self, s: f64) {
        for b in &mut self.blocks {
            *b *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// First block holding a non-finite entry.
    pub fn first_non_finite<'a>(&self, params: &'a ModelParams) -> Option<&'a str> {
        self.blocks
            .iter()
            .position(|b| b.iter().any(|v| !v.is_finite()))
            .map(|i| params.names()[i].as_str())
    }
}
