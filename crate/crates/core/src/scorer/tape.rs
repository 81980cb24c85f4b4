//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! referenced by block id and never copied for gathers, so large embedding
//! tables only receive sparse row updates during the backward sweep.

use std::rc::Rc;

use ndarray::{Array2, Axis};

use super::params::{Gradients, ModelParams};

pub type Var = usize;

enum Op {
    Input,
    Param(usize),
    GatherParam {
        block: usize,
        rows: Vec<usize>,
    },
    GatherScalars {
        block: usize,
        index: Rc<Vec<usize>>,
    },
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    SoftmaxRows(Var),
    MulConst(Var, Rc<Array2<f64>>),
    ConcatRows(Var, Var),
    Sum(Vec<Var>),
    ClassImbalanceLoss {
        scores: Var,
        labels: Rc<Vec<bool>>,
    },
    CrossEntropy {
        logits: Var,
        targets: Rc<Vec<usize>>,
    },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ModelParams,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v].value[[0, 0]]
    }

    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, block: usize) -> Var {
        let value = self.params.block(block).clone();
        self.push(value, Op::Param(block))
    }

    pub fn gather(&mut self, block: usize, rows: Vec<usize>) -> Var {
        let table = self.params.block(block);
        let value = table.select(Axis(0), &rows);
        self.push(value, Op::GatherParam { block, rows })
    }

    /// An `rows × cols` matrix of single entries of a parameter block, read
    /// through flat row-major indices.
    pub fn gather_scalars(
        &mut self,
        block: usize,
        index: Rc<Vec<usize>>,
        rows: usize,
        cols: usize,
    ) -> Var {
        let table = self.params.block(block);
        let flat = table.as_slice().expect("standard layout");
        let value = Array2::from_shape_fn((rows, cols), |(i, j)| flat[index[i * cols + j]]);
        self.push(value, Op::GatherScalars { block, index })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// Adds the `1 × d` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + &self.value(b).row(0);
        self.push(value, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a) * s;
        self.push(value, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row /= z;
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn mul_const(&mut self, a: Var, c: Rc<Array2<f64>>) -> Var {
        let value = self.value(a) * &*c;
        self.push(value, Op::MulConst(a, c))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let value = ndarray::concatenate(Axis(0), &[self.value(a).view(), self.value(b).view()])
            .expect("column counts agree");
        self.push(value, Op::ConcatRows(a, b))
    }

    pub fn sum(&mut self, terms: Vec<Var>) -> Var {
        let mut value = self.value(terms[0]).clone();
        for &t in &terms[1..] {
            value += self.value(t);
        }
        self.push(value, Op::Sum(terms))
    }

    /// `log(1 + Σ_neg e^s) + log(1 + Σ_pos e^{-s})` over a score matrix.
    pub fn class_imbalance_loss(&mut self, scores: Var, labels: Rc<Vec<bool>>) -> Var {
        let s = self.value(scores);
        let v = class_imbalance_loss(s.as_slice().expect("standard layout"), &labels);
        self.push(
            Array2::from_elem((1, 1), v),
            Op::ClassImbalanceLoss { scores, labels },
        )
    }

    /// Mean token-level softmax cross-entropy.
    pub fn cross_entropy(&mut self, logits: Var, targets: Rc<Vec<usize>>) -> Var {
        let l = self.value(logits);
        let mut total = 0.0;
        for (row, &t) in l.rows().into_iter().zip(targets.iter()) {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let v = total / targets.len().max(1) as f64;
        self.push(
            Array2::from_elem((1, 1), v),
            Op::CrossEntropy { logits, targets },
        )
    }

    /// Accumulates `scale · ∂out/∂θ` into `grads`.
    pub fn backward(&self, out: Var, scale: f64, grads: &mut Gradients) {
        self.sweep(out, scale, grads, None);
    }

    /// `∂out/∂v` for an intermediate variable `v`.
    #[cfg(test)]
    pub fn input_gradient(&self, out: Var, v: Var) -> Array2<f64> {
        let mut scratch = self.params.zero_gradients();
        self.sweep(out, 1.0, &mut scratch, Some(v))
            .unwrap_or_else(|| Array2::zeros(self.value(v).dim()))
    }

    fn sweep(
        &self,
        out: Var,
        scale: f64,
        grads: &mut Gradients,
        want: Option<Var>,
    ) -> Option<Array2<f64>> {
        let mut wanted = None;
        let mut adj: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[out] = Some(Array2::from_elem(self.nodes[out].value.dim(), scale));

        fn acc(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
            match slot {
                Some(x) => *x += &g,
                None => *slot = Some(g),
            }
        }

        for v in (0..=out).rev() {
            let Some(g) = adj[v].take() else { continue };
            if want == Some(v) {
                wanted = Some(g.clone());
            }
            match &self.nodes[v].op {
                Op::Input => {}
                Op::Param(b) => *grads.block_mut(*b) += &g,
                Op::GatherParam { block, rows } => {
                    let dst = grads.block_mut(*block);
                    for (r, &row) in rows.iter().enumerate() {
                        let mut d = dst.row_mut(row);
                        d += &g.row(r);
                    }
                }
                Op::GatherScalars { block, index } => {
                    let dst = grads.block_mut(*block);
                    let flat = dst.as_slice_mut().expect("standard layout");
                    for (k, v) in g.iter().enumerate() {
                        flat[index[k]] += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    acc(&mut adj[*a], da);
                    acc(&mut adj[*b], db);
                }
                Op::MatMulT(a, b) => {
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    acc(&mut adj[*a], da);
                    acc(&mut adj[*b], db);
                }
                Op::Add(a, b) => {
                    acc(&mut adj[*a], g.clone());
                    acc(&mut adj[*b], g);
                }
                Op::AddRow(a, b) => {
                    let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut adj[*b], db);
                    acc(&mut adj[*a], g);
                }
                Op::Scale(a, s) => acc(&mut adj[*a], g * *s),
                Op::Tanh(a) => {
                    let y = &self.nodes[v].value;
                    let mut da = g;
                    da.zip_mut_with(y, |d, &y| *d *= 1.0 - y * y);
                    acc(&mut adj[*a], da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[v].value;
                    let mut da = &g * y;
                    for (mut row, yrow) in da.rows_mut().into_iter().zip(y.rows()) {
                        let dot = row.sum();
                        row.zip_mut_with(&yrow, |d, &y| *d -= dot * y);
                    }
                    acc(&mut adj[*a], da);
                }
                Op::MulConst(a, c) => acc(&mut adj[*a], g * &**c),
                Op::ConcatRows(a, b) => {
                    let na = self.value(*a).nrows();
                    let (ga, gb) = g.view().split_at(Axis(0), na);
                    acc(&mut adj[*a], ga.to_owned());
                    acc(&mut adj[*b], gb.to_owned());
                }
                Op::Sum(terms) => {
                    for &t in terms {
                        acc(&mut adj[t], g.clone());
                    }
                }
                Op::ClassImbalanceLoss { scores, labels } => {
                    let s = self.value(*scores);
                    let mut ds = class_imbalance_loss_grad(s.as_slice().unwrap(), labels);
                    ds.iter_mut().for_each(|x| *x *= g[[0, 0]]);
                    let ds = Array2::from_shape_vec(s.dim(), ds).unwrap();
                    acc(&mut adj[*scores], ds);
                }
                Op::CrossEntropy { logits, targets } => {
                    let l = self.value(*logits);
                    let w = g[[0, 0]] / targets.len().max(1) as f64;
                    let mut dl = l.clone();
                    for (mut row, &t) in dl.rows_mut().into_iter().zip(targets.iter()) {
                        let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                        row.mapv_inplace(|x| (x - m).exp());
                        let z = row.sum();
                        row.mapv_inplace(|x| x / z);
                        row[t] -= 1.0;
                        row *= w;
                    }
                    acc(&mut adj[*logits], dl);
                }
            }
        }
        wanted
    }
}

/// `log(1 + Σ exp(x))`, stable for large and small inputs.
fn log1p_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(0.0_f64, f64::max);
    let z = (-m).exp() + xs.map(|x| (x - m).exp()).sum::<f64>();
    m + z.ln()
}

/// `log(1 + Σ_{neg} e^{s}) + log(1 + Σ_{pos} e^{-s})` over paired scores and
/// labels.
pub fn class_imbalance_loss(scores: &[f64], labels: &[bool]) -> f64 {
    let neg = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s);
    let pos = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| -s);
    log1p_sum_exp(neg) + log1p_sum_exp(pos)
}

fn class_imbalance_loss_grad(scores: &[f64], labels: &[bool]) -> Vec<f64> {
    // Each half is a softmax over its terms plus an implicit zero logit.
    let half = |sign: f64, want: bool| {
        let m = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == want)
            .fold(0.0_f64, |m, (&s, _)| m.max(sign * s));
        let z = (-m).exp()
            + scores
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == want)
                .map(|(&s, _)| (sign * s - m).exp())
                .sum::<f64>();
        (m, z)
    };
    let (mn, zn) = half(1.0, false);
    let (mp, zp) = half(-1.0, true);
    scores
        .iter()
        .zip(labels)
        .map(|(&s, &l)| {
            if l {
                -((-s - mp).exp() / zp)
            } else {
                (s - mn).exp() / zn
            }
        })
        .collect()
}
