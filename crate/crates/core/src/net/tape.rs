//! Matrix-level reverse-mode differentiation.
//!
//! Every node holds a 2-D array. Rows are batch items. Nodes are appended in
//! evaluation order, so the tape is already topologically sorted and the
//! backward pass is a single reverse sweep.

use ndarray::{Array2, Axis};

use super::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    /// Adds a `1 × m` row to every row.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Activate(Var, Activation),
    /// Concatenates table rows: row `i` of the output is
    /// `table[ids[i][0]] ++ table[ids[i][1]] ++ ...`.
    Gather(Var, Vec<Vec<usize>>),
    /// Mean softmax cross-entropy against class indices, as a `1 × 1` node.
    SoftmaxCe(Var, Vec<usize>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// A recorded computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar node with respect to every node that needs one.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads[v.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A trainable input.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMulT(a, b), ng)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "add_row expects a single row");
        let v = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(v, Op::AddRow(a, row), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        let v = self.value(a).mapv(|x| act.apply(x));
        let ng = self.ng(a);
        self.push(v, Op::Activate(a, act), ng)
    }

    pub fn gather(&mut self, table: Var, ids: Vec<Vec<usize>>) -> Var {
        let t = self.value(table);
        let d = t.ncols();
        let width = ids.first().map_or(0, Vec::len) * d;
        let mut out = Array2::zeros((ids.len(), width));
        for (i, row) in ids.iter().enumerate() {
            assert_eq!(row.len() * d, width, "ragged token sequences");
            for (p, &id) in row.iter().enumerate() {
                out.row_mut(i)
                    .slice_mut(ndarray::s![p * d..(p + 1) * d])
                    .assign(&t.row(id));
            }
        }
        let ng = self.ng(table);
        self.push(out, Op::Gather(table, ids), ng)
    }

    pub fn softmax_ce(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let l = self.value(logits);
        assert_eq!(l.nrows(), targets.len(), "one target per row");
        let mut total = 0.0;
        for (row, &t) in l.rows().into_iter().zip(&targets) {
            total += log_sum_exp(row.iter().copied()) - row[t];
        }
        let v = Array2::from_elem((1, 1), total / targets.len().max(1) as f64);
        let ng = self.ng(logits);
        self.push(v, Op::SoftmaxCe(logits, targets), ng)
    }

    /// Reverse sweep from `out`, seeded with ones.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Array2::ones(self.value(out).raw_dim()));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let acc = |v: Var, d: Array2<f64>, grads: &mut Vec<Option<Array2<f64>>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => *existing += &d,
                    slot => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => grads[i] = Some(g),
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        acc(*a, g.dot(&self.value(*b).t()), &mut grads);
                    }
                    if self.ng(*b) {
                        acc(*b, self.value(*a).t().dot(&g), &mut grads);
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.ng(*a) {
                        acc(*a, g.dot(self.value(*b)), &mut grads);
                    }
                    if self.ng(*b) {
                        acc(*b, g.t().dot(self.value(*a)), &mut grads);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.ng(*row) {
                        acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    }
                    acc(*a, g, &mut grads);
                }
                Op::Add(a, b) => {
                    if self.ng(*b) {
                        acc(*b, g.clone(), &mut grads);
                    }
                    acc(*a, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    if self.ng(*b) {
                        acc(*b, -&g, &mut grads);
                    }
                    acc(*a, g, &mut grads);
                }
                Op::Activate(a, act) => {
                    let x = self.value(*a);
                    let mut d = g;
                    d.zip_mut_with(x, |gi, &xi| *gi *= act.derivative(xi));
                    acc(*a, d, &mut grads);
                }
                Op::Gather(table, ids) => {
                    let t = self.value(*table);
                    let dim = t.ncols();
                    let mut d = Array2::zeros(t.raw_dim());
                    for (r, row) in ids.iter().enumerate() {
                        for (p, &id) in row.iter().enumerate() {
                            let mut dst = d.row_mut(id);
                            dst += &g.row(r).slice(ndarray::s![p * dim..(p + 1) * dim]);
                        }
                    }
                    acc(*table, d, &mut grads);
                }
                Op::SoftmaxCe(logits, targets) => {
                    let scale = g[[0, 0]] / targets.len().max(1) as f64;
                    let mut d = softmax_rows(self.value(*logits));
                    for (r, &t) in targets.iter().enumerate() {
                        d[[r, t]] -= 1.0;
                    }
                    d *= scale;
                    acc(*logits, d, &mut grads);
                }
            }
        }
        Gradients { grads }
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax_rows(l: &Array2<f64>) -> Array2<f64> {
    let mut out = l.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Mean softmax cross-entropy without recording anything.
pub fn cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(targets)
        .map(|(row, &t)| log_sum_exp(row.iter().copied()) - row[t])
        .sum();
    total / targets.len().max(1) as f64
}
