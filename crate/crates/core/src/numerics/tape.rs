//! Dynamic reverse-mode tape over dense tensors.
//!
//! Every primitive appends one node holding its forward value and the ids
//! of its operands. Nodes are appended in evaluation order, so the node
//! vector is already topologically sorted and [`Tape::backward`] simply
//! walks it in reverse.

use super::gemm::gemm;
use super::{NumericsError, Tensor};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_COEFF: f64 = 0.044_715;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Sum(Var),
    Mean(Var),
    GatherRows { a: Var, idx: Vec<usize> },
    ScatterRows { a: Var, idx: Vec<usize> },
    ConcatRows(Vec<Var>),
    SliceCols { a: Var, start: usize },
    ConcatCols(Vec<Var>),
    CrossEntropy {
        logits: Var,
        probs: Vec<f64>,
        targets: Vec<usize>,
    },
    Patchify { image: Var, patch: usize },
    Select { a: Var, index: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that gradients flow into.
    pub fn param(&mut self, value: &Tensor) -> Var {
        self.leaf(value.clone(), true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`, if any
    /// reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    /// Clears gradients so that `backward` may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize), NumericsError> {
        let t = &self.nodes[v.0].value;
        if t.rank() != 2 {
            return Err(NumericsError::InvalidShape {
                op,
                shape: t.shape().to_vec(),
            });
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), NumericsError> {
        let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
        if sa != sb {
            return Err(NumericsError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    // ---- primitives -----------------------------------------------------

    /// `a (m x k) · b (k x n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.matmul_impl(a, b, false, "matmul")
    }

    /// `a (m x k) · bᵀ` where `b` is stored `n x k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.matmul_impl(a, b, true, "matmul_nt")
    }

    fn matmul_impl(
        &mut self,
        a: Var,
        b: Var,
        trans_b: bool,
        op: &'static str,
    ) -> Result<Var, NumericsError> {
        let (m, k) = self.matrix(a, op)?;
        let (br, bc) = self.matrix(b, op)?;
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(NumericsError::ShapeMismatch {
                op,
                lhs: vec![m, k],
                rhs: self.nodes[b.0].value.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            self.nodes[a.0].value.data(),
            false,
            self.nodes[b.0].value.data(),
            trans_b,
            0.0,
            &mut out,
        );
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::MatMul { a, b, trans_b },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape(a, b, "add")?;
        let av = &self.nodes[a.0].value;
        let data = av
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Adds a length-`cols` vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let av = &self.nodes[a.0].value;
        let rv = &self.nodes[row.0].value;
        let (_, cols) = av.rows_cols();
        if rv.len() != cols {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row",
                lhs: av.shape().to_vec(),
                rhs: rv.shape().to_vec(),
            });
        }
        let mut data = av.data().to_vec();
        for chunk in data.chunks_mut(cols) {
            for (x, b) in chunk.iter_mut().zip(rv.data()) {
                *x += b;
            }
        }
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape(a, b, "mul")?;
        let av = &self.nodes[a.0].value;
        let data = av
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let av = &self.nodes[a.0].value;
        let data = av.data().iter().map(|x| x * s).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var, NumericsError> {
        let av = &self.nodes[a.0].value;
        let (_, cols) = av.rows_cols();
        if cols == 0 {
            return Err(NumericsError::EmptyAxis { op: "softmax" });
        }
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    /// Layer normalization over the last axis followed by the affine map
    /// `gamma ⊙ x̂ + beta`.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var, NumericsError> {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = xv.rows_cols();
        if cols == 0 {
            return Err(NumericsError::EmptyAxis { op: "layer_norm" });
        }
        let (g, b) = (&self.nodes[gamma.0].value, &self.nodes[beta.0].value);
        if g.len() != cols || b.len() != cols {
            return Err(NumericsError::ShapeMismatch {
                op: "layer_norm",
                lhs: xv.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        let mut xhat = vec![0.0; rows * cols];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xv.data()[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            rstd[r] = inv;
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g.data()[c] + b.data()[c];
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let data = av.data().iter().map(|&x| gelu(x)).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Gelu(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data().iter().sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let s = av.data().iter().sum::<f64>() / av.len() as f64;
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Rows of a matrix picked by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumericsError> {
        let (rows, cols) = self.matrix(a, "gather_rows")?;
        if idx.is_empty() {
            return Err(NumericsError::EmptyAxis { op: "gather_rows" });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(NumericsError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                bound: rows,
            });
        }
        let src = self.nodes[a.0].value.data();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let out = Tensor::new(vec![idx.len(), cols], data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(
            out,
            Op::GatherRows {
                a,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// Places row `j` of `a` at row `idx[j]` of a zero `rows x cols`
    /// matrix. Indices must be distinct.
    pub fn scatter_rows(&mut self, a: Var, idx: &[usize], rows: usize) -> Result<Var, NumericsError> {
        let (arows, cols) = self.matrix(a, "scatter_rows")?;
        if arows != idx.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "scatter_rows",
                lhs: vec![arows, cols],
                rhs: vec![idx.len()],
            });
        }
        let mut seen = vec![false; rows];
        for &i in idx {
            if i >= rows {
                return Err(NumericsError::IndexOutOfRange {
                    op: "scatter_rows",
                    index: i,
                    bound: rows,
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(NumericsError::DuplicateIndex {
                    op: "scatter_rows",
                    index: i,
                });
            }
        }
        let src = self.nodes[a.0].value.data();
        let mut data = vec![0.0; rows * cols];
        for (j, &i) in idx.iter().enumerate() {
            data[i * cols..(i + 1) * cols].copy_from_slice(&src[j * cols..(j + 1) * cols]);
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(
            out,
            Op::ScatterRows {
                a,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// Stacks matrices along the row (token) axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = *parts.first().ok_or(NumericsError::EmptyAxis { op: "concat_rows" })?;
        let (_, cols) = self.matrix(first, "concat_rows")?;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.matrix(p, "concat_rows")?;
            if c != cols {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: vec![r, c],
                    rhs: vec![rows, cols],
                });
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let (rows, cols) = self.matrix(a, "slice_cols")?;
        if len == 0 || start + len > cols {
            return Err(NumericsError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: cols,
            });
        }
        let src = self.nodes[a.0].value.data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::SliceCols { a, start }, rg))
    }

    /// Joins matrices side by side along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = *parts.first().ok_or(NumericsError::EmptyAxis { op: "concat_cols" })?;
        let (rows, _) = self.matrix(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix(p, "concat_cols")?;
            if r != rows {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: vec![r, c],
                    rhs: vec![rows],
                });
            }
            widths.push(c);
        }
        let cols: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * cols];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.nodes[p.0].value.data();
            for r in 0..rows {
                data[r * cols + off..r * cols + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Mean softmax cross-entropy of each logit row against its target class.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NumericsError> {
        let (rows, classes) = self.matrix(logits, "cross_entropy")?;
        if targets.len() != rows {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy",
                lhs: vec![rows, classes],
                rhs: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(NumericsError::IndexOutOfRange {
                op: "cross_entropy",
                index: bad,
                bound: classes,
            });
        }
        let mut probs = self.nodes[logits.0].value.data().to_vec();
        let mut loss = 0.0;
        for (r, row) in probs.chunks_mut(classes).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[targets[r]];
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss / rows as f64),
            Op::CrossEntropy {
                logits,
                probs,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Splits an `H x W` or `H x W x C` image into non-overlapping
    /// `patch x patch` blocks, one flattened row per block in row-major grid
    /// order. Each row is laid out as `(py, px, channel)`.
    pub fn patchify(&mut self, image: Var, patch: usize) -> Result<Var, NumericsError> {
        let shape = self.nodes[image.0].value.shape().to_vec();
        let (h, w, c) = match shape.as_slice() {
            [h, w] => (*h, *w, 1),
            [h, w, c] => (*h, *w, *c),
            _ => return Err(NumericsError::InvalidShape { op: "patchify", shape }),
        };
        if patch == 0 || h % patch != 0 || w % patch != 0 {
            return Err(NumericsError::InvalidShape { op: "patchify", shape });
        }
        let src = self.nodes[image.0].value.data();
        let (gr, gc) = (h / patch, w / patch);
        let width = patch * patch * c;
        let mut data = vec![0.0; gr * gc * width];
        for (dst, src_idx) in data.iter_mut().zip(patch_index_map(h, w, c, patch)) {
            *dst = src[src_idx];
        }
        let out = Tensor::new(vec![gr * gc, width], data)?;
        let rg = self.any_grad(&[image]);
        Ok(self.push(out, Op::Patchify { image, patch }, rg))
    }

    /// Single element as a scalar node.
    pub fn select(&mut self, a: Var, index: usize) -> Result<Var, NumericsError> {
        let av = &self.nodes[a.0].value;
        if index >= av.len() {
            return Err(NumericsError::IndexOutOfRange {
                op: "select",
                index,
                bound: av.len(),
            });
        }
        let v = av.data()[index];
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::scalar(v), Op::Select { a, index }, rg))
    }

    // ---- reverse pass ---------------------------------------------------

    /// Back-propagates from a scalar node. Gradients are then available via
    /// [`Tape::grad`] for every node the scalar depends on that requires a
    /// gradient, including intermediate nodes.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        if self.backward_done {
            return Err(NumericsError::BackwardTwice);
        }
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(NumericsError::NotScalar {
                shape: lv.shape().to_vec(),
            });
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(NumericsError::Detached);
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            propagate(&self.nodes, &mut self.grads, i, &g);
            self.grads[i] = Some(g);
        }
        self.backward_done = true;
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Source offsets, in patch-row order, of every element produced by
/// `patchify`.
fn patch_index_map(h: usize, w: usize, c: usize, patch: usize) -> impl Iterator<Item = usize> {
    let (gr, gc) = (h / patch, w / patch);
    (0..gr).flat_map(move |pr| {
        (0..gc).flat_map(move |pc| {
            (0..patch).flat_map(move |py| {
                (0..patch).flat_map(move |px| {
                    let y = pr * patch + py;
                    let x = pc * patch + px;
                    (0..c).map(move |ch| (y * w + x) * c + ch)
                })
            })
        })
    })
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x * x)
}

/// Mutable gradient slot for `v`, created on first use. `None` when `v`
/// does not take gradients.
fn slot<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut [f64]> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let n = node.value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]).as_mut_slice())
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], i: usize, g: &[f64]) {
    let shape2 = |v: Var| {
        let s = nodes[v.0].value.shape();
        (s[0], s[1])
    };
    let value = |v: Var| nodes[v.0].value.data();
    match &nodes[i].op {
        Op::Leaf => {}
        &Op::MatMul { a, b, trans_b } => {
            let (m, k) = shape2(a);
            let n = nodes[i].value.shape()[1];
            if let Some(da) = slot(nodes, grads, a) {
                // dA = dC · op(B)ᵀ
                gemm(m, n, k, 1.0, g, false, value(b), !trans_b, 1.0, da);
            }
            if let Some(db) = slot(nodes, grads, b) {
                if trans_b {
                    // dB (n x k) = dCᵀ · A
                    gemm(n, m, k, 1.0, g, true, value(a), false, 1.0, db);
                } else {
                    // dB (k x n) = Aᵀ · dC
                    gemm(k, m, n, 1.0, value(a), true, g, false, 1.0, db);
                }
            }
        }
        &Op::Add(a, b) => {
            if let Some(da) = slot(nodes, grads, a) {
                add_into(da, g);
            }
            if let Some(db) = slot(nodes, grads, b) {
                add_into(db, g);
            }
        }
        &Op::AddRow(a, row) => {
            if let Some(da) = slot(nodes, grads, a) {
                add_into(da, g);
            }
            if let Some(dr) = slot(nodes, grads, row) {
                let cols = dr.len();
                for chunk in g.chunks(cols) {
                    add_into(dr, chunk);
                }
            }
        }
        &Op::Mul(a, b) => {
            if let Some(da) = slot(nodes, grads, a) {
                for ((d, gi), y) in da.iter_mut().zip(g).zip(value(b)) {
                    *d += gi * y;
                }
            }
            if let Some(db) = slot(nodes, grads, b) {
                for ((d, gi), x) in db.iter_mut().zip(g).zip(value(a)) {
                    *d += gi * x;
                }
            }
        }
        &Op::Scale(a, s) => {
            if let Some(da) = slot(nodes, grads, a) {
                for (d, gi) in da.iter_mut().zip(g) {
                    *d += gi * s;
                }
            }
        }
        &Op::Softmax(a) => {
            let y = &nodes[i].value;
            let cols = y.rows_cols().1;
            if let Some(da) = slot(nodes, grads, a) {
                for ((d, gr), yr) in da
                    .chunks_mut(cols)
                    .zip(g.chunks(cols))
                    .zip(y.data().chunks(cols))
                {
                    let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                    for ((dv, gv), yv) in d.iter_mut().zip(gr).zip(yr) {
                        *dv += yv * (gv - dot);
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            rstd,
        } => {
            let cols = xhat.len() / rstd.len();
            if let Some(dg) = slot(nodes, grads, *gamma) {
                for (gr, hr) in g.chunks(cols).zip(xhat.chunks(cols)) {
                    for ((d, a), b) in dg.iter_mut().zip(gr).zip(hr) {
                        *d += a * b;
                    }
                }
            }
            if let Some(db) = slot(nodes, grads, *beta) {
                for gr in g.chunks(cols) {
                    add_into(db, gr);
                }
            }
            let gv = value(*gamma);
            if let Some(dx) = slot(nodes, grads, *x) {
                let n = cols as f64;
                let mut gh = vec![0.0; cols];
                for ((dr, gr), (hr, &rs)) in dx
                    .chunks_mut(cols)
                    .zip(g.chunks(cols))
                    .zip(xhat.chunks(cols).zip(rstd.iter()))
                {
                    for c in 0..cols {
                        gh[c] = gr[c] * gv[c];
                    }
                    let sum_g: f64 = gh.iter().sum();
                    let sum_gh: f64 = gh.iter().zip(hr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        dr[c] += rs / n * (n * gh[c] - sum_g - hr[c] * sum_gh);
                    }
                }
            }
        }
        &Op::Gelu(a) => {
            if let Some(da) = slot(nodes, grads, a) {
                for ((d, gi), &x) in da.iter_mut().zip(g).zip(value(a)) {
                    *d += gi * gelu_grad(x);
                }
            }
        }
        &Op::Sum(a) => {
            if let Some(da) = slot(nodes, grads, a) {
                da.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        &Op::Mean(a) => {
            let n = nodes[a.0].value.len() as f64;
            if let Some(da) = slot(nodes, grads, a) {
                da.iter_mut().for_each(|d| *d += g[0] / n);
            }
        }
        Op::GatherRows { a, idx } => {
            let cols = nodes[i].value.shape()[1];
            if let Some(da) = slot(nodes, grads, *a) {
                for (j, &r) in idx.iter().enumerate() {
                    add_into(&mut da[r * cols..(r + 1) * cols], &g[j * cols..(j + 1) * cols]);
                }
            }
        }
        Op::ScatterRows { a, idx } => {
            let cols = nodes[i].value.shape()[1];
            if let Some(da) = slot(nodes, grads, *a) {
                for (j, &r) in idx.iter().enumerate() {
                    add_into(&mut da[j * cols..(j + 1) * cols], &g[r * cols..(r + 1) * cols]);
                }
            }
        }
        Op::ConcatRows(parts) => {
            let mut off = 0;
            for &p in parts {
                let n = nodes[p.0].value.len();
                if let Some(dp) = slot(nodes, grads, p) {
                    add_into(dp, &g[off..off + n]);
                }
                off += n;
            }
        }
        &Op::SliceCols { a, start } => {
            let (rows, len) = shape2(Var(i));
            let cols = nodes[a.0].value.shape()[1];
            if let Some(da) = slot(nodes, grads, a) {
                for r in 0..rows {
                    add_into(
                        &mut da[r * cols + start..r * cols + start + len],
                        &g[r * len..(r + 1) * len],
                    );
                }
            }
        }
        Op::ConcatCols(parts) => {
            let (rows, cols) = shape2(Var(i));
            let mut off = 0;
            for &p in parts {
                let w = nodes[p.0].value.shape()[1];
                if let Some(dp) = slot(nodes, grads, p) {
                    for r in 0..rows {
                        add_into(
                            &mut dp[r * w..(r + 1) * w],
                            &g[r * cols + off..r * cols + off + w],
                        );
                    }
                }
                off += w;
            }
        }
        Op::CrossEntropy {
            logits,
            probs,
            targets,
        } => {
            let rows = targets.len();
            let classes = probs.len() / rows;
            let s = g[0] / rows as f64;
            if let Some(dl) = slot(nodes, grads, *logits) {
                for (r, &t) in targets.iter().enumerate() {
                    for c in 0..classes {
                        let onehot = if c == t { 1.0 } else { 0.0 };
                        dl[r * classes + c] += s * (probs[r * classes + c] - onehot);
                    }
                }
            }
        }
        &Op::Patchify { image, patch } => {
            let shape = nodes[image.0].value.shape();
            let (h, w) = (shape[0], shape[1]);
            let c = shape.get(2).copied().unwrap_or(1);
            if let Some(di) = slot(nodes, grads, image) {
                for (gi, src_idx) in g.iter().zip(patch_index_map(h, w, c, patch)) {
                    di[src_idx] += gi;
                }
            }
        }
        &Op::Select { a, index } => {
            if let Some(da) = slot(nodes, grads, a) {
                da[index] += g[0];
            }
        }
    }
}
