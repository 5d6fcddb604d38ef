//! Reverse-mode automatic differentiation over a per-forward-pass graph.
//!
//! A [`Graph`] records each operation as it executes. Node indices are
//! assigned in execution order, so walking them backwards is a valid reverse
//! topological order and every node is visited exactly once. The graph is
//! consumed by [`Graph::backward`].

use std::rc::Rc;

use crate::tensor::{kernels, Result, Scalar, Tensor, TensorError};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Silu(Var),
    Sum(Var),
    RmsNorm {
        x: Var,
        gain: Var,
        inv_rms: Vec<F>,
    },
    Rope {
        x: Var,
        head_dim: usize,
        cos: Rc<Vec<F>>,
        sin: Rc<Vec<F>>,
    },
    GatherRows {
        src: Var,
        rows: Vec<usize>,
    },
    MeanRows {
        src: Var,
        rows: Vec<usize>,
    },
    SliceCols {
        src: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MaskedSoftmax(Var),
    L2NormalizeRows {
        x: Var,
        norms: Vec<F>,
    },
    CrossEntropy {
        logits: Var,
        pairs: Vec<(usize, usize)>,
        probs: Vec<F>,
    },
}

struct Node<F> {
    value: Vec<F>,
    shape: Vec<usize>,
    op: Op<F>,
    needs_grad: bool,
}

/// Recording of one forward pass.
pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<F>, shape: Vec<usize>, op: Op<F>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            shape,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Gradients flow to it when `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: &Tensor<F>) -> Var {
        self.nodes.push(Node {
            value: tensor.data().to_vec(),
            shape: tensor.shape().to_vec(),
            op: Op::Leaf,
            needs_grad: tensor.requires_grad(),
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, shape: impl Into<Vec<usize>>, data: Vec<F>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<F> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("recorded shapes are consistent")
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v.0].value[0]
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        match self.nodes[v.0].shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(TensorError::Invalid(format!(
                "expected a matrix, got shape {other:?}"
            ))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return Err(shape_err("matmul", self.shape(a), self.shape(b)));
        }
        let out = kernels::matmul(self.value(a), self.value(b), m, k, n);
        Ok(self.push(out, vec![m, n], Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (n, k2) = self.dims2(b)?;
        if k != k2 {
            return Err(shape_err("matmul_bt", self.shape(a), self.shape(b)));
        }
        let out = kernels::matmul_bt(self.value(a), self.value(b), m, k, n);
        Ok(self.push(out, vec![m, n], Op::MatMulBt(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("mul", self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = F::of(c);
        let out = self.value(a).iter().map(|&x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::Scale(a, c), &[a])
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .iter()
            .map(|&x| x / (F::one() + (-x).exp()))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::Silu(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum::<F>();
        self.push(vec![s], vec![1], Op::Sum(a), &[a])
    }

    /// Row-wise RMS normalisation of a matrix.
    pub fn rmsnorm(&mut self, x: Var, gain: Var, eps: f64) -> Result<Var> {
        let (_, cols) = self.dims2(x)?;
        if self.value(gain).len() != cols {
            return Err(shape_err("rmsnorm", self.shape(x), self.shape(gain)));
        }
        let (out, inv_rms) = kernels::rmsnorm(self.value(x), self.value(gain), cols, eps);
        let shape = self.shape(x).to_vec();
        Ok(self.push(out, shape, Op::RmsNorm { x, gain, inv_rms }, &[x, gain]))
    }

    /// Rotary position embedding over `[T, heads·head_dim]`, rotating the
    /// two halves of every head. `cos`/`sin` are `[T, head_dim/2]` tables.
    pub fn rope(
        &mut self,
        x: Var,
        head_dim: usize,
        cos: Rc<Vec<F>>,
        sin: Rc<Vec<F>>,
    ) -> Result<Var> {
        let (t, cols) = self.dims2(x)?;
        let half = head_dim / 2;
        if head_dim % 2 != 0 || cols % head_dim != 0 || cos.len() < t * half || sin.len() < t * half
        {
            return Err(TensorError::Invalid(format!(
                "rope: cannot rotate shape {:?} with head_dim {head_dim}",
                self.shape(x)
            )));
        }
        let src = self.value(x);
        let mut out = vec![F::zero(); src.len()];
        for p in 0..t {
            for h in 0..cols / head_dim {
                let base = p * cols + h * head_dim;
                for i in 0..half {
                    let (c, s) = (cos[p * half + i], sin[p * half + i]);
                    let (x1, x2) = (src[base + i], src[base + half + i]);
                    out[base + i] = x1 * c - x2 * s;
                    out[base + half + i] = x1 * s + x2 * c;
                }
            }
        }
        Ok(self.push(
            out,
            vec![t, cols],
            Op::Rope {
                x,
                head_dim,
                cos,
                sin,
            },
            &[x],
        ))
    }

    /// Selects rows of a matrix (also serves as the embedding lookup).
    pub fn gather_rows(&mut self, src: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.dims2(src)?;
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            if i >= r {
                return Err(TensorError::Index {
                    op: "gather_rows",
                    index: i,
                    bound: r,
                });
            }
            out.extend_from_slice(&self.value(src)[i * c..(i + 1) * c]);
        }
        Ok(self.push(
            out,
            vec![rows.len(), c],
            Op::GatherRows {
                src,
                rows: rows.to_vec(),
            },
            &[src],
        ))
    }

    /// Mean of the selected rows, shape `[1, C]`.
    pub fn mean_rows(&mut self, src: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.dims2(src)?;
        if rows.is_empty() {
            return Err(TensorError::Invalid("mean_rows: no rows selected".into()));
        }
        let mut out = vec![F::zero(); c];
        for &i in rows {
            if i >= r {
                return Err(TensorError::Index {
                    op: "mean_rows",
                    index: i,
                    bound: r,
                });
            }
            for (o, &v) in out.iter_mut().zip(&self.value(src)[i * c..(i + 1) * c]) {
                *o = *o + v;
            }
        }
        let n = F::of(rows.len() as f64);
        out.iter_mut().for_each(|v| *v = *v / n);
        Ok(self.push(
            out,
            vec![1, c],
            Op::MeanRows {
                src,
                rows: rows.to_vec(),
            },
            &[src],
        ))
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2(src)?;
        if start + len > c {
            return Err(TensorError::Index {
                op: "slice_cols",
                index: start + len,
                bound: c,
            });
        }
        let v = self.value(src);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&v[i * c + start..i * c + start + len]);
        }
        Ok(self.push(out, vec![r, len], Op::SliceCols { src, start }, &[src]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::Invalid("concat_cols: nothing to concatenate".into()))?;
        let (r, _) = self.dims2(first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.dims2(p)?;
            if pr != r {
                return Err(shape_err("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(out, vec![r, total], Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::Invalid("concat_rows: nothing to concatenate".into()))?;
        let (_, c) = self.dims2(first)?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = self.dims2(p)?;
            if pc != c {
                return Err(shape_err("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += pr;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(out, vec![rows, c], Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Row-wise softmax where `allow[i*C + j] == false` forces probability 0.
    pub fn masked_softmax(&mut self, x: Var, allow: Option<&[bool]>) -> Result<Var> {
        let (r, c) = self.dims2(x)?;
        if let Some(a) = allow {
            if a.len() != r * c {
                return Err(shape_err("masked_softmax", self.shape(x), &[a.len()]));
            }
        }
        let mut out = self.value(x).to_vec();
        for i in 0..r {
            let mask = allow.map(|a| &a[i * c..(i + 1) * c]);
            kernels::softmax_in_place(&mut out[i * c..(i + 1) * c], mask);
        }
        Ok(self.push(out, vec![r, c], Op::MaskedSoftmax(x), &[x]))
    }

    /// Scales every row to unit L2 norm. A zero row is an error.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x)?;
        let v = self.value(x);
        let mut out = Vec::with_capacity(r * c);
        let mut norms = Vec::with_capacity(r);
        for i in 0..r {
            let row = &v[i * c..(i + 1) * c];
            let n = row.iter().map(|&a| a * a).sum::<F>().sqrt();
            if n == F::zero() || !n.is_finite() {
                return Err(TensorError::Invalid(format!(
                    "l2_normalize_rows: row {i} has norm {n}"
                )));
            }
            norms.push(n);
            out.extend(row.iter().map(|&a| a / n));
        }
        Ok(self.push(out, vec![r, c], Op::L2NormalizeRows { x, norms }, &[x]))
    }

    /// `Σ −log softmax(logits[row])[target]` over `(row, target)` pairs.
    /// `allow` optionally excludes logits from each row's normaliser.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        pairs: &[(usize, usize)],
        allow: Option<&[bool]>,
    ) -> Result<Var> {
        let (r, c) = self.dims2(logits)?;
        for &(row, target) in pairs {
            if row >= r {
                return Err(TensorError::Index {
                    op: "cross_entropy",
                    index: row,
                    bound: r,
                });
            }
            if target >= c {
                return Err(TensorError::Index {
                    op: "cross_entropy",
                    index: target,
                    bound: c,
                });
            }
            if allow.is_some_and(|a| !a[row * c + target]) {
                return Err(TensorError::Invalid(format!(
                    "cross_entropy: target ({row}, {target}) is masked out"
                )));
            }
        }
        if let Some(a) = allow {
            if a.len() != r * c {
                return Err(shape_err("cross_entropy", self.shape(logits), &[a.len()]));
            }
        }
        let (sum, probs) = kernels::cross_entropy(self.value(logits), c, pairs, allow);
        Ok(self.push(
            vec![sum],
            vec![1],
            Op::CrossEntropy {
                logits,
                pairs: pairs.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Runs reverse accumulation from a one-element `loss` and consumes the
    /// graph.
    pub fn backward(self, loss: Var) -> Result<Gradients<F>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::Invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<F>>> = vec![None; n];
        grads[loss.0] = Some(vec![F::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let leaves = self
            .nodes
            .iter()
            .map(|n| matches!(n.op, Op::Leaf) && n.needs_grad)
            .collect::<Vec<_>>();
        for (g, is_leaf) in grads.iter_mut().zip(&leaves) {
            if !is_leaf {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let node = &self.nodes[idx];
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(&self.nodes[a.0].shape);
                let n = node.shape[1];
                if wants(*a) {
                    // dA = dC · Bᵀ
                    let da = kernels::matmul_bt(g, &self.nodes[b.0].value, m, n, k);
                    accumulate(grads, *a, da);
                }
                if wants(*b) {
                    // dB = Aᵀ · dC
                    let db = kernels::matmul_at(&self.nodes[a.0].value, g, m, k, n);
                    accumulate(grads, *b, db);
                }
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = dims(&self.nodes[a.0].shape);
                let n = node.shape[1];
                if wants(*a) {
                    // C = A Bᵀ: dA = dC · B
                    let da = kernels::matmul(g, &self.nodes[b.0].value, m, n, k);
                    accumulate(grads, *a, da);
                }
                if wants(*b) {
                    // dB = dCᵀ · A
                    let db = kernels::matmul_at(g, &self.nodes[a.0].value, m, n, k);
                    accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.to_vec());
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if wants(*a) {
                    accumulate(grads, *a, g.iter().zip(bv).map(|(&d, &y)| d * y).collect());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.iter().zip(av).map(|(&d, &x)| d * x).collect());
                }
            }
            Op::Scale(a, c) => {
                accumulate(grads, *a, g.iter().map(|&d| d * *c).collect());
            }
            Op::Silu(a) => {
                let x = &self.nodes[a.0].value;
                let dx = g
                    .iter()
                    .zip(x)
                    .map(|(&d, &x)| {
                        let s = F::one() / (F::one() + (-x).exp());
                        d * s * (F::one() + x * (F::one() - s))
                    })
                    .collect();
                accumulate(grads, *a, dx);
            }
            Op::Sum(a) => {
                let len = self.nodes[a.0].value.len();
                accumulate(grads, *a, vec![g[0]; len]);
            }
            Op::RmsNorm { x, gain, inv_rms } => {
                let xv = &self.nodes[x.0].value;
                let gv = &self.nodes[gain.0].value;
                let cols = gv.len();
                let rows = inv_rms.len();
                let cf = F::of(cols as f64);
                let mut dx = vec![F::zero(); xv.len()];
                let mut dgain = vec![F::zero(); cols];
                for r in 0..rows {
                    let s = inv_rms[r];
                    let row = &xv[r * cols..(r + 1) * cols];
                    let dy = &g[r * cols..(r + 1) * cols];
                    // y = gain * x * s, s = (mean(x²)+eps)^-1/2
                    let mut dot = F::zero();
                    for c in 0..cols {
                        dgain[c] = dgain[c] + dy[c] * row[c] * s;
                        dot = dot + dy[c] * gv[c] * row[c];
                    }
                    let k = dot * s * s * s / cf;
                    for c in 0..cols {
                        dx[r * cols + c] = dy[c] * gv[c] * s - row[c] * k;
                    }
                }
                if wants(*x) {
                    accumulate(grads, *x, dx);
                }
                if wants(*gain) {
                    accumulate(grads, *gain, dgain);
                }
            }
            Op::Rope {
                x,
                head_dim,
                cos,
                sin,
            } => {
                let (t, cols) = (node.shape[0], node.shape[1]);
                let half = head_dim / 2;
                let mut dx = vec![F::zero(); g.len()];
                for p in 0..t {
                    for h in 0..cols / head_dim {
                        let base = p * cols + h * head_dim;
                        for i in 0..half {
                            let (c, s) = (cos[p * half + i], sin[p * half + i]);
                            let (d1, d2) = (g[base + i], g[base + half + i]);
                            dx[base + i] = d1 * c + d2 * s;
                            dx[base + half + i] = d2 * c - d1 * s;
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::GatherRows { src, rows } => {
                let (r, c) = dims(&self.nodes[src.0].shape);
                let mut d = vec![F::zero(); r * c];
                for (k, &i) in rows.iter().enumerate() {
                    for j in 0..c {
                        d[i * c + j] = d[i * c + j] + g[k * c + j];
                    }
                }
                accumulate(grads, *src, d);
            }
            Op::MeanRows { src, rows } => {
                let (r, c) = dims(&self.nodes[src.0].shape);
                let n = F::of(rows.len() as f64);
                let mut d = vec![F::zero(); r * c];
                for &i in rows {
                    for j in 0..c {
                        d[i * c + j] = d[i * c + j] + g[j] / n;
                    }
                }
                accumulate(grads, *src, d);
            }
            Op::SliceCols { src, start } => {
                let (r, c) = dims(&self.nodes[src.0].shape);
                let len = node.shape[1];
                let mut d = vec![F::zero(); r * c];
                for i in 0..r {
                    d[i * c + start..i * c + start + len]
                        .copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                accumulate(grads, *src, d);
            }
            Op::ConcatCols(parts) => {
                let (r, total) = (node.shape[0], node.shape[1]);
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p.0].shape[1];
                    if wants(p) {
                        let mut d = Vec::with_capacity(r * w);
                        for i in 0..r {
                            d.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        accumulate(grads, p, d);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    if wants(p) {
                        accumulate(grads, p, g[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            Op::MaskedSoftmax(x) => {
                let (r, c) = (node.shape[0], node.shape[1]);
                let y = &node.value;
                let mut dx = vec![F::zero(); y.len()];
                for i in 0..r {
                    let yr = &y[i * c..(i + 1) * c];
                    let gr = &g[i * c..(i + 1) * c];
                    let dot = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum::<F>();
                    for j in 0..c {
                        dx[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::L2NormalizeRows { x, norms } => {
                let (r, c) = (node.shape[0], node.shape[1]);
                let y = &node.value;
                let mut dx = vec![F::zero(); y.len()];
                for i in 0..r {
                    let yr = &y[i * c..(i + 1) * c];
                    let gr = &g[i * c..(i + 1) * c];
                    let dot = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum::<F>();
                    for j in 0..c {
                        dx[i * c + j] = (gr[j] - yr[j] * dot) / norms[i];
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::CrossEntropy {
                logits,
                pairs,
                probs,
            } => {
                let (r, c) = dims(&self.nodes[logits.0].shape);
                let mut d = vec![F::zero(); r * c];
                for (k, &(row, target)) in pairs.iter().enumerate() {
                    let p = &probs[k * c..(k + 1) * c];
                    for j in 0..c {
                        d[row * c + j] = d[row * c + j] + g[0] * p[j];
                    }
                    d[row * c + target] = d[row * c + target] - g[0];
                }
                accumulate(grads, *logits, d);
            }
        }
    }
}

fn dims(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1])
}

fn accumulate<F: Scalar>(grads: &mut [Option<Vec<F>>], v: Var, delta: Vec<F>) {
    match &mut grads[v.0] {
        Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a = *a + b),
        slot @ None => *slot = Some(delta),
    }
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients<F: Scalar> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Gradients<F> {
    /// Gradient of a trainable leaf, `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `tensor`'s grad slot.
    pub fn accumulate_into(&self, v: Var, tensor: &mut Tensor<F>) -> Result<()> {
        match self.get(v) {
            Some(g) => tensor.accumulate_grad(g),
            None => Ok(()),
        }
    }
}
