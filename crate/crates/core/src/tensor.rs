//! Dense row-major tensors and the plain (non-recording) numeric kernels.
//!
//! Every kernel here is also used by [`crate::autograd::Graph`] for its
//! forward values, so the recorded and the eager paths cannot drift apart.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Element type of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size_of(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "F32",
            DType::F64 => "F64",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "F32" => Some(DType::F32),
            "F64" => Some(DType::F64),
            _ => None,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Floating point element. Implemented for `f32` (training) and `f64`
/// (gradient checks, merge accumulation).
pub trait Scalar:
    num_traits::Float + Default + fmt::Debug + fmt::Display + Send + Sync + 'static + std::iter::Sum
{
    const DTYPE: DType;

    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    fn of(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    fn of(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} holds {expected} elements but {got} were given")]
    Length {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    Axis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: index {index} out of range (bound {bound})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Dense tensor with an optional gradient buffer.
#[derive(Clone, PartialEq)]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    data: Vec<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
}

impl<F: Scalar> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("dtype", &F::DTYPE)
            .field("shape", &self.shape)
            .field("requires_grad", &self.requires_grad)
            .field("has_grad", &self.grad.is_some())
            .finish()
    }
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<F>) -> Result<Self> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Length {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    /// Build from `f64` literals, casting to `F`.
    pub fn from_f64(shape: impl Into<Vec<usize>>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| F::of(v)).collect())
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![F::zero(); n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: F) -> Self {
        let mut t = Self::zeros(shape);
        t.data.iter_mut().for_each(|v| *v = value);
        t
    }

    pub fn scalar(value: F) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    /// Marks the tensor as a trainable leaf.
    pub fn requiring_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        F::DTYPE
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut Vec<F>> {
        self.grad.as_mut()
    }

    pub fn take_grad(&mut self) -> Option<Vec<F>> {
        self.grad.take()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `delta` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[F]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(TensorError::Length {
                shape: self.shape.clone(),
                expected: self.data.len(),
                got: delta.len(),
            });
        }
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, &b)| *a = *a + b),
            None => self.grad = Some(delta.to_vec()),
        }
        Ok(())
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::of(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| G::of(v.as_f64())).collect()),
            requires_grad: self.requires_grad,
        }
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(TensorError::Length {
                shape,
                expected: n,
                got: self.data.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::Invalid(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn row(&self, i: usize) -> Result<&[F]> {
        let (r, c) = self.dims2()?;
        if i >= r {
            return Err(TensorError::Index {
                op: "row",
                index: i,
                bound: r,
            });
        }
        Ok(&self.data[i * c..(i + 1) * c])
    }

    /// True when both tensors hold bit-identical values and shapes.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}

/// Matrix product `a[m,k] · b[k,n]`.
pub fn matmul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(TensorError::Shape {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Tensor::new([m, n], kernels::matmul(&a.data, &b.data, m, k, n))
}

/// Softmax along `axis`, with max subtraction.
pub fn softmax<F: Scalar>(x: &Tensor<F>, axis: usize) -> Result<Tensor<F>> {
    let rank = x.shape.len();
    if axis >= rank {
        return Err(TensorError::Axis {
            op: "softmax",
            axis,
            rank,
        });
    }
    let len = x.shape[axis];
    let inner: usize = x.shape[axis + 1..].iter().product();
    let outer: usize = x.shape[..axis].iter().product();
    let mut out = x.data.clone();
    let mut lane = vec![F::zero(); len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for (j, v) in lane.iter_mut().enumerate() {
                *v = x.data[base + j * inner];
            }
            kernels::softmax_in_place(&mut lane, None);
            for (j, v) in lane.iter().enumerate() {
                out[base + j * inner] = *v;
            }
        }
    }
    Tensor::new(x.shape.clone(), out)
}

/// Row-wise RMS normalisation of the last axis scaled by `gain`.
pub fn rmsnorm<F: Scalar>(x: &Tensor<F>, gain: &Tensor<F>, eps: f64) -> Result<Tensor<F>> {
    let cols = *x.shape.last().unwrap_or(&0);
    if gain.numel() != cols {
        return Err(TensorError::Shape {
            op: "rmsnorm",
            left: x.shape.clone(),
            right: gain.shape.clone(),
        });
    }
    let (out, _) = kernels::rmsnorm(&x.data, &gain.data, cols, eps);
    Tensor::new(x.shape.clone(), out)
}

/// Result of a summed token-level cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub sum: f64,
    /// `sum / count`, or 0 when no positions were scored.
    pub mean: f64,
    pub count: usize,
    pub empty: bool,
}

/// `Σ_{i∈positions} −log softmax(logits_i)[targets_i]`.
pub fn cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    targets: &[usize],
    positions: &[usize],
) -> Result<CrossEntropy> {
    let (t, v) = logits.dims2()?;
    if targets.len() != t {
        return Err(TensorError::Length {
            shape: vec![t],
            expected: t,
            got: targets.len(),
        });
    }
    let mut pairs = Vec::with_capacity(positions.len());
    for &p in positions {
        if p >= t {
            return Err(TensorError::Index {
                op: "cross_entropy",
                index: p,
                bound: t,
            });
        }
        if targets[p] >= v {
            return Err(TensorError::Index {
                op: "cross_entropy",
                index: targets[p],
                bound: v,
            });
        }
        pairs.push((p, targets[p]));
    }
    let (sum, _) = kernels::cross_entropy(&logits.data, v, &pairs, None);
    let sum = sum.as_f64();
    let count = pairs.len();
    Ok(CrossEntropy {
        sum,
        mean: if count == 0 { 0.0 } else { sum / count as f64 },
        count,
        empty: count == 0,
    })
}

pub(crate) mod kernels {
    use super::Scalar;

    /// `a[m,k] · b[k,n]`. Zero entries of `a` are skipped, which keeps masked
    /// attention weights from touching the rows they exclude.
    pub fn matmul<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == F::zero() {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o = *o + av * bv;
                }
            }
        }
        out
    }

    /// `a[m,k] · b[n,k]ᵀ`.
    pub fn matmul_bt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &b[j * k..(j + 1) * k];
                let mut acc = F::zero();
                for (&x, &y) in arow.iter().zip(brow) {
                    acc = acc + x * y;
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    /// `a[k,m]ᵀ · b[k,n]`.
    pub fn matmul_at<F: Scalar>(a: &[F], b: &[F], k: usize, m: usize, n: usize) -> Vec<F> {
        let mut out = vec![F::zero(); m * n];
        for p in 0..k {
            let arow = &a[p * m..(p + 1) * m];
            let brow = &b[p * n..(p + 1) * n];
            for (i, &av) in arow.iter().enumerate() {
                if av == F::zero() {
                    continue;
                }
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o = *o + av * bv;
                }
            }
        }
        out
    }

    /// Softmax of one lane. Disallowed entries get probability 0; a lane with
    /// nothing allowed becomes all zeros.
    pub fn softmax_in_place<F: Scalar>(lane: &mut [F], allow: Option<&[bool]>) {
        let allowed = |j: usize| allow.is_none_or(|a| a[j]);
        let mut max = F::neg_infinity();
        for (j, &v) in lane.iter().enumerate() {
            if allowed(j) && v > max {
                max = v;
            }
        }
        if max == F::neg_infinity() {
            lane.iter_mut().for_each(|v| *v = F::zero());
            return;
        }
        let mut total = F::zero();
        for (j, v) in lane.iter_mut().enumerate() {
            if allowed(j) {
                *v = (*v - max).exp();
                total = total + *v;
            } else {
                *v = F::zero();
            }
        }
        lane.iter_mut().for_each(|v| *v = *v / total);
    }

    /// Returns the normalised rows and the per-row `1/rms`.
    pub fn rmsnorm<F: Scalar>(x: &[F], gain: &[F], cols: usize, eps: f64) -> (Vec<F>, Vec<F>) {
        let rows = if cols == 0 { 0 } else { x.len() / cols };
        let mut out = vec![F::zero(); x.len()];
        let mut inv = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &x[r * cols..(r + 1) * cols];
            let ms = row.iter().map(|&v| v * v).sum::<F>() / F::of(cols as f64);
            let s = F::one() / (ms + F::of(eps)).sqrt();
            inv.push(s);
            for (c, &v) in row.iter().enumerate() {
                out[r * cols + c] = gain[c] * v * s;
            }
        }
        (out, inv)
    }

    /// Summed negative log-likelihood of `(row, target)` pairs. Returns the
    /// sum and the softmax of every scored row (in pair order) for backward.
    pub fn cross_entropy<F: Scalar>(
        logits: &[F],
        cols: usize,
        pairs: &[(usize, usize)],
        allow: Option<&[bool]>,
    ) -> (F, Vec<F>) {
        let mut sum = F::zero();
        let mut probs = Vec::with_capacity(pairs.len() * cols);
        for &(row, target) in pairs {
            let lane = &logits[row * cols..(row + 1) * cols];
            let mask = allow.map(|a| &a[row * cols..(row + 1) * cols]);
            let allowed = |j: usize| mask.is_none_or(|m| m[j]);
            let mut max = F::neg_infinity();
            for (j, &v) in lane.iter().enumerate() {
                if allowed(j) && v > max {
                    max = v;
                }
            }
            let mut total = F::zero();
            for (j, &v) in lane.iter().enumerate() {
                if allowed(j) {
                    total = total + (v - max).exp();
                }
            }
            let log_z = max + total.ln();
            sum = sum + (log_z - lane[target]);
            for (j, &v) in lane.iter().enumerate() {
                probs.push(if allowed(j) {
                    (v - log_z).exp()
                } else {
                    F::zero()
                });
            }
        }
        (sum, probs)
    }
}
