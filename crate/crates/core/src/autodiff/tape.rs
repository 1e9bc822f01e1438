use std::fmt::{Debug, Display};
use std::ops::Range;

use num_traits::Float;

/// Scalar type for tape computations: f64 in test/verification mode, f32 for
/// training throughput.
pub trait Real:
    Float + Debug + Display + Send + Sync + 'static + std::iter::Sum + std::ops::AddAssign
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Row-major 2D shape. Scalars are `(1, 1)`, row vectors `(1, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl Shape {
    pub fn numel(&self) -> usize {
        self.0 * self.1
    }
    pub fn scalar() -> Self {
        Shape(1, 1)
    }
}

impl Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

/// Handle to a tensor on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Matmul(TensorId, TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, T),
    AddBias(TensorId, TensorId),
    MulRows(TensorId, TensorId),
    Transpose(TensorId),
    ConcatRows(Vec<TensorId>),
    SliceRows(TensorId, Range<usize>),
    GatherRows(TensorId, Vec<usize>),
    SoftmaxRows(TensorId),
    LayerNormRows(TensorId, T),
    Gelu(TensorId),
    Tanh(TensorId),
    Abs(TensorId),
    Sqrt(TensorId),
    Clamp(TensorId, T, T),
    RowMin(TensorId),
    Mean(TensorId),
    Sum(TensorId),
    LogSumExp(TensorId),
}

struct Node<T> {
    shape: Shape,
    data: Vec<T>,
    grad: Option<Vec<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recording tape. Ops evaluate eagerly; `backward` replays in reverse.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Shape, data: Vec<T>, op: Op<T>, needs_grad: bool) -> TensorId {
        debug_assert_eq!(shape.numel(), data.len());
        self.nodes.push(Node { shape, data, grad: None, op, needs_grad });
        TensorId(self.nodes.len() - 1)
    }

    fn parents_need_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// Trainable leaf: participates in gradients.
    pub fn leaf(&mut self, shape: Shape, data: Vec<T>) -> TensorId {
        self.push(shape, data, Op::Leaf, true)
    }

    /// Constant leaf: no gradient is accumulated for it.
    pub fn constant(&mut self, shape: Shape, data: Vec<T>) -> TensorId {
        self.push(shape, data, Op::Leaf, false)
    }

    pub fn scalar_constant(&mut self, v: T) -> TensorId {
        self.constant(Shape::scalar(), vec![v])
    }

    pub fn shape(&self, id: TensorId) -> Shape {
        self.nodes[id.0].shape
    }

    pub fn value(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].data
    }

    pub fn value_scalar(&self, id: TensorId) -> T {
        debug_assert_eq!(self.nodes[id.0].shape, Shape::scalar());
        self.nodes[id.0].data[0]
    }

    /// Gradient of the last `backward` call w.r.t. `id` (zeros if untouched).
    pub fn grad(&self, id: TensorId) -> Vec<T> {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => vec![T::zero(); self.nodes[id.0].shape.numel()],
        }
    }

    fn same_shape(&self, a: TensorId, b: TensorId, op: &str) -> Shape {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa, sb, "{op}: shape mismatch {sa} vs {sb}");
        sa
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let shape = self.same_shape(a, b, "add");
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| *x + *y)
            .collect();
        let ng = self.parents_need_grad(&[a, b]);
        self.push(shape, data, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let shape = self.same_shape(a, b, "sub");
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| *x - *y)
            .collect();
        let ng = self.parents_need_grad(&[a, b]);
        self.push(shape, data, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let shape = self.same_shape(a, b, "mul");
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| *x * *y)
            .collect();
        let ng = self.parents_need_grad(&[a, b]);
        self.push(shape, data, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: TensorId, k: T) -> TensorId {
        let shape = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|x| *x * k).collect();
        let ng = self.parents_need_grad(&[a]);
        self.push(shape, data, Op::Scale(a, k), ng)
    }

    /// `[m,n] + [1,n]`, the bias row added to every row.
    pub fn add_bias(&mut self, a: TensorId, bias: TensorId) -> TensorId {
        let Shape(m, n) = self.shape(a);
        let sb = self.shape(bias);
        assert_eq!(sb, Shape(1, n), "add_bias: bias shape {sb} incompatible with {}", self.shape(a));
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(self.nodes[a.0].data[i * n + j] + self.nodes[bias.0].data[j]);
            }
        }
        let ng = self.parents_need_grad(&[a, bias]);
        self.push(Shape(m, n), data, Op::AddBias(a, bias), ng)
    }

    /// `[m,n] * [1,n]`, the scale row multiplied into every row.
    pub fn mul_rows(&mut self, a: TensorId, s: TensorId) -> TensorId {
        let Shape(m, n) = self.shape(a);
        let ss = self.shape(s);
        assert_eq!(ss, Shape(1, n), "mul_rows: scale shape {ss} incompatible with {}", self.shape(a));
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(self.nodes[a.0].data[i * n + j] * self.nodes[s.0].data[j]);
            }
        }
        let ng = self.parents_need_grad(&[a, s]);
        self.push(Shape(m, n), data, Op::MulRows(a, s), ng)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let Shape(m, k) = self.shape(a);
        let Shape(kb, n) = self.shape(b);
        assert_eq!(k, kb, "matmul: inner dims differ, {} vs {}", self.shape(a), self.shape(b));
        let data = matmul_raw(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n);
        let ng = self.parents_need_grad(&[a, b]);
        self.push(Shape(m, n), data, Op::Matmul(a, b), ng)
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let Shape(m, n) = self.shape(a);
        let src = &self.nodes[a.0].data;
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let ng = self.parents_need_grad(&[a]);
        self.push(Shape(n, m), data, Op::Transpose(a), ng)
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty(), "concat_rows: empty input");
        let n = self.shape(parts[0]).1;
        let mut rows = 0;
        for p in parts {
            let s = self.shape(*p);
            assert_eq!(s.1, n, "concat_rows: column mismatch {} vs {}", s.1, n);
            rows += s.0;
        }
        let mut data = Vec::with_capacity(rows * n);
        for p in parts {
            data.extend_from_slice(&self.nodes[p.0].data);
        }
        let ng = self.parents_need_grad(parts);
        self.push(Shape(rows, n), data, Op::ConcatRows(parts.to_vec()), ng)
    }

    /// Column slice, composed from transpose + row slice.
    pub fn slice_cols(&mut self, a: TensorId, range: Range<usize>) -> TensorId {
        let t = self.transpose(a);
        let s = self.slice_rows(t, range);
        self.transpose(s)
    }

    /// Column concatenation, composed from transposes + row concat.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> TensorId {
        let ts: Vec<TensorId> = parts.iter().map(|p| self.transpose(*p)).collect();
        let cat = self.concat_rows(&ts);
        self.transpose(cat)
    }

    pub fn slice_rows(&mut self, a: TensorId, range: Range<usize>) -> TensorId {
        let Shape(m, n) = self.shape(a);
        assert!(range.end <= m, "slice_rows: range {range:?} out of {m} rows");
        let data = self.nodes[a.0].data[range.start * n..range.end * n].to_vec();
        let rows = range.end - range.start;
        let ng = self.parents_need_grad(&[a]);
        self.push(Shape(rows, n), data, Op::SliceRows(a, range), ng)
    }

    /// Row lookup: out[i] = a[indices[i]]. Duplicate indices accumulate
    /// gradients additively (embedding-table semantics).
    pub fn gather_rows(&mut self, a: TensorId, indices: &[usize]) -> TensorId {
        let Shape(m, n) = self.shape(a);
        let mut data = Vec::with_capacity(indices.len() * n);
        for &idx in indices {
            assert!(idx < m, "gather_rows: index {idx} out of {m} rows");
            data.extend_from_slice(&self.nodes[a.0].data[idx * n..(idx + 1) * n]);
        }
        let ng = self.parents_need_grad(&[a]);
        self.push(Shape(indices.len(), n), data, Op::GatherRows(a, indices.to_vec()), ng)
    }

    pub fn softmax_rows(&mut self, a: TensorId) -> TensorId {
        let Shape(m, n) = self.shape(a);
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &self.nodes[a.0].data[i * n..(i + 1) * n];
            let mx = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|x| (*x - mx).exp()).collect();
            let sum: T = exps.iter().cloned().sum();
            data.extend(exps.iter().map(|e| *e / sum));
        }
        let ng = self.parents_need_grad(&[a]);
        self.push(Shape(m, n), data, Op::SoftmaxRows(a), ng)
    }

    /// Per-row standardization (no affine terms): `(x - mean) / sqrt(var + eps)`.
    pub fn layer_norm_rows(&mut self, a: TensorId, eps: T) -> TensorId {
        let Shape(m, n) = self.shape(a);
        let nf = T::from_f64(n as f64);
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &self.nodes[a.0].data[i * n..(i + 1) * n];
            let mean = row.iter().cloned().sum::<T>() / nf;
            let var = row.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / nf;
            let denom = (var + eps).sqrt();
            data.extend(row.iter().map(|x| (*x - mean) / denom));
        }
        let ng = self.parents_need_grad(&[a]);
        self.push(Shape(m, n), data, Op::LayerNormRows(a, eps), ng)
    }

    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        let shape = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|x| gelu_fwd(*x)).collect();
        let ng = self.parents_need_grad(&[a]);
        self.push(shape, data, Op::Gelu(a), ng)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let shape = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|x| x.tanh()).collect();
        let ng = self.parents_need_grad(&[a]);
        self.push(shape, data, Op::Tanh(a), ng)
    }

    pub fn abs(&mut self, a: TensorId) -> TensorId {
        let shape = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|x| x.abs()).collect();
        let ng = self.parents_need_grad(&[a]);
        self.push(shape, data, Op::Abs(a), ng)
    }

    pub fn sqrt(&mut self, a: TensorId) -> TensorId {
        let shape = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|x| x.sqrt()).collect();
        let ng = self.parents_need_grad(&[a]);
        self.push(shape, data, Op::Sqrt(a), ng)
    }

    /// Elementwise clamp; gradient passes through strictly inside the bounds.
    pub fn clamp(&mut self, a: TensorId, lo: T, hi: T) -> TensorId {
        let shape = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|x| x.max(lo).min(hi)).collect();
        let ng = self.parents_need_grad(&[a]);
        self.push(shape, data, Op::Clamp(a, lo, hi), ng)
    }

    /// Per-row hard minimum, `[m,n] -> [m,1]`; subgradient goes to the first
    /// argmin in each row.
    pub fn row_min(&mut self, a: TensorId) -> TensorId {
        let Shape(m, n) = self.shape(a);
        let mut data = Vec::with_capacity(m);
        for i in 0..m {
            let row = &self.nodes[a.0].data[i * n..(i + 1) * n];
            data.push(row.iter().cloned().fold(T::infinity(), T::min));
        }
        let ng = self.parents_need_grad(&[a]);
        self.push(Shape(m, 1), data, Op::RowMin(a), ng)
    }

    pub fn mean(&mut self, a: TensorId) -> TensorId {
        let numel = self.shape(a).numel();
        let sum: T = self.nodes[a.0].data.iter().cloned().sum();
        let v = sum / T::from_f64(numel as f64);
        let ng = self.parents_need_grad(&[a]);
        self.push(Shape::scalar(), vec![v], Op::Mean(a), ng)
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let v: T = self.nodes[a.0].data.iter().cloned().sum();
        let ng = self.parents_need_grad(&[a]);
        self.push(Shape::scalar(), vec![v], Op::Sum(a), ng)
    }

    /// Max-shifted `ln(sum(exp(x)))` over all elements.
    pub fn log_sum_exp(&mut self, a: TensorId) -> TensorId {
        let src = &self.nodes[a.0].data;
        let mx = src.iter().cloned().fold(T::neg_infinity(), T::max);
        let v = if mx.is_finite() {
            mx + src.iter().map(|x| (*x - mx).exp()).sum::<T>().ln()
        } else {
            mx
        };
        let ng = self.parents_need_grad(&[a]);
        self.push(Shape::scalar(), vec![v], Op::LogSumExp(a), ng)
    }

    /// Soft maximum `(1/beta) ln sum exp(beta x)` over all elements.
    pub fn soft_max(&mut self, a: TensorId, beta: T) -> TensorId {
        let scaled = self.scale(a, beta);
        let lse = self.log_sum_exp(scaled);
        self.scale(lse, T::one() / beta)
    }

    /// Soft minimum `-(1/beta) ln sum exp(-beta x)` over all elements.
    pub fn soft_min(&mut self, a: TensorId, beta: T) -> TensorId {
        let scaled = self.scale(a, -beta);
        let lse = self.log_sum_exp(scaled);
        self.scale(lse, -(T::one() / beta))
    }

    /// Backpropagates from a scalar root with seed gradient 1.
    pub fn backward(&mut self, root: TensorId) {
        assert_eq!(self.shape(root), Shape::scalar(), "backward root must be scalar");
        self.backward_seeded(&[(root, vec![T::one()])]);
    }

    /// Backpropagates from several roots with explicit cotangents. Used when a
    /// loss couples tensors across tapes (the caller differentiates the
    /// coupling by hand and injects per-tape seeds).
    pub fn backward_seeded(&mut self, seeds: &[(TensorId, Vec<T>)]) {
        for node in &mut self.nodes {
            node.grad = None;
        }
        for (id, seed) in seeds {
            assert_eq!(seed.len(), self.nodes[id.0].shape.numel(), "seed shape mismatch");
            let slot = self.nodes[id.0].grad.get_or_insert_with(|| vec![T::zero(); seed.len()]);
            for (g, s) in slot.iter_mut().zip(seed) {
                *g += *s;
            }
        }
        for idx in (0..self.nodes.len()).rev() {
            if self.nodes[idx].grad.is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            self.backward_node(idx);
        }
    }

    fn add_grad(&mut self, id: TensorId, contrib: &[T]) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        let numel = self.nodes[id.0].shape.numel();
        let slot = self.nodes[id.0].grad.get_or_insert_with(|| vec![T::zero(); numel]);
        for (g, c) in slot.iter_mut().zip(contrib) {
            *g += *c;
        }
    }

    fn backward_node(&mut self, idx: usize) {
        let grad = self.nodes[idx].grad.clone().expect("grad present");
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.add_grad(a, &grad);
                self.add_grad(b, &grad);
            }
            Op::Sub(a, b) => {
                self.add_grad(a, &grad);
                let neg: Vec<T> = grad.iter().map(|g| -*g).collect();
                self.add_grad(b, &neg);
            }
            Op::Mul(a, b) => {
                let ga: Vec<T> =
                    grad.iter().zip(&self.nodes[b.0].data).map(|(g, y)| *g * *y).collect();
                let gb: Vec<T> =
                    grad.iter().zip(&self.nodes[a.0].data).map(|(g, x)| *g * *x).collect();
                self.add_grad(a, &ga);
                self.add_grad(b, &gb);
            }
            Op::Scale(a, k) => {
                let ga: Vec<T> = grad.iter().map(|g| *g * k).collect();
                self.add_grad(a, &ga);
            }
            Op::AddBias(a, bias) => {
                self.add_grad(a, &grad);
                let Shape(m, n) = self.nodes[a.0].shape;
                let mut gb = vec![T::zero(); n];
                for i in 0..m {
                    for j in 0..n {
                        gb[j] += grad[i * n + j];
                    }
                }
                self.add_grad(bias, &gb);
            }
            Op::MulRows(a, s) => {
                let Shape(m, n) = self.nodes[a.0].shape;
                let mut ga = vec![T::zero(); m * n];
                let mut gs = vec![T::zero(); n];
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] = grad[i * n + j] * self.nodes[s.0].data[j];
                        gs[j] += grad[i * n + j] * self.nodes[a.0].data[i * n + j];
                    }
                }
                self.add_grad(a, &ga);
                self.add_grad(s, &gs);
            }
            Op::Matmul(a, b) => {
                let Shape(m, k) = self.nodes[a.0].shape;
                let n = self.nodes[b.0].shape.1;
                // dA = dC . B^T
                if self.nodes[a.0].needs_grad {
                    let bt = transpose_raw(&self.nodes[b.0].data, k, n);
                    let ga = matmul_raw(&grad, &bt, m, n, k);
                    self.add_grad(a, &ga);
                }
                // dB = A^T . dC
                if self.nodes[b.0].needs_grad {
                    let at = transpose_raw(&self.nodes[a.0].data, m, k);
                    let gb = matmul_raw(&at, &grad, k, m, n);
                    self.add_grad(b, &gb);
                }
            }
            Op::Transpose(a) => {
                let Shape(n, m) = self.nodes[idx].shape;
                let ga = transpose_raw(&grad, n, m);
                self.add_grad(a, &ga);
            }
            Op::ConcatRows(parts) => {
                let n = self.nodes[idx].shape.1;
                let mut offset = 0;
                for p in parts {
                    let rows = self.nodes[p.0].shape.0;
                    let gp = grad[offset * n..(offset + rows) * n].to_vec();
                    self.add_grad(p, &gp);
                    offset += rows;
                }
            }
            Op::SliceRows(a, range) => {
                let Shape(m, n) = self.nodes[a.0].shape;
                let mut ga = vec![T::zero(); m * n];
                ga[range.start * n..range.end * n].copy_from_slice(&grad);
                self.add_grad(a, &ga);
            }
            Op::GatherRows(a, indices) => {
                let Shape(m, n) = self.nodes[a.0].shape;
                let mut ga = vec![T::zero(); m * n];
                for (i, &idx_row) in indices.iter().enumerate() {
                    for j in 0..n {
                        ga[idx_row * n + j] += grad[i * n + j];
                    }
                }
                self.add_grad(a, &ga);
            }
            Op::SoftmaxRows(a) => {
                let Shape(m, n) = self.nodes[idx].shape;
                let y = &self.nodes[idx].data;
                let mut ga = vec![T::zero(); m * n];
                for i in 0..m {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &grad[i * n..(i + 1) * n];
                    let dot: T = yr.iter().zip(gr).map(|(yi, gi)| *yi * *gi).sum();
                    for j in 0..n {
                        ga[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.add_grad(a, &ga);
            }
            Op::LayerNormRows(a, eps) => {
                let Shape(m, n) = self.nodes[a.0].shape;
                let nf = T::from_f64(n as f64);
                let x = self.nodes[a.0].data.clone();
                let mut ga = vec![T::zero(); m * n];
                for i in 0..m {
                    let row = &x[i * n..(i + 1) * n];
                    let gr = &grad[i * n..(i + 1) * n];
                    let mean = row.iter().cloned().sum::<T>() / nf;
                    let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / nf;
                    let denom = (var + eps).sqrt();
                    let xhat: Vec<T> = row.iter().map(|v| (*v - mean) / denom).collect();
                    let g_mean = gr.iter().cloned().sum::<T>() / nf;
                    let g_dot: T = gr.iter().zip(&xhat).map(|(g, h)| *g * *h).sum::<T>() / nf;
                    for j in 0..n {
                        ga[i * n + j] = (gr[j] - g_mean - xhat[j] * g_dot) / denom;
                    }
                }
                self.add_grad(a, &ga);
            }
            Op::Gelu(a) => {
                let ga: Vec<T> = grad
                    .iter()
                    .zip(&self.nodes[a.0].data)
                    .map(|(g, x)| *g * gelu_bwd(*x))
                    .collect();
                self.add_grad(a, &ga);
            }
            Op::Tanh(a) => {
                let ga: Vec<T> = grad
                    .iter()
                    .zip(&self.nodes[idx].data)
                    .map(|(g, y)| *g * (T::one() - *y * *y))
                    .collect();
                self.add_grad(a, &ga);
            }
            Op::Abs(a) => {
                let ga: Vec<T> = grad
                    .iter()
                    .zip(&self.nodes[a.0].data)
                    .map(|(g, x)| {
                        if *x > T::zero() {
                            *g
                        } else if *x < T::zero() {
                            -*g
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.add_grad(a, &ga);
            }
            Op::Sqrt(a) => {
                let half = T::from_f64(0.5);
                let ga: Vec<T> = grad
                    .iter()
                    .zip(&self.nodes[idx].data)
                    .map(|(g, y)| *g * half / *y)
                    .collect();
                self.add_grad(a, &ga);
            }
            Op::Clamp(a, lo, hi) => {
                let ga: Vec<T> = grad
                    .iter()
                    .zip(&self.nodes[a.0].data)
                    .map(|(g, x)| if *x > lo && *x < hi { *g } else { T::zero() })
                    .collect();
                self.add_grad(a, &ga);
            }
            Op::RowMin(a) => {
                let Shape(m, n) = self.nodes[a.0].shape;
                let mut ga = vec![T::zero(); m * n];
                for i in 0..m {
                    let row = &self.nodes[a.0].data[i * n..(i + 1) * n];
                    let mut arg = 0;
                    for j in 1..n {
                        if row[j] < row[arg] {
                            arg = j;
                        }
                    }
                    ga[i * n + arg] = grad[i];
                }
                self.add_grad(a, &ga);
            }
            Op::Mean(a) => {
                let numel = self.nodes[a.0].shape.numel();
                let k = grad[0] / T::from_f64(numel as f64);
                let ga = vec![k; numel];
                self.add_grad(a, &ga);
            }
            Op::Sum(a) => {
                let ga = vec![grad[0]; self.nodes[a.0].shape.numel()];
                self.add_grad(a, &ga);
            }
            Op::LogSumExp(a) => {
                let y = self.nodes[idx].data[0];
                let ga: Vec<T> =
                    self.nodes[a.0].data.iter().map(|x| grad[0] * (*x - y).exp()).collect();
                self.add_grad(a, &ga);
            }
        }
    }
}

pub(crate) fn matmul_raw<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

fn transpose_raw<T: Real>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut t = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            t[j * m + i] = a[i * n + j];
        }
    }
    t
}

// tanh approximation of GELU, matching common transformer implementations.
fn gelu_fwd<T: Real>(x: T) -> T {
    let c = T::from_f64(0.7978845608028654); // sqrt(2/pi)
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_bwd<T: Real>(x: T) -> T {
    let c = T::from_f64(0.7978845608028654);
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let inner = c * (x + k * x * x * x);
    let th = inner.tanh();
    let sech2 = T::one() - th * th;
    half * (T::one() + th) + half * x * sech2 * c * (T::one() + three * k * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Shape(1, 2), vec![0.0, 0.0]);
        let y = tape.softmax_rows(x);
        assert_eq!(tape.value(y), &[0.5, 0.5]);
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Shape(1, 4), vec![3.0; 4]);
        let y = tape.layer_norm_rows(x, 1e-5);
        for v in tape.value(y) {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn matmul_identity() {
        let mut tape: Tape<f64> = Tape::new();
        let eye = tape.constant(Shape(3, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let a = tape.leaf(Shape(3, 2), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = tape.matmul(eye, a);
        assert_eq!(tape.value(b), tape.value(a));
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Shape(1, 4), vec![1.0, 2.0, 3.0, 4.0]);
        let m = tape.mean(x);
        tape.backward(m);
        assert_eq!(tape.grad(x), vec![0.25; 4]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Shape(1, 1), vec![3.0]);
        let sq = tape.mul(x, x);
        let s = tape.sum(sq);
        tape.backward(s);
        assert_eq!(tape.grad(x), vec![6.0]);
    }

    #[test]
    fn concat_slice_grads_land_in_place() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.leaf(Shape(2, 2), vec![1.0, 2.0, 3.0, 4.0]);
        let b = tape.leaf(Shape(1, 2), vec![5.0, 6.0]);
        let cat = tape.concat_rows(&[a, b]);
        let mid = tape.slice_rows(cat, 1..2); // row [3,4]
        let s = tape.sum(mid);
        tape.backward(s);
        assert_eq!(tape.grad(a), vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(tape.grad(b), vec![0.0, 0.0]);
    }

    #[test]
    fn gather_accumulates_duplicate_rows() {
        let mut tape: Tape<f64> = Tape::new();
        let table = tape.leaf(Shape(3, 2), vec![0.0; 6]);
        let picked = tape.gather_rows(table, &[1, 1, 2]);
        let s = tape.sum(picked);
        tape.backward(s);
        assert_eq!(tape.grad(table), vec![0.0, 0.0, 2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn soft_extrema_bracket_hard_extrema() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Shape(1, 3), vec![1.0, 2.0, 3.0]);
        let smax = tape.soft_max(x, 10.0);
        let smin = tape.soft_min(x, 10.0);
        assert!(tape.value_scalar(smax) >= 3.0);
        assert!(tape.value_scalar(smax) <= 3.0 + (3.0f64).ln() / 10.0);
        assert!(tape.value_scalar(smin) <= 1.0);
        assert!(tape.value_scalar(smin) >= 1.0 - (3.0f64).ln() / 10.0);
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let run = || {
            let mut tape: Tape<f64> = Tape::new();
            let a = tape.leaf(Shape(4, 4), (0..16).map(|i| (i as f64) * 0.37 - 2.0).collect());
            let b = tape.leaf(Shape(4, 4), (0..16).map(|i| (i as f64) * -0.11 + 1.0).collect());
            let c = tape.matmul(a, b);
            let d = tape.softmax_rows(c);
            let e = tape.mean(d);
            tape.value_scalar(e).to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn add_rejects_mismatched_shapes() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.leaf(Shape(1, 2), vec![0.0, 0.0]);
        let b = tape.leaf(Shape(2, 1), vec![0.0, 0.0]);
        tape.add(a, b);
    }
}
