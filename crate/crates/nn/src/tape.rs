//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Values are
//! computed eagerly; [`Tape::backward`] then walks the record in reverse and
//! accumulates gradients. Nodes that do not depend on a parameter never
//! receive a gradient buffer.

use std::rc::Rc;

use crate::real::Real;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Operation kinds, used to name ops in fault injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Param,
    MatMul,
    BatchMatMul,
    AddBias,
    Add,
    Mul,
    Scale,
    Sigmoid,
    Tanh,
    Relu,
    SliceAxis,
    ConcatCols,
    Reshape,
    Permute,
    Softmax,
    LayerNorm,
    MeanAxis1,
    Conv2d,
    MaxPool2d,
    CrossEntropy,
}

/// Geometry of a 2-D convolution with zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: (usize, usize),
    pub pad: (usize, usize),
    pub stride: (usize, usize),
}

impl ConvGeom {
    pub fn same(kh: usize, kw: usize) -> ConvGeom {
        ConvGeom { kernel: (kh, kw), pad: (kh / 2, kw / 2), stride: (1, 1) }
    }

    pub fn output(&self, h: usize, w: usize) -> (usize, usize) {
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.pad;
        let (sh, sw) = self.stride;
        ((h + 2 * ph - kh) / sh + 1, (w + 2 * pw - kw) / sw + 1)
    }
}

#[derive(Debug, Clone)]
enum Op<R> {
    Input,
    Param(usize),
    MatMul(Var, Var),
    BatchMatMul { a: Var, b: Var, tb: bool },
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, R),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SliceAxis { x: Var, axis: usize, start: usize },
    ConcatCols(Vec<Var>),
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<R>, rstd: Vec<R> },
    MeanAxis1(Var),
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom },
    MaxPool2d { x: Var, argmax: Vec<u32> },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<R> },
}

impl<R> Op<R> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Param(_) => OpKind::Param,
            Op::MatMul(..) => OpKind::MatMul,
            Op::BatchMatMul { .. } => OpKind::BatchMatMul,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Add(..) => OpKind::Add,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Relu(_) => OpKind::Relu,
            Op::SliceAxis { .. } => OpKind::SliceAxis,
            Op::ConcatCols(_) => OpKind::ConcatCols,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Permute { .. } => OpKind::Permute,
            Op::Softmax(_) => OpKind::Softmax,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::MeanAxis1(_) => OpKind::MeanAxis1,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::MaxPool2d { .. } => OpKind::MaxPool2d,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
        }
    }
}

#[derive(Debug, Clone)]
struct Node<R> {
    shape: Vec<usize>,
    value: Rc<Vec<R>>,
    op: Op<R>,
    needs_grad: bool,
}

/// Scales the backward rule of every op of one kind; used to verify that the
/// gradient checker catches a wrong rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fault {
    pub op: OpKind,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct Tape<R: Real> {
    nodes: Vec<Node<R>>,
    fault: Option<Fault>,
    kinks: Option<u64>,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Tape::new()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Rows × last-dimension view of a shape.
fn rows_cols(shape: &[usize]) -> (usize, usize) {
    let cols = *shape.last().expect("tensor has at least one dimension");
    (numel(shape) / cols.max(1), cols)
}

/// `(outer, dim, inner)` extents around `axis`.
fn axis_view(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    assert!(axis < shape.len(), "axis {axis} of {shape:?}");
    (numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..]))
}

fn mix(h: u64, v: u64) -> u64 {
    (h ^ v).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(5)
}

/// Parameter gradients of a backward pass, indexed by node.
pub struct Gradients<R> {
    grads: Vec<Option<Vec<R>>>,
}

impl<R: Real> Gradients<R> {
    pub fn get(&self, v: Var) -> Option<&[R]> {
        self.grads[v.0].as_deref()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), fault: None, kinks: None }
    }

    pub fn with_fault(fault: Option<Fault>) -> Self {
        Tape { fault, ..Tape::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Starts recording the kink signature.
    pub fn track_kinks(mut self) -> Self {
        self.kinks = Some(0xcbf2_9ce4_8422_2325);
        self
    }

    /// Hash of every ReLU sign pattern and max-pool choice made so far, when
    /// tracking. Two forward passes with equal signatures took the same
    /// piecewise-linear branch everywhere.
    pub fn kink_signature(&self) -> Option<u64> {
        self.kinks
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[R] {
        &self.nodes[v.0].value
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<R>, op: Op<R>, needs_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len(), "{:?}", op.kind());
        self.nodes.push(Node { shape, value: Rc::new(value), op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, shape: Vec<usize>, value: Vec<R>) -> Var {
        assert_eq!(numel(&shape), value.len(), "input shape {shape:?} does not match {} values", value.len());
        self.push(shape, value, Op::Input, false)
    }

    /// Trainable parameter block `index`.
    pub fn param(&mut self, index: usize, shape: Vec<usize>, value: Vec<R>) -> Var {
        assert_eq!(numel(&shape), value.len());
        self.push(shape, value, Op::Param(index), true)
    }

    /// `a [.., k] × b [k, n]`, leading dimensions of `a` flattened.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = rows_cols(self.shape(a));
        let bs = self.shape(b);
        assert!(bs.len() == 2 && bs[0] == k, "matmul {:?} × {:?}", self.shape(a), bs);
        let n = bs[1];
        let mut out = vec![R::ZERO; m * n];
        R::gemm(m, k, n, R::ONE, self.value(a), false, self.value(b), false, R::ZERO, &mut out);
        let mut shape = self.shape(a).to_vec();
        *shape.last_mut().unwrap() = n;
        let ng = self.ng(a) || self.ng(b);
        self.push(shape, out, Op::MatMul(a, b), ng)
    }

    /// Batched `a [g, m, k] × b [g, k, n]`, or `× b[g, n, k]ᵀ` when `tb`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, tb: bool) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        assert!(sa.len() == 3 && sb.len() == 3 && sa[0] == sb[0], "batch_matmul {sa:?} × {sb:?}");
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let n = if tb { sb[1] } else { sb[2] };
        assert_eq!(if tb { sb[2] } else { sb[1] }, k, "batch_matmul {sa:?} × {sb:?} (tb={tb})");
        let mut out = vec![R::ZERO; g * m * n];
        {
            let (va, vb) = (self.value(a), self.value(b));
            for i in 0..g {
                R::gemm(m, k, n, R::ONE, &va[i * m * k..], false, &vb[i * k * n..], tb, R::ZERO, &mut out[i * m * n..]);
            }
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(vec![g, m, n], out, Op::BatchMatMul { a, b, tb }, ng)
    }

    /// `x [.., n] + b [n]` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (_, n) = rows_cols(self.shape(x));
        assert_eq!(numel(self.shape(b)), n, "bias {:?} for {:?}", self.shape(b), self.shape(x));
        let bv = self.value(b);
        let out: Vec<R> = self.value(x).chunks(n).flat_map(|row| row.iter().zip(bv).map(|(a, c)| *a + *c)).collect();
        let ng = self.ng(x) || self.ng(b);
        self.push(self.shape(x).to_vec(), out, Op::AddBias(x, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x + *y).collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(self.shape(a).to_vec(), out, Op::Add(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x * *y).collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let s = R::from_f64(s);
        let out = self.value(x).iter().map(|v| *v * s).collect();
        self.push(self.shape(x).to_vec(), out, Op::Scale(x, s), self.ng(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = vec![R::ZERO; self.value(x).len()];
        R::sigmoid_slice(self.value(x), &mut out);
        self.push(self.shape(x).to_vec(), out, Op::Sigmoid(x), self.ng(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = vec![R::ZERO; self.value(x).len()];
        R::tanh_slice(self.value(x), &mut out);
        self.push(self.shape(x).to_vec(), out, Op::Tanh(x), self.ng(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = v.iter().map(|v| if *v > R::ZERO { *v } else { R::ZERO }).collect();
        if let Some(mut h) = self.kinks {
            for (i, v) in v.iter().enumerate() {
                if *v > R::ZERO {
                    h = mix(h, i as u64);
                }
            }
            self.kinks = Some(mix(h, 0x5e1));
        }
        self.push(self.shape(x).to_vec(), out, Op::Relu(x), self.ng(x))
    }

    /// Columns `[start, start + len)` of the last dimension.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let axis = self.shape(x).len() - 1;
        self.slice_axis(x, axis, start, len)
    }

    /// Indices `[start, start + len)` along `axis`.
    pub fn slice_axis(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let s = self.shape(x).to_vec();
        let (outer, dim, inner) = axis_view(&s, axis);
        assert!(start + len <= dim, "slice {start}+{len} of axis {axis} in {s:?}");
        let v = self.value(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&v[(o * dim + start) * inner..(o * dim + start + len) * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        self.push(shape, out, Op::SliceAxis { x, axis, start }, self.ng(x))
    }

    /// Concatenation along the last dimension.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty());
        let rows = rows_cols(self.shape(xs[0])).0;
        let widths: Vec<usize> = xs
            .iter()
            .map(|v| {
                let (r, c) = rows_cols(self.shape(*v));
                assert_eq!(r, rows, "concat row mismatch");
                c
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (v, w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*v)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = self.shape(xs[0]).to_vec();
        *shape.last_mut().unwrap() = total;
        let ng = xs.iter().any(|v| self.ng(*v));
        self.push(shape, out, Op::ConcatCols(xs.to_vec()), ng)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        assert_eq!(numel(&shape), numel(self.shape(x)), "reshape {:?} to {shape:?}", self.shape(x));
        let value = Rc::clone(&self.nodes[x.0].value);
        self.nodes.push(Node { shape, value, op: Op::Reshape(x), needs_grad: self.ng(x) });
        Var(self.nodes.len() - 1)
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Var {
        let shape = self.shape(x).to_vec();
        assert_eq!(perm.len(), shape.len());
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let map = permute_map(&shape, perm);
        let v = self.value(x);
        let out = map.iter().map(|&i| v[i]).collect();
        self.push(out_shape, out, Op::Permute { x, perm: perm.to_vec() }, self.ng(x))
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (_, n) = rows_cols(self.shape(x));
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        self.push(self.shape(x).to_vec(), out, Op::Softmax(x), self.ng(x))
    }

    /// Layer normalization over the last dimension with gain and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (rows, n) = rows_cols(self.shape(x));
        assert!(numel(self.shape(gamma)) == n && numel(self.shape(beta)) == n);
        let eps = R::from_f64(1e-5);
        let inv_n = R::from_f64(1.0 / n as f64);
        let mut xhat = vec![R::ZERO; rows * n];
        let mut rstd = vec![R::ZERO; rows];
        let mut out = vec![R::ZERO; rows * n];
        let (xv, g, b) = (self.value(x), self.value(gamma), self.value(beta));
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<R>() * inv_n;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<R>() * inv_n;
            let s = R::ONE / (var + eps).sqrt();
            rstd[r] = s;
            for j in 0..n {
                let h = (row[j] - mean) * s;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(self.shape(x).to_vec(), out, Op::LayerNorm { x, gamma, beta, xhat, rstd }, ng)
    }

    /// Mean over the middle axis of `[a, b, c]`, giving `[a, c]`.
    pub fn mean_axis1(&mut self, x: Var) -> Var {
        let s = self.shape(x).to_vec();
        assert_eq!(s.len(), 3, "mean_axis1 on {s:?}");
        let (a, b, c) = (s[0], s[1], s[2]);
        let inv = R::from_f64(1.0 / b as f64);
        let v = self.value(x);
        let mut out = vec![R::ZERO; a * c];
        for i in 0..a {
            for j in 0..b {
                for k in 0..c {
                    out[i * c + k] += v[(i * b + j) * c + k];
                }
            }
        }
        out.iter_mut().for_each(|o| *o *= inv);
        self.push(vec![a, c], out, Op::MeanAxis1(x), self.ng(x))
    }

    /// `x [B, C, H, W]` convolved with `w [O, C, kh, kw]` plus `b [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeom) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert!(xs.len() == 4 && ws.len() == 4 && ws[1] == xs[1], "conv2d {xs:?} with {ws:?}");
        assert_eq!((ws[2], ws[3]), geom.kernel);
        assert_eq!(numel(self.shape(b)), ws[0]);
        let (bn, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let o = ws[0];
        let (ho, wo) = geom.output(h, wd);
        let ckk = c * geom.kernel.0 * geom.kernel.1;
        let mut out = vec![R::ZERO; bn * o * ho * wo];
        let mut cols = vec![R::ZERO; ckk * ho * wo];
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        for n in 0..bn {
            im2col(&xv[n * c * h * wd..(n + 1) * c * h * wd], c, h, wd, &geom, &mut cols);
            let y = &mut out[n * o * ho * wo..(n + 1) * o * ho * wo];
            for (oc, row) in y.chunks_mut(ho * wo).enumerate() {
                row.fill(bv[oc]);
            }
            R::gemm(o, ckk, ho * wo, R::ONE, wv, false, &cols, false, R::ONE, y);
        }
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(vec![bn, o, ho, wo], out, Op::Conv2d { x, w, b, geom }, ng)
    }

    /// Non-overlapping `k × k` max pooling of `[B, C, H, W]`; trailing rows and
    /// columns that do not fill a window are dropped.
    pub fn max_pool2d(&mut self, x: Var, k: usize) -> Var {
        let s = self.shape(x).to_vec();
        assert_eq!(s.len(), 4);
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (h / k, w / k);
        let v = self.value(x);
        let mut out = Vec::with_capacity(planes * ho * wo);
        let mut argmax = Vec::with_capacity(planes * ho * wo);
        let mut hash = self.kinks;
        for p in 0..planes {
            let plane = &v[p * h * w..(p + 1) * h * w];
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = (i * k) * w + j * k;
                    for di in 0..k {
                        for dj in 0..k {
                            let idx = (i * k + di) * w + j * k + dj;
                            if plane[idx] > plane[best] {
                                best = idx;
                            }
                        }
                    }
                    if let Some(h) = hash.as_mut() {
                        *h = mix(*h, best as u64);
                    }
                    out.push(plane[best]);
                    argmax.push(best as u32);
                }
            }
        }
        self.kinks = hash;
        self.push(vec![s[0], s[1], ho, wo], out, Op::MaxPool2d { x, argmax }, self.ng(x))
    }

    /// Mean softmax cross-entropy of `logits [B, K]` against `labels`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let (rows, k) = rows_cols(self.shape(logits));
        assert_eq!(rows, labels.len(), "one label per row");
        let mut probs = self.value(logits).to_vec();
        let mut loss = 0.0;
        for (row, &y) in probs.chunks_mut(k).zip(labels) {
            assert!(y < k, "label {y} out of range for {k} classes");
            let m = row.iter().copied().fold(row[0], R::max);
            let lse = m.to_f64() + row.iter().map(|v| (*v - m).to_f64().exp()).sum::<f64>().ln();
            loss += lse - row[y].to_f64();
            softmax_in_place(row);
        }
        let loss = R::from_f64(loss / rows as f64);
        self.push(vec![1], vec![loss], Op::CrossEntropy { logits, labels: labels.to_vec(), probs }, self.ng(logits))
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients<R> {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Vec<R>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![R::ONE]);
        for i in (0..=loss.0).rev() {
            let Some(mut dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(f) = self.fault {
                if f.op == node.op.kind() {
                    let s = R::from_f64(f.scale);
                    dy.iter_mut().for_each(|g| *g *= s);
                }
            }
            match node.op {
                Op::Param(_) => grads[i] = Some(dy),
                // The gradient of a reshape is its output gradient, so pass the
                // buffer on when nothing has accumulated yet.
                Op::Reshape(x) if self.ng(x) && grads[x.0].is_none() => grads[x.0] = Some(dy),
                _ => self.backward_node(node, &dy, &mut grads),
            }
        }
        Gradients { grads }
    }

    fn backward_node(&self, node: &Node<R>, dy: &[R], grads: &mut [Option<Vec<R>>]) {
        let nodes = &self.nodes;
        // Gradient buffer of `v`, allocated on first use; None when `v` does not
        // need a gradient.
        macro_rules! g {
            ($v:expr) => {{
                let v: Var = $v;
                if nodes[v.0].needs_grad {
                    Some(grads[v.0].get_or_insert_with(|| vec![R::ZERO; nodes[v.0].value.len()]))
                } else {
                    None
                }
            }};
        }
        let val = |v: Var| nodes[v.0].value.as_slice();
        let shape = |v: Var| nodes[v.0].shape.as_slice();
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = rows_cols(shape(*a));
                let n = shape(*b)[1];
                if let Some(da) = g!(*a) {
                    R::gemm(m, n, k, R::ONE, dy, false, val(*b), true, R::ONE, da);
                }
                if let Some(db) = g!(*b) {
                    R::gemm(k, m, n, R::ONE, val(*a), true, dy, false, R::ONE, db);
                }
            }
            Op::BatchMatMul { a, b, tb } => {
                let (sa, sb) = (shape(*a), shape(*b));
                let (gn, m, k) = (sa[0], sa[1], sa[2]);
                let n = if *tb { sb[1] } else { sb[2] };
                if let Some(da) = g!(*a) {
                    for i in 0..gn {
                        // da = dy × op(b)ᵀ
                        R::gemm(m, n, k, R::ONE, &dy[i * m * n..], false, &val(*b)[i * k * n..], !*tb, R::ONE, &mut da[i * m * k..]);
                    }
                }
                if let Some(db) = g!(*b) {
                    for i in 0..gn {
                        let (av, dyi) = (&val(*a)[i * m * k..], &dy[i * m * n..]);
                        if *tb {
                            // db [n, k] = dyᵀ × a
                            R::gemm(n, m, k, R::ONE, dyi, true, av, false, R::ONE, &mut db[i * k * n..]);
                        } else {
                            R::gemm(k, m, n, R::ONE, av, true, dyi, false, R::ONE, &mut db[i * k * n..]);
                        }
                    }
                }
            }
            Op::AddBias(x, b) => {
                if let Some(dx) = g!(*x) {
                    dx.iter_mut().zip(dy).for_each(|(d, g)| *d += *g);
                }
                if let Some(db) = g!(*b) {
                    let n = db.len();
                    for row in dy.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, g)| *d += *g);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = g!(v) {
                        d.iter_mut().zip(dy).for_each(|(d, g)| *d += *g);
                    }
                }
            }
            Op::Mul(a, b) => {
                if let Some(da) = g!(*a) {
                    for ((d, g), o) in da.iter_mut().zip(dy).zip(val(*b)) {
                        *d += *g * *o;
                    }
                }
                if let Some(db) = g!(*b) {
                    for ((d, g), o) in db.iter_mut().zip(dy).zip(val(*a)) {
                        *d += *g * *o;
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(dx) = g!(*x) {
                    dx.iter_mut().zip(dy).for_each(|(d, g)| *d += *g * *s);
                }
            }
            Op::Sigmoid(x) => {
                if let Some(dx) = g!(*x) {
                    for ((d, g), y) in dx.iter_mut().zip(dy).zip(node.value.iter()) {
                        *d += *g * *y * (R::ONE - *y);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(dx) = g!(*x) {
                    for ((d, g), y) in dx.iter_mut().zip(dy).zip(node.value.iter()) {
                        *d += *g * (R::ONE - *y * *y);
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(dx) = g!(*x) {
                    for ((d, g), y) in dx.iter_mut().zip(dy).zip(node.value.iter()) {
                        if *y > R::ZERO {
                            *d += *g;
                        }
                    }
                }
            }
            Op::SliceAxis { x, axis, start } => {
                let (outer, dim, inner) = axis_view(shape(*x), *axis);
                let len = node.shape[*axis];
                if let Some(dx) = g!(*x) {
                    for o in 0..outer {
                        let dst = &mut dx[(o * dim + start) * inner..(o * dim + start + len) * inner];
                        let src = &dy[o * len * inner..(o + 1) * len * inner];
                        dst.iter_mut().zip(src).for_each(|(d, g)| *d += *g);
                    }
                }
            }
            Op::ConcatCols(xs) => {
                let total = *node.shape.last().unwrap();
                let mut offset = 0;
                for v in xs {
                    let w = rows_cols(shape(*v)).1;
                    if let Some(dv) = g!(*v) {
                        for (drow, grow) in dv.chunks_mut(w).zip(dy.chunks(total)) {
                            drow.iter_mut().zip(&grow[offset..offset + w]).for_each(|(d, g)| *d += *g);
                        }
                    }
                    offset += w;
                }
            }
            Op::Reshape(x) => {
                if let Some(dx) = g!(*x) {
                    dx.iter_mut().zip(dy).for_each(|(d, g)| *d += *g);
                }
            }
            Op::Permute { x, perm } => {
                if let Some(dx) = g!(*x) {
                    let map = permute_map(shape(*x), perm);
                    for (o, &i) in map.iter().enumerate() {
                        dx[i] += dy[o];
                    }
                }
            }
            Op::Softmax(x) => {
                let n = *node.shape.last().unwrap();
                if let Some(dx) = g!(*x) {
                    for ((drow, grow), yrow) in dx.chunks_mut(n).zip(dy.chunks(n)).zip(node.value.chunks(n)) {
                        let dot: R = grow.iter().zip(yrow).map(|(g, y)| *g * *y).sum();
                        for ((d, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += *y * (*g - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let n = *node.shape.last().unwrap();
                let gv = val(*gamma);
                if let Some(dg) = g!(*gamma) {
                    for (grow, hrow) in dy.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            dg[j] += grow[j] * hrow[j];
                        }
                    }
                }
                if let Some(db) = g!(*beta) {
                    for grow in dy.chunks(n) {
                        db.iter_mut().zip(grow).for_each(|(d, g)| *d += *g);
                    }
                }
                if let Some(dx) = g!(*x) {
                    let inv_n = R::from_f64(1.0 / n as f64);
                    for (r, (grow, hrow)) in dy.chunks(n).zip(xhat.chunks(n)).enumerate() {
                        let mut mean_d = R::ZERO;
                        let mut mean_dh = R::ZERO;
                        for j in 0..n {
                            let d = grow[j] * gv[j];
                            mean_d += d;
                            mean_dh += d * hrow[j];
                        }
                        mean_d *= inv_n;
                        mean_dh *= inv_n;
                        for j in 0..n {
                            let d = grow[j] * gv[j];
                            dx[r * n + j] += rstd[r] * (d - mean_d - hrow[j] * mean_dh);
                        }
                    }
                }
            }
            Op::MeanAxis1(x) => {
                let s = shape(*x);
                let (a, b, c) = (s[0], s[1], s[2]);
                let inv = R::from_f64(1.0 / b as f64);
                if let Some(dx) = g!(*x) {
                    for i in 0..a {
                        for j in 0..b {
                            for k in 0..c {
                                dx[(i * b + j) * c + k] += dy[i * c + k] * inv;
                            }
                        }
                    }
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let xs = shape(*x);
                let o = shape(*w)[0];
                let (bn, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let (ho, wo) = geom.output(h, wd);
                let ckk = c * geom.kernel.0 * geom.kernel.1;
                let plane = ho * wo;
                if let Some(db) = g!(*b) {
                    for n in 0..bn {
                        for oc in 0..o {
                            let s: R = dy[(n * o + oc) * plane..(n * o + oc + 1) * plane].iter().copied().sum();
                            db[oc] += s;
                        }
                    }
                }
                let mut cols = vec![R::ZERO; ckk * plane];
                let xv = val(*x);
                if nodes[w.0].needs_grad {
                    let dw = grads[w.0].get_or_insert_with(|| vec![R::ZERO; nodes[w.0].value.len()]);
                    for n in 0..bn {
                        im2col(&xv[n * c * h * wd..(n + 1) * c * h * wd], c, h, wd, geom, &mut cols);
                        R::gemm(o, plane, ckk, R::ONE, &dy[n * o * plane..], false, &cols, true, R::ONE, dw);
                    }
                }
                if let Some(dx) = g!(*x) {
                    let wv = val(*w);
                    for n in 0..bn {
                        R::gemm(ckk, o, plane, R::ONE, wv, true, &dy[n * o * plane..], false, R::ZERO, &mut cols);
                        col2im(&cols, c, h, wd, geom, &mut dx[n * c * h * wd..(n + 1) * c * h * wd]);
                    }
                }
            }
            Op::MaxPool2d { x, argmax } => {
                let s = shape(*x);
                let (h, w) = (s[2], s[3]);
                let per_plane = node.shape[2] * node.shape[3];
                if let Some(dx) = g!(*x) {
                    for (o, (&a, g)) in argmax.iter().zip(dy).enumerate() {
                        let p = o / per_plane;
                        dx[p * h * w + a as usize] += *g;
                    }
                }
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let k = *shape(*logits).last().unwrap();
                let scale = dy[0] * R::from_f64(1.0 / labels.len() as f64);
                if let Some(dl) = g!(*logits) {
                    for (r, &y) in labels.iter().enumerate() {
                        for j in 0..k {
                            let target = if j == y { R::ONE } else { R::ZERO };
                            dl[r * k + j] += (probs[r * k + j] - target) * scale;
                        }
                    }
                }
            }
        }
    }

    /// Gradient of parameter block `index`, zero when the loss does not
    /// depend on it.
    pub fn param_grad(&self, grads: &Gradients<R>, index: usize, len: usize) -> Vec<R> {
        let mut out = vec![R::ZERO; len];
        for (i, n) in self.nodes.iter().enumerate() {
            if let Op::Param(p) = n.op {
                if p == index {
                    if let Some(g) = &grads.grads[i] {
                        out.iter_mut().zip(g).for_each(|(o, v)| *o += *v);
                    }
                }
            }
        }
        out
    }
}

pub fn sigmoid<R: Real>(v: R) -> R {
    if v >= R::ZERO {
        R::ONE / (R::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (R::ONE + e)
    }
}

pub fn softmax_in_place<R: Real>(row: &mut [R]) {
    let m = row.iter().copied().fold(row[0], R::max);
    let mut sum = R::ZERO;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    let inv = R::ONE / sum;
    row.iter_mut().for_each(|v| *v *= inv);
}

/// For each output element of a permutation, the linear index of its input.
fn permute_map(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let rank = shape.len();
    let mut in_strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total = numel(shape);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    for _ in 0..total {
        map.push(idx.iter().zip(&strides).map(|(i, s)| i * s).sum());
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    map
}

/// Unfolds one `[C, H, W]` image into `[C·kh·kw, Ho·Wo]` patch columns.
fn im2col<R: Real>(x: &[R], c: usize, h: usize, w: usize, g: &ConvGeom, cols: &mut [R]) {
    let (kh, kw) = g.kernel;
    let (ph, pw) = g.pad;
    let (sh, sw) = g.stride;
    let (ho, wo) = g.output(h, w);
    let mut r = 0;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &mut cols[r * ho * wo..(r + 1) * ho * wo];
                for oi in 0..ho {
                    let ii = (oi * sh + ki) as isize - ph as isize;
                    let dst = &mut row[oi * wo..(oi + 1) * wo];
                    if ii < 0 || ii >= h as isize {
                        dst.fill(R::ZERO);
                        continue;
                    }
                    let src = &x[(ci * h + ii as usize) * w..(ci * h + ii as usize + 1) * w];
                    let (lo, hi) = valid_cols(wo, w, sw, kj, pw);
                    dst[..lo].fill(R::ZERO);
                    dst[hi..].fill(R::ZERO);
                    if sw == 1 {
                        dst[lo..hi].copy_from_slice(&src[lo + kj - pw..hi + kj - pw]);
                    } else {
                        for (oj, d) in (lo..hi).zip(&mut dst[lo..hi]) {
                            *d = src[oj * sw + kj - pw];
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

/// Output columns `[lo, hi)` whose input column `oj * sw + kj - pw` lies in
/// `[0, w)`.
fn valid_cols(wo: usize, w: usize, sw: usize, kj: usize, pw: usize) -> (usize, usize) {
    let lo = pw.saturating_sub(kj).div_ceil(sw).min(wo);
    // Largest oj with oj * sw + kj < w + pw.
    let hi = if w + pw > kj { ((w + pw - kj - 1) / sw + 1).min(wo) } else { 0 };
    (lo, hi.max(lo))
}

/// Adjoint of [`im2col`]: accumulates patch columns back into the image.
fn col2im<R: Real>(cols: &[R], c: usize, h: usize, w: usize, g: &ConvGeom, x: &mut [R]) {
    let (kh, kw) = g.kernel;
    let (ph, pw) = g.pad;
    let (sh, sw) = g.stride;
    let (ho, wo) = g.output(h, w);
    let mut r = 0;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &cols[r * ho * wo..(r + 1) * ho * wo];
                for oi in 0..ho {
                    let ii = (oi * sh + ki) as isize - ph as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let dst = &mut x[(ci * h + ii as usize) * w..(ci * h + ii as usize + 1) * w];
                    let (lo, hi) = valid_cols(wo, w, sw, kj, pw);
                    let src = &row[oi * wo..(oi + 1) * wo];
                    if sw == 1 {
                        let d = &mut dst[lo + kj - pw..hi + kj - pw];
                        d.iter_mut().zip(&src[lo..hi]).for_each(|(d, v)| *d += *v);
                    } else {
                        for oj in lo..hi {
                            dst[oj * sw + kj - pw] += src[oj];
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Checks every parameter gradient of `build` against central differences.
    /// `build` receives the tape and the current parameter values and returns
    /// a scalar loss.
    fn check(shapes: &[Vec<usize>], seed: u64, build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params: Vec<Vec<f64>> = shapes.iter().map(|s| rand_vec(&mut rng, numel(s))).collect();
        let eval = |params: &[Vec<f64>]| -> (Tape<f64>, Var, Vec<Var>) {
            let mut t = Tape::new();
            let vars: Vec<Var> = params.iter().zip(shapes).enumerate().map(|(i, (p, s))| t.param(i, s.clone(), p.clone())).collect();
            let loss = build(&mut t, &vars);
            (t, loss, vars)
        };
        let (tape, loss, _) = eval(&params);
        let grads = tape.backward(loss);
        let h = 1e-6;
        for b in 0..params.len() {
            let analytic = tape.param_grad(&grads, b, params[b].len());
            for i in 0..params[b].len() {
                let orig = params[b][i];
                params[b][i] = orig + h;
                let (t1, l1, _) = eval(&params);
                params[b][i] = orig - h;
                let (t2, l2, _) = eval(&params);
                params[b][i] = orig;
                let numeric = (t1.value(l1)[0] - t2.value(l2)[0]) / (2.0 * h);
                let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
                assert!(err < 1e-6, "block {b} entry {i}: analytic {} numeric {numeric}", analytic[i]);
            }
        }
    }

    /// Reduces any tensor to a scalar with fixed pseudo-random weights so
    /// every output element matters.
    fn reduce(t: &mut Tape<f64>, y: Var) -> Var {
        let n = t.value(y).len();
        let w: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 / 6.0 - 1.0).collect();
        let wv = t.input(t.shape(y).to_vec(), w);
        let p = t.mul(y, wv);
        let flat = t.reshape(p, vec![1, n]);
        let ones = t.input(vec![n, 1], vec![1.0; n]);
        let s = t.matmul(flat, ones);
        t.reshape(s, vec![1])
    }

    #[test]
    fn matmul_and_bias_gradients() {
        check(&[vec![3, 4], vec![4, 5], vec![5]], 1, |t, p| {
            let y = t.matmul(p[0], p[1]);
            let y = t.add_bias(y, p[2]);
            reduce(t, y)
        });
    }

    #[test]
    fn batch_matmul_gradients() {
        for tb in [false, true] {
            let b_shape = if tb { vec![2, 5, 4] } else { vec![2, 4, 5] };
            check(&[vec![2, 3, 4], b_shape], 2, move |t, p| {
                let y = t.batch_matmul(p[0], p[1], tb);
                reduce(t, y)
            });
        }
    }

    #[test]
    fn elementwise_gradients() {
        check(&[vec![2, 6], vec![2, 6]], 3, |t, p| {
            let a = t.sigmoid(p[0]);
            let b = t.tanh(p[1]);
            let c = t.mul(a, b);
            let d = t.add(c, p[0]);
            let e = t.scale(d, -1.7);
            let f = t.relu(e);
            reduce(t, f)
        });
    }

    #[test]
    fn slicing_concat_reshape_permute_gradients() {
        check(&[vec![2, 3, 4], vec![6, 2]], 4, |t, p| {
            let a = t.permute(p[0], &[2, 0, 1]);
            let a = t.reshape(a, vec![4, 6]);
            let s = t.slice_cols(a, 1, 3);
            let r = t.reshape(p[1], vec![4, 3]);
            let c = t.concat_cols(&[s, r, s]);
            let c = t.reshape(c, vec![2, 2, 9]);
            let m = t.slice_axis(c, 1, 1, 1);
            let c = t.slice_axis(c, 0, 1, 1);
            let m = t.reshape(m, vec![1, 2, 9]);
            let c = t.add(c, m);
            reduce(t, c)
        });
    }

    #[test]
    fn softmax_layernorm_mean_gradients() {
        check(&[vec![2, 3, 5], vec![5], vec![5]], 5, |t, p| {
            let n = t.layer_norm(p[0], p[1], p[2]);
            let s = t.softmax(n);
            let m = t.mean_axis1(s);
            reduce(t, m)
        });
    }

    #[test]
    fn conv_and_pool_gradients() {
        for geom in [ConvGeom::same(3, 3), ConvGeom { kernel: (3, 1), pad: (1, 0), stride: (1, 1) }, ConvGeom { kernel: (1, 5), pad: (0, 2), stride: (1, 2) }] {
            check(&[vec![2, 2, 5, 7], vec![3, 2, geom.kernel.0, geom.kernel.1], vec![3]], 6, move |t, p| {
                let y = t.conv2d(p[0], p[1], p[2], geom);
                let y = t.max_pool2d(y, 2);
                reduce(t, y)
            });
        }
    }

    #[test]
    fn cross_entropy_gradient_and_value() {
        check(&[vec![3, 4]], 7, |t, p| t.cross_entropy(p[0], &[0, 3, 1]));
        let mut t = Tape::<f64>::new();
        let z = t.input(vec![2, 12], vec![0.3; 24]);
        let l = t.cross_entropy(z, &[0, 5]);
        assert!((t.value(l)[0] - 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fault_scales_the_named_rule() {
        let mut t = Tape::<f64>::with_fault(Some(Fault { op: OpKind::Tanh, scale: 2.0 }));
        let x = t.param(0, vec![1], vec![0.5]);
        let y = t.tanh(x);
        let y = t.reshape(y, vec![1]);
        let g = t.backward(y);
        let want = 2.0 * (1.0 - 0.5f64.tanh().powi(2));
        assert!((t.param_grad(&g, 0, 1)[0] - want).abs() < 1e-15);
    }

    #[test]
    fn kink_signature_tracks_relu_pattern() {
        let sig = |v: f64| {
            let mut t = Tape::<f64>::new().track_kinks();
            let x = t.input(vec![2], vec![v, 1.0]);
            t.relu(x);
            t.kink_signature()
        };
        assert_eq!(sig(0.5), sig(0.7));
        assert_ne!(sig(0.5), sig(-0.5));
    }

    #[test]
    fn permute_matches_manual_transpose() {
        let mut t = Tape::<f64>::new();
        let x = t.input(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let y = t.permute(x, &[1, 0]);
        assert_eq!(t.value(y), &[1., 4., 2., 5., 3., 6.]);
        assert_eq!(t.shape(y), &[3, 2]);
    }
}
