use super::kernels::{self, ConvDims};
use super::{Result, Tensor, TensorError, COSINE_EPS};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Log1p(Var),
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        dims: ConvDims,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Reduce {
        x: Var,
        outer: usize,
        axis_len: usize,
        inner: usize,
        mean: bool,
    },
    Reshape(Var),
    Transpose {
        x: Var,
        rows: usize,
        cols: usize,
    },
    Narrow {
        x: Var,
        outer: usize,
        axis_len: usize,
        inner: usize,
        start: usize,
    },
    Stack(Vec<Var>),
    Cosine {
        a: Var,
        b: Var,
        na: f32,
        nb: f32,
        a_clamped: bool,
        b_clamped: bool,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Reduction kind for [`Tape::reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

/// Records operations in execution order, which is a topological order of
/// the compute graph. A tape is single-threaded; build one per step.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::Dimension {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::MatMul { a, b, m, k, n },
            rg,
        ))
    }

    /// Adds a bias vector `[n]` to every row of `x` (last dimension `n`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        let n = *sx.last().unwrap_or(&1);
        if sb.len() != 1 || sb[0] != n || sx.is_empty() {
            return Err(TensorError::Dimension {
                op: "add_bias",
                lhs: sx.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let shape = sx.to_vec();
        let b = self.value(bias).data();
        let data: Vec<f32> = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(v, bv)| v + bv))
            .collect();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(Tensor::new(shape, data)?, Op::AddBias { x, bias }, rg))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f32, f32) -> f32,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Dimension {
                op: name,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let src = self.value(x);
        let value = Tensor {
            shape: src.shape().to_vec(),
            data: src.data().iter().map(|&v| f(v)).collect(),
        };
        let rg = self.rg(&[x]);
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v < 0.0 { 0.0 } else { v }, Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f32::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|&&v| !(v > 0.0)) {
            return Err(TensorError::Domain {
                op: "log",
                reason: format!("non-positive input {bad}"),
            });
        }
        Ok(self.unary(x, f32::ln, Op::Log(x)))
    }

    /// `ln(1 + x)`, accurate for small `x`.
    pub fn log1p(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|&&v| !(v > -1.0)) {
            return Err(TensorError::Domain {
                op: "log1p",
                reason: format!("input {bad} not above -1"),
            });
        }
        Ok(self.unary(x, f32::ln_1p, Op::Log1p(x)))
    }

    /// Temporal cross-correlation. `x` is `[C_in, H, W]`, `kernel` is
    /// `[C_out, C_in, 1, K]` with odd `K`, `bias` is `[C_out]`. Zero
    /// same-padding keeps the output width equal to `W`; the sensor axis `H`
    /// is never mixed.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kernel).to_vec());
        let dim_err = || TensorError::Dimension {
            op: "conv2d",
            lhs: sx.clone(),
            rhs: sk.clone(),
        };
        if sx.len() != 3 || sk.len() != 4 || sk[1] != sx[0] || sk[2] != 1 || sk[3] % 2 == 0 {
            return Err(dim_err());
        }
        let dims = ConvDims {
            c_in: sx[0],
            c_out: sk[0],
            height: sx[1],
            width: sx[2],
            kw: sk[3],
        };
        let plane = dims.height * dims.width;
        let mut out = vec![0.0; dims.c_out * plane];
        if let Some(b) = bias {
            let sb = self.shape(b);
            if sb != [dims.c_out] {
                return Err(TensorError::Dimension {
                    op: "conv2d bias",
                    lhs: sk.clone(),
                    rhs: sb.to_vec(),
                });
            }
            for (co, &bv) in self.value(b).data().iter().enumerate() {
                out[co * plane..(co + 1) * plane].fill(bv);
            }
        }
        kernels::conv_forward(
            self.value(x).data(),
            self.value(kernel).data(),
            &mut out,
            dims,
        );
        let mut deps = vec![x, kernel];
        deps.extend(bias);
        let rg = self.rg(&deps);
        let value = Tensor::new(vec![dims.c_out, dims.height, dims.width], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                kernel,
                bias,
                dims,
            },
            rg,
        ))
    }

    /// Max over non-overlapping windows along the last axis. A trailing
    /// remainder shorter than `window` is dropped.
    pub fn maxpool_temporal(&mut self, x: Var, window: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let w = *sx.last().unwrap_or(&0);
        if window == 0 || w < window.max(2) {
            return Err(TensorError::Degenerate {
                op: "maxpool_temporal",
                reason: format!("temporal width {w} is smaller than pooling window {window}"),
            });
        }
        let rows = self.value(x).len() / w;
        let (data, argmax) = kernels::maxpool_forward(self.value(x).data(), rows, w, window);
        let mut shape = sx;
        *shape.last_mut().unwrap() = w / window;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(shape, data)?, Op::MaxPool { x, argmax }, rg))
    }

    pub fn reduce(&mut self, x: Var, kind: Reduction, axis: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() {
            return Err(TensorError::Degenerate {
                op: "reduce",
                reason: format!("axis {axis} out of range for shape {sx:?}"),
            });
        }
        let outer: usize = sx[..axis].iter().product();
        let axis_len = sx[axis];
        let inner: usize = sx[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![0.0f32; outer * inner];
        for o in 0..outer {
            for a in 0..axis_len {
                let base = (o * axis_len + a) * inner;
                for (i, acc) in out[o * inner..(o + 1) * inner].iter_mut().enumerate() {
                    *acc += src[base + i];
                }
            }
        }
        let mean = kind == Reduction::Mean;
        if mean {
            let inv = 1.0 / axis_len as f32;
            out.iter_mut().for_each(|v| *v *= inv);
        }
        let mut shape = sx;
        shape.remove(axis);
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Reduce {
                x,
                outer,
                axis_len,
                inner,
                mean,
            },
            rg,
        ))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let flat = self.reshape(x, &[self.value(x).len()])?;
        self.reduce(flat, Reduction::Sum, 0)
    }

    /// Mean of all elements as a scalar.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let flat = self.reshape(x, &[self.value(x).len()])?;
        self.reduce(flat, Reduction::Mean, 0)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 {
            return Err(TensorError::Dimension {
                op: "transpose",
                lhs: sx,
                rhs: vec![],
            });
        }
        let (rows, cols) = (sx[0], sx[1]);
        let src = self.value(x).data();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = src[r * cols + c];
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(vec![cols, rows], out)?,
            Op::Transpose { x, rows, cols },
            rg,
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() || len == 0 || start + len > sx[axis] {
            return Err(TensorError::Dimension {
                op: "narrow",
                lhs: sx,
                rhs: vec![axis, start, len],
            });
        }
        let outer: usize = sx[..axis].iter().product();
        let axis_len = sx[axis];
        let inner: usize = sx[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * axis_len + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = sx;
        shape[axis] = len;
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Narrow {
                x,
                outer,
                axis_len,
                inner,
                start,
            },
            rg,
        ))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, vars: &[Var]) -> Result<Var> {
        let first = vars.first().ok_or_else(|| TensorError::Degenerate {
            op: "stack",
            reason: "no inputs".into(),
        })?;
        let s0 = self.shape(*first).to_vec();
        let mut data = Vec::with_capacity(s0.iter().product::<usize>() * vars.len());
        for v in vars {
            if self.shape(*v) != s0.as_slice() {
                return Err(TensorError::Dimension {
                    op: "stack",
                    lhs: s0,
                    rhs: self.shape(*v).to_vec(),
                });
            }
            data.extend_from_slice(self.value(*v).data());
        }
        let mut shape = vec![vars.len()];
        shape.extend(&s0);
        let rg = self.rg(vars);
        Ok(self.push(Tensor::new(shape, data)?, Op::Stack(vars.to_vec()), rg))
    }

    /// Cosine similarity of two equally sized tensors, treated as flat
    /// vectors. Norms are clamped from below at [`COSINE_EPS`], so zero
    /// inputs give 0 instead of an error.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(TensorError::Dimension {
                op: "cosine_similarity",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let dot: f32 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let raw_na = va.iter().map(|x| x * x).sum::<f32>().sqrt();
        let raw_nb = vb.iter().map(|x| x * x).sum::<f32>().sqrt();
        let (na, nb) = (raw_na.max(COSINE_EPS), raw_nb.max(COSINE_EPS));
        let c = dot / (na * nb);
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor::scalar(c),
            Op::Cosine {
                a,
                b,
                na,
                nb,
                a_clamped: raw_na < COSINE_EPS,
                b_clamped: raw_nb < COSINE_EPS,
            },
            rg,
        ))
    }

    /// Mean squared error between two equally shaped tensors.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let diff = self.sub(pred, target)?;
        let sq = self.mul(diff, diff)?;
        self.mean(sq)
    }

    /// Sum of a non-empty list of equally shaped tensors.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var> {
        let (first, rest) = vars.split_first().ok_or_else(|| TensorError::Degenerate {
            op: "add_all",
            reason: "no inputs".into(),
        })?;
        rest.iter().try_fold(*first, |acc, v| self.add(acc, *v))
    }

    /// Reverse sweep from a scalar root. Gradients accumulate additively
    /// across fan-out. Every leaf that requires a gradient gets one, zero if
    /// the root does not depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root.value.shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; n];
        if root.requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => Some(Tensor {
                    shape: node.value.shape().to_vec(),
                    data: g.unwrap_or_else(|| vec![0.0; node.value.len()]),
                }),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                if let Some(ga) = self.slot(grads, *a) {
                    kernels::matmul_a_bt_acc(g, val(*b), ga, *m, *k, *n);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    kernels::matmul_at_b_acc(val(*a), g, gb, *m, *k, *n);
                }
            }
            Op::AddBias { x, bias } => {
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
                if let Some(gb) = self.slot(grads, *bias) {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    add_into(gb, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(o, gv)| *o -= gv);
                }
            }
            Op::Mul(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gv), bv) in ga.iter_mut().zip(g).zip(val(*b)) {
                        *o += gv * bv;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((o, gv), av) in gb.iter_mut().zip(g).zip(val(*a)) {
                        *o += gv * av;
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(gx) = self.slot(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(o, gv)| *o += s * gv);
                }
            }
            Op::Relu(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, gv), y) in gx.iter_mut().zip(g).zip(out.data()) {
                        if *y > 0.0 {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Exp(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, gv), y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *o += gv * y;
                    }
                }
            }
            Op::Log(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, gv), xv) in gx.iter_mut().zip(g).zip(val(*x)) {
                        *o += gv / xv;
                    }
                }
            }
            Op::Log1p(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, gv), xv) in gx.iter_mut().zip(g).zip(val(*x)) {
                        *o += gv / (1.0 + xv);
                    }
                }
            }
            Op::Conv2d {
                x,
                kernel,
                bias,
                dims,
            } => {
                let gx = self.slot(grads, *x).map(std::mem::take);
                let gk = self.slot(grads, *kernel).map(std::mem::take);
                let (mut gx, mut gk) = (gx, gk);
                kernels::conv_backward(
                    val(*x),
                    val(*kernel),
                    g,
                    gx.as_deref_mut(),
                    gk.as_deref_mut(),
                    *dims,
                );
                if let Some(v) = gx {
                    grads[x.0] = Some(v);
                }
                if let Some(v) = gk {
                    grads[kernel.0] = Some(v);
                }
                if let Some(b) = bias {
                    if let Some(gb) = self.slot(grads, *b) {
                        let plane = dims.height * dims.width;
                        for (co, o) in gb.iter_mut().enumerate() {
                            *o += g[co * plane..(co + 1) * plane].iter().sum::<f32>();
                        }
                    }
                }
            }
            Op::MaxPool { x, argmax } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for (gv, &src) in g.iter().zip(argmax) {
                        gx[src] += gv;
                    }
                }
            }
            Op::Reduce {
                x,
                outer,
                axis_len,
                inner,
                mean,
            } => {
                if let Some(gx) = self.slot(grads, *x) {
                    let s = if *mean { 1.0 / *axis_len as f32 } else { 1.0 };
                    for o in 0..*outer {
                        let g_row = &g[o * inner..(o + 1) * inner];
                        for a in 0..*axis_len {
                            let base = (o * axis_len + a) * inner;
                            for (dst, gv) in gx[base..base + inner].iter_mut().zip(g_row) {
                                *dst += s * gv;
                            }
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
            }
            Op::Transpose { x, rows, cols } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for r in 0..*rows {
                        for c in 0..*cols {
                            gx[r * cols + c] += g[c * rows + r];
                        }
                    }
                }
            }
            Op::Narrow {
                x,
                outer,
                axis_len,
                inner,
                start,
            } => {
                if let Some(gx) = self.slot(grads, *x) {
                    let chunk = g.len() / outer;
                    for o in 0..*outer {
                        let base = (o * axis_len + start) * inner;
                        add_into(&mut gx[base..base + chunk], &g[o * chunk..(o + 1) * chunk]);
                    }
                }
            }
            Op::Stack(vars) => {
                let size = g.len() / vars.len();
                for (i, v) in vars.iter().enumerate() {
                    if let Some(gv) = self.slot(grads, *v) {
                        add_into(gv, &g[i * size..(i + 1) * size]);
                    }
                }
            }
            Op::Cosine {
                a,
                b,
                na,
                nb,
                a_clamped,
                b_clamped,
            } => {
                let c = out.data()[0];
                let g0 = g[0];
                let inv = 1.0 / (na * nb);
                if let Some(ga) = self.slot(grads, *a) {
                    let self_term = if *a_clamped { 0.0 } else { c / (na * na) };
                    for ((o, bv), av) in ga.iter_mut().zip(val(*b)).zip(val(*a)) {
                        *o += g0 * (bv * inv - self_term * av);
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    let self_term = if *b_clamped { 0.0 } else { c / (nb * nb) };
                    for ((o, av), bv) in gb.iter_mut().zip(val(*a)).zip(val(*b)) {
                        *o += g0 * (av * inv - self_term * bv);
                    }
                }
            }
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f32>>], v: Var) -> Option<&'g mut Vec<f32>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}
