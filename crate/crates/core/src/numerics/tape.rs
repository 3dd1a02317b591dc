//! Define-by-run reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value. Nodes whose inputs do
//! not require gradients are recorded as constants, so a tape with no
//! gradient-requiring leaves doubles as a plain inference engine.

use super::kernels::{self, ConvGeom};
use super::Tensor;
use crate::error::{contract_err, shape_err, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Spatial padding mode for [`Tape::conv2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// `(K - 1) / 2` zeros on every side.
    Same,
    Valid,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt { a: Var, b: Var, alpha: f32 },
    Add(Var, Var),
    AddBias { x: Var, bias: Var },
    MulConst { x: Var, factor: Vec<f32> },
    Scale { x: Var, s: f32 },
    Relu(Var),
    Gelu(Var),
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        cols: Vec<f32>,
    },
    MaxPool { x: Var, argmax: Vec<u32> },
    Softmax { x: Var, n: usize },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    Reshape(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Stack(Vec<Var>),
    Sum(Var),
    Mean(Var),
    L1Mean { x: Var, target: Vec<f32> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed operations; inputs always precede outputs.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every gradient-requiring leaf.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
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

    /// Drops every node recorded after `len` (a previous [`Tape::len`]).
    pub fn rewind(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, inputs: &[Var], op: impl FnOnce() -> Op) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if rg { op() } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad: rg,
        });
        Var(self.nodes.len() - 1)
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match self.shape(v) {
            &[r, c] => Ok((r, c)),
            s => Err(shape_err!("{what}: expected a matrix, got shape {s:?}")),
        }
    }

    /// `a[r×k] · b[k×c]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, k) = self.matrix_dims(a, "matmul lhs")?;
        let (k2, c) = self.matrix_dims(b, "matmul rhs")?;
        if k != k2 {
            return Err(shape_err!("matmul inner dimensions differ: {k} vs {k2}"));
        }
        let out = kernels::gemm_new(r, k, c, 1.0, self.value(a).data(), false, self.value(b).data(), false);
        let t = Tensor::new(&[r, c], out)?;
        Ok(self.push(t, &[a, b], || Op::MatMul(a, b)))
    }

    /// `alpha · a[r×k] · b[c×k]ᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var, alpha: f32) -> Result<Var> {
        let (r, k) = self.matrix_dims(a, "matmul_nt lhs")?;
        let (c, k2) = self.matrix_dims(b, "matmul_nt rhs")?;
        if k != k2 {
            return Err(shape_err!("matmul_nt inner dimensions differ: {k} vs {k2}"));
        }
        let out = kernels::gemm_new(r, k, c, alpha, self.value(a).data(), false, self.value(b).data(), true);
        let t = Tensor::new(&[r, c], out)?;
        Ok(self.push(t, &[a, b], || Op::MatMulNt { a, b, alpha }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err!(
                "add: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a), data)?;
        Ok(self.push(t, &[a, b], || Op::Add(a, b)))
    }

    /// Adds a vector along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap();
        if self.shape(bias) != [c] {
            return Err(shape_err!(
                "add_bias: bias {:?} does not match last axis of {:?}",
                self.shape(bias),
                self.shape(x)
            ));
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_exact_mut(c) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        let t = Tensor::new(self.shape(x), data)?;
        Ok(self.push(t, &[x, bias], || Op::AddBias { x, bias }))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, x: Var, factor: &Tensor) -> Result<Var> {
        if self.shape(x) != factor.shape() {
            return Err(shape_err!(
                "mul_const: {:?} vs {:?}",
                self.shape(x),
                factor.shape()
            ));
        }
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(factor.data())
            .map(|(a, b)| a * b)
            .collect();
        let t = Tensor::new(self.shape(x), data)?;
        let f = factor.data().to_vec();
        Ok(self.push(t, &[x], || Op::MulConst { x, factor: f }))
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        let data = self.value(x).data().iter().map(|v| v * s).collect();
        let t = Tensor::new(self.shape(x), data).unwrap();
        self.push(t, &[x], || Op::Scale { x, s })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|v| v.max(0.0)).collect();
        let t = Tensor::new(self.shape(x), data).unwrap();
        self.push(t, &[x], || Op::Relu(x))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| kernels::gelu(v))
            .collect();
        let t = Tensor::new(self.shape(x), data).unwrap();
        self.push(t, &[x], || Op::Gelu(x))
    }

    /// Cross-correlation of an `H×W×Cin` image with a `K×K×Cin×Cout` kernel.
    pub fn conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (h, w, cin) = match self.shape(x) {
            &[h, w, c] => (h, w, c),
            s => return Err(shape_err!("conv2d: input must be H×W×C, got {s:?}")),
        };
        let (k, cout) = match self.shape(kernel) {
            &[k1, k2, ci, co] if k1 == k2 && ci == cin => (k1, co),
            s => {
                return Err(shape_err!(
                    "conv2d: kernel {s:?} incompatible with {cin} input channels"
                ))
            }
        };
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(shape_err!("conv2d: bias shape {:?}", self.shape(b)));
            }
        }
        if stride == 0 {
            return Err(shape_err!("conv2d: stride must be positive"));
        }
        let pad = match padding {
            Padding::Same => (k - 1) / 2,
            Padding::Valid => 0,
        };
        if k > h + 2 * pad || k > w + 2 * pad {
            return Err(shape_err!(
                "conv2d: kernel {k}×{k} larger than padded input {}×{}",
                h + 2 * pad,
                w + 2 * pad
            ));
        }
        let geom = ConvGeom {
            h,
            w,
            cin,
            cout,
            k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (w + 2 * pad - k) / stride + 1,
        };
        let cols = kernels::im2col(&geom, self.value(x).data());
        let out = kernels::conv_from_cols(
            &geom,
            &cols,
            geom.oh * geom.ow,
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
        );
        let t = Tensor::new(&[geom.oh, geom.ow, cout], out)?;
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        Ok(self.push(t, &inputs, || Op::Conv2d {
            x,
            kernel,
            bias,
            geom,
            cols,
        }))
    }

    /// 2×2 window, stride 2.
    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        let (h, w, c) = match self.shape(x) {
            &[h, w, c] => (h, w, c),
            s => return Err(shape_err!("maxpool2d: input must be H×W×C, got {s:?}")),
        };
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err!("maxpool2d: odd spatial size {h}×{w}"));
        }
        let (out, argmax) = kernels::maxpool2(self.value(x).data(), h, w, c);
        let t = Tensor::new(&[h / 2, w / 2, c], out)?;
        Ok(self.push(t, &[x], || Op::MaxPool { x, argmax }))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap();
        let y = kernels::softmax_rows(self.value(x).data(), n);
        let t = Tensor::new(self.shape(x), y)?;
        Ok(self.push(t, &[x], || Op::Softmax { x, n }))
    }

    /// Normalizes each row of an `l×p` matrix, then applies `gain`/`bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f32) -> Result<Var> {
        let (_, p) = self.matrix_dims(x, "layer_norm")?;
        if p < 2 {
            return Err(shape_err!("layer_norm: row width {p} < 2"));
        }
        if self.shape(gain) != [p] || self.shape(bias) != [p] {
            return Err(shape_err!("layer_norm: gain/bias must have shape [{p}]"));
        }
        let (y, xhat, rstd) = kernels::layer_norm_rows(
            self.value(x).data(),
            p,
            self.value(gain).data(),
            self.value(bias).data(),
            eps,
        );
        let t = Tensor::new(self.shape(x), y)?;
        Ok(self.push(t, &[x, gain, bias], || Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, &[x], || Op::Reshape(x)))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims(x, "slice_cols")?;
        if len == 0 || start + len > c {
            return Err(shape_err!("slice_cols: {start}..{} of {c}", start + len));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for row in src.chunks_exact(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let t = Tensor::new(&[r, len], out)?;
        Ok(self.push(t, &[x], || Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(shape_err!("concat_cols: no inputs"));
        }
        let r = self.matrix_dims(xs[0], "concat_cols")?.0;
        let mut widths = Vec::with_capacity(xs.len());
        for &v in xs {
            let (ri, ci) = self.matrix_dims(v, "concat_cols")?;
            if ri != r {
                return Err(shape_err!("concat_cols: row counts differ"));
            }
            widths.push(ci);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for row in 0..r {
            for (&v, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(v).data()[row * w..(row + 1) * w]);
            }
        }
        let t = Tensor::new(&[r, total], out)?;
        let owned = xs.to_vec();
        Ok(self.push(t, xs, || Op::ConcatCols(owned)))
    }

    /// Stacks single-element tensors into a vector.
    pub fn stack(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(shape_err!("stack: no inputs"));
        }
        let mut out = Vec::with_capacity(xs.len());
        for &v in xs {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(shape_err!("stack: input of shape {:?} is not scalar", t.shape()));
            }
            out.push(t.data()[0]);
        }
        let t = Tensor::new(&[xs.len()], out)?;
        let owned = xs.to_vec();
        Ok(self.push(t, xs, || Op::Stack(owned)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), &[x], || Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f32>() / t.len() as f32;
        self.push(Tensor::scalar(s), &[x], || Op::Mean(x))
    }

    /// Mean absolute deviation from a constant target.
    pub fn l1_mean(&mut self, x: Var, target: &Tensor) -> Result<Var> {
        if self.value(x).len() != target.len() {
            return Err(shape_err!(
                "l1_mean: {:?} vs target {:?}",
                self.shape(x),
                target.shape()
            ));
        }
        let t = self.value(x);
        let s = t
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f32>()
            / t.len() as f32;
        let tgt = target.data().to_vec();
        Ok(self.push(Tensor::scalar(s), &[x], || Op::L1Mean { x, target: tgt }))
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(contract_err!("backward on an empty tape"));
        }
        if self.value(loss).len() != 1 {
            return Err(contract_err!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            ));
        }
        let mut grads: Vec<Option<Vec<f32>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|d| Tensor::new(self.nodes[i].value.shape(), d).expect("grad shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f32>>], v: Var) -> Option<&'g mut Vec<f32>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (r, k) = (self.shape(a)[0], self.shape(a)[1]);
                let c = self.shape(b)[1];
                if let Some(da) = self.slot(grads, a) {
                    kernels::gemm(r, c, k, 1.0, g, false, self.value(b).data(), true, da, true);
                }
                if let Some(db) = self.slot(grads, b) {
                    kernels::gemm(k, r, c, 1.0, self.value(a).data(), true, g, false, db, true);
                }
            }
            &Op::MatMulNt { a, b, alpha } => {
                let (r, k) = (self.shape(a)[0], self.shape(a)[1]);
                let c = self.shape(b)[0];
                if let Some(da) = self.slot(grads, a) {
                    kernels::gemm(r, c, k, alpha, g, false, self.value(b).data(), false, da, true);
                }
                if let Some(db) = self.slot(grads, b) {
                    kernels::gemm(c, r, k, alpha, g, true, self.value(a).data(), false, db, true);
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = self.slot(grads, v) {
                        add_into(d, g);
                    }
                }
            }
            &Op::AddBias { x, bias } => {
                if let Some(dx) = self.slot(grads, x) {
                    add_into(dx, g);
                }
                if let Some(db) = self.slot(grads, bias) {
                    let c = db.len();
                    for row in g.chunks_exact(c) {
                        add_into(db, row);
                    }
                }
            }
            Op::MulConst { x, factor } => {
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, gv), f) in dx.iter_mut().zip(g).zip(factor) {
                        *d += gv * f;
                    }
                }
            }
            &Op::Scale { x, s } => {
                if let Some(dx) = self.slot(grads, x) {
                    for (d, gv) in dx.iter_mut().zip(g) {
                        *d += gv * s;
                    }
                }
            }
            &Op::Relu(x) => {
                let xv = self.value(x).data();
                if let Some(dx) = self.slot(grads, x) {
                    for ((d, gv), &v) in dx.iter_mut().zip(g).zip(xv) {
                        if v > 0.0 {
                            *d += gv;
                        }
                    }
                }
            }
            &Op::Gelu(x) => {
                let xv = self.value(x).data();
                if let Some(dx) = self.slot(grads, x) {
                    for ((d, gv), &v) in dx.iter_mut().zip(g).zip(xv) {
                        *d += gv * kernels::gelu_grad(v);
                    }
                }
            }
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
                cols,
            } => {
                let rows = geom.oh * geom.ow;
                let pl = geom.patch_len();
                if let Some(dk) = self.slot(grads, *kernel) {
                    kernels::gemm(pl, rows, geom.cout, 1.0, cols, true, g, false, dk, true);
                }
                if let Some(b) = bias {
                    if let Some(db) = self.slot(grads, *b) {
                        for row in g.chunks_exact(geom.cout) {
                            add_into(db, row);
                        }
                    }
                }
                if self.nodes[x.0].requires_grad {
                    let mut dcols = vec![0.0; rows * pl];
                    kernels::gemm(
                        rows,
                        geom.cout,
                        pl,
                        1.0,
                        g,
                        false,
                        self.value(*kernel).data(),
                        true,
                        &mut dcols,
                        false,
                    );
                    let dx = self.slot(grads, *x).unwrap();
                    kernels::col2im_add(geom, &dcols, dx);
                }
            }
            Op::MaxPool { x, argmax } => {
                if let Some(dx) = self.slot(grads, *x) {
                    for (&i, gv) in argmax.iter().zip(g) {
                        dx[i as usize] += gv;
                    }
                }
            }
            &Op::Softmax { x, n } => {
                let y = node.value.data();
                if let Some(dx) = self.slot(grads, x) {
                    kernels::softmax_rows_backward(y, g, n, dx);
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let p = self.shape(*gain)[0];
                if let Some(db) = self.slot(grads, *bias) {
                    for row in g.chunks_exact(p) {
                        add_into(db, row);
                    }
                }
                if let Some(dg) = self.slot(grads, *gain) {
                    for (grow, hrow) in g.chunks_exact(p).zip(xhat.chunks_exact(p)) {
                        for j in 0..p {
                            dg[j] += grow[j] * hrow[j];
                        }
                    }
                }
                let gain_v = self.value(*gain).data();
                if let Some(dx) = self.slot(grads, *x) {
                    let mut dh = vec![0.0f32; p];
                    for (r, &rs) in rstd.iter().enumerate() {
                        let grow = &g[r * p..(r + 1) * p];
                        let hrow = &xhat[r * p..(r + 1) * p];
                        let mut m1 = 0.0f32;
                        let mut m2 = 0.0f32;
                        for j in 0..p {
                            dh[j] = grow[j] * gain_v[j];
                            m1 += dh[j];
                            m2 += dh[j] * hrow[j];
                        }
                        m1 /= p as f32;
                        m2 /= p as f32;
                        let dxr = &mut dx[r * p..(r + 1) * p];
                        for j in 0..p {
                            dxr[j] += rs * (dh[j] - m1 - hrow[j] * m2);
                        }
                    }
                }
            }
            &Op::Reshape(x) => {
                if let Some(dx) = self.slot(grads, x) {
                    add_into(dx, g);
                }
            }
            &Op::SliceCols { x, start } => {
                let c = self.shape(x)[1];
                let len = node.value.shape()[1];
                if let Some(dx) = self.slot(grads, x) {
                    for (drow, grow) in dx.chunks_exact_mut(c).zip(g.chunks_exact(len)) {
                        add_into(&mut drow[start..start + len], grow);
                    }
                }
            }
            Op::ConcatCols(xs) => {
                let total = node.value.shape()[1];
                let mut off = 0;
                for &v in xs {
                    let w = self.shape(v)[1];
                    if let Some(dv) = self.slot(grads, v) {
                        for (drow, grow) in dv.chunks_exact_mut(w).zip(g.chunks_exact(total)) {
                            add_into(drow, &grow[off..off + w]);
                        }
                    }
                    off += w;
                }
            }
            Op::Stack(xs) => {
                for (&v, gv) in xs.iter().zip(g) {
                    if let Some(dv) = self.slot(grads, v) {
                        dv[0] += gv;
                    }
                }
            }
            &Op::Sum(x) => {
                if let Some(dx) = self.slot(grads, x) {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            &Op::Mean(x) => {
                if let Some(dx) = self.slot(grads, x) {
                    let s = g[0] / dx.len() as f32;
                    dx.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::L1Mean { x, target } => {
                let xv = self.value(*x).data();
                if let Some(dx) = self.slot(grads, *x) {
                    let s = g[0] / dx.len() as f32;
                    for ((d, &a), &t) in dx.iter_mut().zip(xv).zip(target) {
                        if a > t {
                            *d += s;
                        } else if a < t {
                            *d -= s;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
