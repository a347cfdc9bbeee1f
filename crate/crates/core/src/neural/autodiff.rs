//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Tape`] records operations as they are executed; [`Tape::backward`] walks
//! it once in reverse. Only the primitives the network needs are provided, and
//! several are fused (attention, layer norm, the physical model) so that their
//! backward passes can reuse forward intermediates.

use crate::models::{JacobianMode, Matrix, ModelInputs, ModelProblem};

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape does not match data");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `c = alpha * a * b + beta * c` on strided views; `a` is m x k, `b` is k x n.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(k == 0 || last(m, k, rsa, csa) < a.len());
    assert!(k == 0 || last(k, n, rsb, csb) < b.len());
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: the asserts above keep every strided access inside its slice, and
    // `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Handle to a value on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `x + b` with `b` a single row broadcast over rows.
    AddRow(Var, Var),
    /// `x + p` with `p` (t x m) repeated over consecutive blocks of t rows.
    AddTiled(Var, Var),
    Add(Var, Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Attention {
        qkv: Var,
        heads: usize,
        tokens: usize,
        probs: Vec<f64>,
    },
    Gelu(Var),
    Relu(Var),
    Tanh(Var),
    /// Kernel-3, zero-padded neighbourhood gather along tokens within each sample.
    Im2Col {
        x: Var,
        tokens: usize,
    },
    MeanTokens {
        x: Var,
        tokens: usize,
    },
    /// `center + scale * x`, per column.
    Affine {
        x: Var,
        scale: Vec<f64>,
    },
    /// Physical model applied row-wise; keeps the per-row Jacobians.
    Model {
        p: Var,
        jacobians: Vec<Matrix>,
    },
    /// Mean squared difference to a constant target, as a 1 x 1 value.
    Mse {
        x: Var,
        target: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols, bv.rows, "matmul inner dimensions");
        let mut out = Tensor::zeros(av.rows, bv.cols);
        gemm(
            av.rows,
            av.cols,
            bv.cols,
            1.0,
            &av.data,
            (av.cols, 1),
            &bv.data,
            (bv.cols, 1),
            0.0,
            &mut out.data,
            (bv.cols, 1),
        );
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        assert!(bv.rows == 1 && bv.cols == xv.cols, "row bias shape");
        let mut out = xv.clone();
        for row in out.data.chunks_mut(xv.cols) {
            for (o, bi) in row.iter_mut().zip(&bv.data) {
                *o += bi;
            }
        }
        self.push(out, Op::AddRow(x, b))
    }

    pub fn add_tiled(&mut self, x: Var, p: Var) -> Var {
        let (xv, pv) = (self.value(x), self.value(p));
        assert!(pv.cols == xv.cols && xv.rows % pv.rows == 0, "tiled add shape");
        let mut out = xv.clone();
        for block in out.data.chunks_mut(pv.data.len()) {
            for (o, pi) in block.iter_mut().zip(&pv.data) {
                *o += pi;
            }
        }
        self.push(out, Op::AddTiled(x, p))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add shapes");
        let mut out = av.clone();
        out.add_assign(bv);
        self.push(out, Op::Add(a, b))
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let m = xv.cols;
        assert!(gv.shape() == (1, m) && bv.shape() == (1, m), "layer norm parameter shape");
        let mut out = Tensor::zeros(xv.rows, m);
        let mut xhat = vec![0.0; xv.data.len()];
        let mut inv_std = vec![0.0; xv.rows];
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..m {
                let h = (row[c] - mean) * is;
                xhat[r * m + c] = h;
                out.data[r * m + c] = h * gv.data[c] + bv.data[c];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Multi-head self-attention within each sample of `tokens` consecutive rows.
    /// `qkv` holds the query, key and value projections side by side (n x 3h).
    pub fn attention(&mut self, qkv: Var, heads: usize, tokens: usize) -> Var {
        let v = self.value(qkv);
        assert!(v.cols % 3 == 0 && v.rows % tokens == 0, "attention input shape");
        let hidden = v.cols / 3;
        assert!(hidden % heads == 0, "heads must divide the hidden size");
        let dh = hidden / heads;
        let batch = v.rows / tokens;
        let scale = 1.0 / (dh as f64).sqrt();
        let stride = 3 * hidden;
        let mut out = Tensor::zeros(v.rows, hidden);
        let mut probs = vec![0.0; batch * heads * tokens * tokens];
        for b in 0..batch {
            let base = b * tokens * stride;
            for h in 0..heads {
                let p = &mut probs[(b * heads + h) * tokens * tokens..][..tokens * tokens];
                let q = &v.data[base + h * dh..];
                let k = &v.data[base + hidden + h * dh..];
                gemm(tokens, dh, tokens, scale, q, (stride, 1), k, (1, stride), 0.0, p, (tokens, 1));
                for row in p.chunks_mut(tokens) {
                    let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let mut sum = 0.0;
                    for x in row.iter_mut() {
                        *x = (*x - max).exp();
                        sum += *x;
                    }
                    row.iter_mut().for_each(|x| *x /= sum);
                }
                let vv = &v.data[base + 2 * hidden + h * dh..];
                let o = &mut out.data[b * tokens * hidden + h * dh..];
                gemm(tokens, tokens, dh, 1.0, p, (tokens, 1), vv, (stride, 1), 0.0, o, (hidden, 1));
            }
        }
        self.push(
            out,
            Op::Attention {
                qkv,
                heads,
                tokens,
                probs,
            },
        )
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xv = self.value(x);
        let out = Tensor::from_vec(xv.rows, xv.cols, xv.data.iter().map(|&v| f(v)).collect());
        self.push(out, op)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.map(x, |v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh()), Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn im2col(&mut self, x: Var, tokens: usize) -> Var {
        let xv = self.value(x);
        let c = xv.cols;
        assert!(xv.rows % tokens == 0, "im2col rows");
        let mut out = Tensor::zeros(xv.rows, 3 * c);
        for r in 0..xv.rows {
            let t = r % tokens;
            let dst = &mut out.data[r * 3 * c..(r + 1) * 3 * c];
            if t > 0 {
                dst[..c].copy_from_slice(xv.row(r - 1));
            }
            dst[c..2 * c].copy_from_slice(xv.row(r));
            if t + 1 < tokens {
                dst[2 * c..].copy_from_slice(xv.row(r + 1));
            }
        }
        self.push(out, Op::Im2Col { x, tokens })
    }

    pub fn mean_tokens(&mut self, x: Var, tokens: usize) -> Var {
        let xv = self.value(x);
        assert!(xv.rows % tokens == 0, "mean over tokens rows");
        let mut out = Tensor::zeros(xv.rows / tokens, xv.cols);
        for r in 0..xv.rows {
            let dst = &mut out.data[(r / tokens) * xv.cols..][..xv.cols];
            for (o, v) in dst.iter_mut().zip(xv.row(r)) {
                *o += v / tokens as f64;
            }
        }
        self.push(out, Op::MeanTokens { x, tokens })
    }

    pub fn affine(&mut self, x: Var, center: &[f64], scale: &[f64]) -> Var {
        let xv = self.value(x);
        assert!(center.len() == xv.cols && scale.len() == xv.cols, "affine width");
        let mut out = xv.clone();
        for row in out.data.chunks_mut(xv.cols) {
            for ((o, c), s) in row.iter_mut().zip(center).zip(scale) {
                *o = c + s * *o;
            }
        }
        self.push(
            out,
            Op::Affine {
                x,
                scale: scale.to_vec(),
            },
        )
    }

    /// Evaluates the physical model on every row of `p` (fitted parameters).
    pub fn model(&mut self, p: Var, problem: &ModelProblem, inputs: &ModelInputs) -> Var {
        let pv = self.value(p);
        let width = inputs.output_len();
        let mut out = Tensor::zeros(pv.rows, width);
        let mut jacobians = Vec::with_capacity(pv.rows);
        for r in 0..pv.rows {
            let params = pv.row(r);
            out.data[r * width..(r + 1) * width].copy_from_slice(&problem.evaluate(params, inputs));
            jacobians.push(problem.jacobian(params, inputs, JacobianMode::Analytic));
        }
        self.push(out, Op::Model { p, jacobians })
    }

    pub fn mse(&mut self, x: Var, target: Tensor) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.shape(), target.shape(), "mse shapes");
        let n = xv.data.len() as f64;
        let loss = xv.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        self.push(Tensor::from_vec(1, 1, vec![loss]), Op::Mse { x, target })
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).shape(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::from_vec(1, 1, vec![1.0]));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows, av.cols, bv.cols);
                    let da = accumulate(&mut grads, *a, m, k);
                    gemm(m, n, k, 1.0, &g.data, (n, 1), &bv.data, (1, n), 1.0, &mut da.data, (k, 1));
                    let db = accumulate(&mut grads, *b, k, n);
                    gemm(k, m, n, 1.0, &av.data, (1, k), &g.data, (n, 1), 1.0, &mut db.data, (n, 1));
                }
                Op::AddRow(x, b) => {
                    let dbias = accumulate(&mut grads, *b, 1, g.cols);
                    for row in g.data.chunks(g.cols) {
                        for (d, v) in dbias.data.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *x, g.rows, g.cols).add_assign(&g);
                }
                Op::AddTiled(x, p) => {
                    let (pr, pc) = self.value(*p).shape();
                    let dp = accumulate(&mut grads, *p, pr, pc);
                    for block in g.data.chunks(pr * pc) {
                        for (d, v) in dp.data.iter_mut().zip(block) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *x, g.rows, g.cols).add_assign(&g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.rows, g.cols).add_assign(&g);
                    accumulate(&mut grads, *b, g.rows, g.cols).add_assign(&g);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let m = g.cols;
                    let gv = &self.value(*gain).data;
                    {
                        let dgain = accumulate(&mut grads, *gain, 1, m);
                        for (r, row) in g.data.chunks(m).enumerate() {
                            for c in 0..m {
                                dgain.data[c] += row[c] * xhat[r * m + c];
                            }
                        }
                    }
                    {
                        let dbias = accumulate(&mut grads, *bias, 1, m);
                        for row in g.data.chunks(m) {
                            for (d, v) in dbias.data.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                    let dx = accumulate(&mut grads, *x, g.rows, m);
                    let mut dxhat = vec![0.0; m];
                    for (r, row) in g.data.chunks(m).enumerate() {
                        let xh = &xhat[r * m..(r + 1) * m];
                        let (mut s1, mut s2) = (0.0, 0.0);
                        for c in 0..m {
                            dxhat[c] = row[c] * gv[c];
                            s1 += dxhat[c];
                            s2 += dxhat[c] * xh[c];
                        }
                        let k = inv_std[r] / m as f64;
                        for c in 0..m {
                            dx.data[r * m + c] += k * (m as f64 * dxhat[c] - s1 - xh[c] * s2);
                        }
                    }
                }
                Op::Attention {
                    qkv,
                    heads,
                    tokens,
                    probs,
                } => {
                    let (heads, tokens) = (*heads, *tokens);
                    let v = self.value(*qkv);
                    let hidden = v.cols / 3;
                    let dh = hidden / heads;
                    let stride = 3 * hidden;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let dqkv = accumulate(&mut grads, *qkv, v.rows, v.cols);
                    let mut dp = vec![0.0; tokens * tokens];
                    for b in 0..v.rows / tokens {
                        let base = b * tokens * stride;
                        for h in 0..heads {
                            let p = &probs[(b * heads + h) * tokens * tokens..][..tokens * tokens];
                            let go = &g.data[b * tokens * hidden + h * dh..];
                            // dV += P^T dO
                            gemm(
                                tokens,
                                tokens,
                                dh,
                                1.0,
                                p,
                                (1, tokens),
                                go,
                                (hidden, 1),
                                1.0,
                                &mut dqkv.data[base + 2 * hidden + h * dh..],
                                (stride, 1),
                            );
                            // dP = dO V^T
                            let vv = &v.data[base + 2 * hidden + h * dh..];
                            gemm(tokens, dh, tokens, 1.0, go, (hidden, 1), vv, (1, stride), 0.0, &mut dp, (tokens, 1));
                            // dS = P * (dP - rowsum(dP * P)), scaled for the logits.
                            for (prow, drow) in p.chunks(tokens).zip(dp.chunks_mut(tokens)) {
                                let dot: f64 = prow.iter().zip(drow.iter()).map(|(a, b)| a * b).sum();
                                for (d, pi) in drow.iter_mut().zip(prow) {
                                    *d = scale * pi * (*d - dot);
                                }
                            }
                            let q = &v.data[base + h * dh..];
                            let k = &v.data[base + hidden + h * dh..];
                            // dQ += dS K, dK += dS^T Q
                            gemm(
                                tokens,
                                tokens,
                                dh,
                                1.0,
                                &dp,
                                (tokens, 1),
                                k,
                                (stride, 1),
                                1.0,
                                &mut dqkv.data[base + h * dh..],
                                (stride, 1),
                            );
                            gemm(
                                tokens,
                                tokens,
                                dh,
                                1.0,
                                &dp,
                                (1, tokens),
                                q,
                                (stride, 1),
                                1.0,
                                &mut dqkv.data[base + hidden + h * dh..],
                                (stride, 1),
                            );
                        }
                    }
                }
                Op::Gelu(x) => {
                    let xv = &self.value(*x).data;
                    let dx = accumulate(&mut grads, *x, g.rows, g.cols);
                    for ((d, &v), gi) in dx.data.iter_mut().zip(xv).zip(&g.data) {
                        let u = GELU_C * (v + 0.044715 * v * v * v);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
                        *d += gi * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.value(*x).data;
                    let dx = accumulate(&mut grads, *x, g.rows, g.cols);
                    for ((d, &v), gi) in dx.data.iter_mut().zip(xv).zip(&g.data) {
                        if v > 0.0 {
                            *d += gi;
                        }
                    }
                }
                Op::Tanh(x) => {
                    let y = &node.value.data;
                    let dx = accumulate(&mut grads, *x, g.rows, g.cols);
                    for ((d, &t), gi) in dx.data.iter_mut().zip(y).zip(&g.data) {
                        *d += gi * (1.0 - t * t);
                    }
                }
                Op::Im2Col { x, tokens } => {
                    let c = g.cols / 3;
                    let dx = accumulate(&mut grads, *x, g.rows, c);
                    for r in 0..g.rows {
                        let t = r % tokens;
                        let src = g.row(r);
                        if t > 0 {
                            for (d, s) in dx.data[(r - 1) * c..r * c].iter_mut().zip(&src[..c]) {
                                *d += s;
                            }
                        }
                        for (d, s) in dx.data[r * c..(r + 1) * c].iter_mut().zip(&src[c..2 * c]) {
                            *d += s;
                        }
                        if t + 1 < *tokens {
                            for (d, s) in dx.data[(r + 1) * c..(r + 2) * c].iter_mut().zip(&src[2 * c..]) {
                                *d += s;
                            }
                        }
                    }
                }
                Op::MeanTokens { x, tokens } => {
                    let (rows, cols) = self.value(*x).shape();
                    let dx = accumulate(&mut grads, *x, rows, cols);
                    for r in 0..rows {
                        let src = g.row(r / tokens);
                        for (d, s) in dx.data[r * cols..(r + 1) * cols].iter_mut().zip(src) {
                            *d += s / *tokens as f64;
                        }
                    }
                }
                Op::Affine { x, scale } => {
                    let dx = accumulate(&mut grads, *x, g.rows, g.cols);
                    for (drow, grow) in dx.data.chunks_mut(g.cols).zip(g.data.chunks(g.cols)) {
                        for ((d, gi), s) in drow.iter_mut().zip(grow).zip(scale) {
                            *d += gi * s;
                        }
                    }
                }
                Op::Model { p, jacobians } => {
                    let (rows, cols) = self.value(*p).shape();
                    let dp = accumulate(&mut grads, *p, rows, cols);
                    for (r, jac) in jacobians.iter().enumerate() {
                        let vjp = jac.transpose_mul(g.row(r));
                        for (d, v) in dp.data[r * cols..(r + 1) * cols].iter_mut().zip(vjp) {
                            *d += v;
                        }
                    }
                }
                Op::Mse { x, target } => {
                    let xv = &self.value(*x).data;
                    let k = 2.0 * g.data[0] / xv.len() as f64;
                    let dx = accumulate(&mut grads, *x, target.rows, target.cols);
                    for ((d, a), b) in dx.data.iter_mut().zip(xv).zip(&target.data) {
                        *d += k * (a - b);
                    }
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, rows: usize, cols: usize) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(rows, cols))
}

/// Result of [`Tape::backward`]; only leaves keep their gradient.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf; `None` when the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}
