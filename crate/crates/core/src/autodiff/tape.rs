//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Operations are evaluated eagerly while being appended to the tape; calling
//! [`Tape::backward`] on a `1×1` output walks the tape in reverse and
//! accumulates adjoints. Leaves may borrow their value (parameters) so that
//! building a graph never copies model weights.

use std::borrow::Cow;

use super::matrix::Matrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    SoftClip(Var, f64),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    RmsNorm {
        x: Var,
        gain: Var,
        inv_rms: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<Matrix>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SliceRows(Var, usize),
    SelectLogProb {
        logits: Var,
        log_probs: Matrix,
        mask: Vec<bool>,
        actions: Vec<usize>,
    },
    MaskedEntropy {
        logits: Var,
        log_probs: Matrix,
        mask: Vec<bool>,
        entropy: Vec<f64>,
    },
    WeightedSum(Var, Vec<f64>),
    Sum(Var),
}

struct Node<'p> {
    value: Cow<'p, Matrix>,
    op: Op,
}

/// Records operations for one forward pass.
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of `shape` if `v` does not reach the output.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

/// Row-wise log-softmax restricted to `mask`; masked entries get `-inf`.
///
/// Panics if a row has no valid entry.
pub fn masked_log_softmax(logits: &Matrix, mask: &[bool]) -> Matrix {
    let (rows, cols) = logits.shape();
    assert_eq!(mask.len(), rows * cols, "mask shape mismatch");
    let mut out = Matrix::filled(rows, cols, f64::NEG_INFINITY);
    for r in 0..rows {
        let row = logits.row(r);
        let m = &mask[r * cols..(r + 1) * cols];
        let max = row
            .iter()
            .zip(m)
            .filter(|(_, &ok)| ok)
            .map(|(&u, _)| u)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max.is_finite(), "masked softmax over an empty or non-finite row");
        let mut z = 0.0;
        for (&u, &ok) in row.iter().zip(m) {
            if ok {
                z += (u - max).exp();
            }
        }
        let lse = max + z.ln();
        let o = out.row_mut(r);
        for c in 0..cols {
            if m[c] {
                o[c] = row[c] - lse;
            }
        }
    }
    out
}

/// Entropy of each row of a masked log-probability matrix.
pub fn row_entropies(log_probs: &Matrix, mask: &[bool]) -> Vec<f64> {
    let cols = log_probs.cols();
    (0..log_probs.rows())
        .map(|r| {
            let mut h = 0.0;
            for (c, &lp) in log_probs.row(r).iter().enumerate() {
                if mask[r * cols + c] {
                    h -= lp.exp() * lp;
                }
            }
            h
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn attention_forward(q: &Matrix, k: &Matrix, v: &Matrix, heads: usize) -> (Matrix, Vec<Matrix>) {
    let d = q.cols();
    assert_eq!(k.cols(), d, "attention key width mismatch");
    assert_eq!(k.rows(), v.rows(), "attention key/value length mismatch");
    assert!(heads > 0 && d % heads == 0, "width not divisible by heads");
    let dk = d / heads;
    let dv = v.cols() / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut out = Matrix::zeros(q.rows(), v.cols());
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.slice_cols(h * dk, dk);
        let kh = k.slice_cols(h * dk, dk);
        let vh = v.slice_cols(h * dv, dv);
        let mut s = qh.matmul_t(&kh);
        s.scale_in_place(scale);
        for r in 0..s.rows() {
            softmax_in_place(s.row_mut(r));
        }
        let oh = s.matmul(&vh);
        for r in 0..out.rows() {
            out.row_mut(r)[h * dv..(h + 1) * dv].copy_from_slice(oh.row(r));
        }
        probs.push(s);
    }
    (out, probs)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Handles to dropped
    /// nodes must not be used afterwards.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that borrows its value.
    pub fn param(&mut self, value: &'p Matrix) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that owns its value.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar");
        m.get(0, 0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(out, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a row vector");
        let mut out = self.value(a).clone();
        assert_eq!(out.cols(), r.cols(), "add_row width mismatch");
        let rv = r.row(0).to_vec();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(&rv) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * sigmoid(x));
        self.push(out, Op::Silu(a))
    }

    /// `c · tanh(x / c)`.
    pub fn soft_clip(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| c * (x / c).tanh());
        self.push(out, Op::SoftClip(a, c))
    }

    /// Row-wise layer normalization with affine gain and bias (`1×c` each).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let g = self.value(gain).row(0).to_vec();
        let b = self.value(bias).row(0).to_vec();
        let mut out = xhat.clone();
        for r in 0..rows {
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = *o * g[c] + b[c];
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

    /// Row-wise RMS normalization with a `1×c` gain.
    pub fn rms_norm(&mut self, x: Var, gain: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = self.value(gain).row(0).to_vec();
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_rms = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let ms = row.iter().map(|v| v * v).sum::<f64>() / cols as f64;
            let ir = 1.0 / (ms + eps).sqrt();
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = row[c] * ir * g[c];
            }
            inv_rms.push(ir);
        }
        self.push(out, Op::RmsNorm { x, gain, inv_rms })
    }

    /// Multi-head scaled dot-product attention over already projected
    /// queries, keys and values. Head `h` uses column block `h`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Var {
        let (out, probs) = attention_forward(self.value(q), self.value(k), self.value(v), heads);
        self.push(out, Op::Attention { q, k, v, heads, probs })
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let vals: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::concat_rows(&vals);
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let vals: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::concat_cols(&vals);
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let av = self.value(a);
        let mut out = Matrix::zeros(rows.len(), av.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(av.row(r));
        }
        self.push(out, Op::GatherRows(a, rows.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a).slice_rows(start, len);
        self.push(out, Op::SliceRows(a, start))
    }

    /// Log-probability of `actions[r]` under the masked softmax of row `r`.
    /// Output is a `T×1` column.
    pub fn select_log_prob(&mut self, logits: Var, mask: &[bool], actions: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(actions.len(), lv.rows(), "one action per row");
        let log_probs = masked_log_softmax(lv, mask);
        let cols = lv.cols();
        let out: Vec<f64> = actions
            .iter()
            .enumerate()
            .map(|(r, &a)| {
                assert!(mask[r * cols + a], "selected action is masked");
                log_probs.get(r, a)
            })
            .collect();
        let n = out.len();
        self.push(
            Matrix::from_vec(n, 1, out),
            Op::SelectLogProb {
                logits,
                log_probs,
                mask: mask.to_vec(),
                actions: actions.to_vec(),
            },
        )
    }

    /// Entropy of the masked softmax of each row. Output is a `T×1` column.
    pub fn masked_entropy(&mut self, logits: Var, mask: &[bool]) -> Var {
        let log_probs = masked_log_softmax(self.value(logits), mask);
        let entropy = row_entropies(&log_probs, mask);
        let n = entropy.len();
        self.push(
            Matrix::from_vec(n, 1, entropy.clone()),
            Op::MaskedEntropy {
                logits,
                log_probs,
                mask: mask.to_vec(),
                entropy,
            },
        )
    }

    /// `Σ wᵢ xᵢ` over all entries of `a`, as a `1×1` value.
    pub fn weighted_sum(&mut self, a: Var, weights: Vec<f64>) -> Var {
        let av = self.value(a);
        assert_eq!(weights.len(), av.data().len(), "weight count mismatch");
        let s: f64 = av.data().iter().zip(&weights).map(|(x, w)| x * w).sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::WeightedSum(a, weights))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "backward requires a scalar output");
        let mut grads: Vec<Option<Matrix>> = (0..=output.0).map(|_| None).collect();
        grads.resize_with(self.nodes.len(), || None);
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    acc(&mut grads, *a, g.matmul_t(bv));
                    acc(&mut grads, *b, av.t_matmul(&g));
                }
                Op::MatMulT(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    acc(&mut grads, *a, g.matmul(bv));
                    acc(&mut grads, *b, g.t_matmul(av));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, row) => {
                    let mut rg = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in rg.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *row, rg);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(&mut grads, *a, g.map(|x| x * s));
                }
                Op::Silu(a) => {
                    let d = self.value(*a).map(|x| {
                        let s = sigmoid(x);
                        s * (1.0 + x * (1.0 - s))
                    });
                    acc(&mut grads, *a, g.zip_map(&d, |x, y| x * y));
                }
                Op::SoftClip(a, c) => {
                    let c = *c;
                    let d = self.value(*a).map(|x| {
                        let t = (x / c).tanh();
                        1.0 - t * t
                    });
                    acc(&mut grads, *a, g.zip_map(&d, |x, y| x * y));
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let (rows, cols) = xhat.shape();
                    let gv = self.value(*gain).row(0);
                    let mut dgain = Matrix::zeros(1, cols);
                    let mut dbias = Matrix::zeros(1, cols);
                    let mut dx = Matrix::zeros(rows, cols);
                    let n = cols as f64;
                    for r in 0..rows {
                        let gr = g.row(r);
                        let xr = xhat.row(r);
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for c in 0..cols {
                            dgain.row_mut(0)[c] += gr[c] * xr[c];
                            dbias.row_mut(0)[c] += gr[c];
                            let dxh = gr[c] * gv[c];
                            mean_d += dxh;
                            mean_dx += dxh * xr[c];
                        }
                        mean_d /= n;
                        mean_dx /= n;
                        let is = inv_std[r];
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            let dxh = gr[c] * gv[c];
                            *o = is * (dxh - mean_d - xr[c] * mean_dx);
                        }
                    }
                    acc(&mut grads, *gain, dgain);
                    acc(&mut grads, *bias, dbias);
                    acc(&mut grads, *x, dx);
                }
                Op::RmsNorm { x, gain, inv_rms } => {
                    let xv = self.value(*x);
                    let (rows, cols) = xv.shape();
                    let gv = self.value(*gain).row(0);
                    let mut dgain = Matrix::zeros(1, cols);
                    let mut dx = Matrix::zeros(rows, cols);
                    let n = cols as f64;
                    for r in 0..rows {
                        let xr = xv.row(r);
                        let gr = g.row(r);
                        let ir = inv_rms[r];
                        let mut dot = 0.0;
                        for c in 0..cols {
                            dgain.row_mut(0)[c] += gr[c] * xr[c] * ir;
                            dot += gr[c] * gv[c] * xr[c];
                        }
                        let k = dot * ir * ir * ir / n;
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = gr[c] * gv[c] * ir - xr[c] * k;
                        }
                    }
                    acc(&mut grads, *gain, dgain);
                    acc(&mut grads, *x, dx);
                }
                Op::Attention { q, k, v, heads, probs } => {
                    let qv = self.value(*q);
                    let kv = self.value(*k);
                    let vv = self.value(*v);
                    let d = qv.cols();
                    let dk = d / heads;
                    let dvw = vv.cols() / heads;
                    let scale = 1.0 / (dk as f64).sqrt();
                    let mut dq = Matrix::zeros(qv.rows(), d);
                    let mut dkm = Matrix::zeros(kv.rows(), d);
                    let mut dvm = Matrix::zeros(vv.rows(), vv.cols());
                    for (h, p) in probs.iter().enumerate() {
                        let go = g.slice_cols(h * dvw, dvw);
                        let qh = qv.slice_cols(h * dk, dk);
                        let kh = kv.slice_cols(h * dk, dk);
                        let vh = vv.slice_cols(h * dvw, dvw);
                        let dvh = p.t_matmul(&go);
                        let dp = go.matmul_t(&vh);
                        let mut ds = Matrix::zeros(p.rows(), p.cols());
                        for r in 0..p.rows() {
                            let pr = p.row(r);
                            let dpr = dp.row(r);
                            let dot: f64 = pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
                            for (c, o) in ds.row_mut(r).iter_mut().enumerate() {
                                *o = pr[c] * (dpr[c] - dot) * scale;
                            }
                        }
                        let dqh = ds.matmul(&kh);
                        let dkh = ds.t_matmul(&qh);
                        for r in 0..dq.rows() {
                            for (o, x) in dq.row_mut(r)[h * dk..(h + 1) * dk].iter_mut().zip(dqh.row(r)) {
                                *o += x;
                            }
                        }
                        for r in 0..dkm.rows() {
                            for (o, x) in dkm.row_mut(r)[h * dk..(h + 1) * dk].iter_mut().zip(dkh.row(r)) {
                                *o += x;
                            }
                            for (o, x) in dvm.row_mut(r)[h * dvw..(h + 1) * dvw].iter_mut().zip(dvh.row(r)) {
                                *o += x;
                            }
                        }
                    }
                    acc(&mut grads, *q, dq);
                    acc(&mut grads, *k, dkm);
                    acc(&mut grads, *v, dvm);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        acc(&mut grads, p, g.slice_rows(off, rows));
                        off += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let cols = self.value(p).cols();
                        acc(&mut grads, p, g.slice_cols(off, cols));
                        off += cols;
                    }
                }
                Op::GatherRows(a, rows) => {
                    let (ar, ac) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(ar, ac);
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, x) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let (ar, ac) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(ar, ac);
                    for r in 0..g.rows() {
                        ga.row_mut(start + r).copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SelectLogProb {
                    logits,
                    log_probs,
                    mask,
                    actions,
                } => {
                    let (rows, cols) = log_probs.shape();
                    let mut gl = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let w = g.get(r, 0);
                        if w == 0.0 {
                            continue;
                        }
                        let o = gl.row_mut(r);
                        for c in 0..cols {
                            if mask[r * cols + c] {
                                o[c] = -w * log_probs.get(r, c).exp();
                            }
                        }
                        o[actions[r]] += w;
                    }
                    acc(&mut grads, *logits, gl);
                }
                Op::MaskedEntropy {
                    logits,
                    log_probs,
                    mask,
                    entropy,
                } => {
                    let (rows, cols) = log_probs.shape();
                    let mut gl = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let w = g.get(r, 0);
                        if w == 0.0 {
                            continue;
                        }
                        let o = gl.row_mut(r);
                        for c in 0..cols {
                            if mask[r * cols + c] {
                                let lp = log_probs.get(r, c);
                                o[c] = -w * lp.exp() * (lp + entropy[r]);
                            }
                        }
                    }
                    acc(&mut grads, *logits, gl);
                }
                Op::WeightedSum(a, weights) => {
                    let s = g.get(0, 0);
                    let (r, c) = self.value(*a).shape();
                    let data = weights.iter().map(|w| w * s).collect();
                    acc(&mut grads, *a, Matrix::from_vec(r, c, data));
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
            }
        }
        Gradients { grads }
    }
}
