//! Reverse-mode differentiation over `C × H × W` feature maps.
//!
//! Every operation appends a node holding its output and whatever it needs for
//! the backward pass. Learnable weights are not nodes: operations refer to
//! them by [`ParamId`] and their gradients accumulate into [`Gradients`].

use super::filters::{depthwise_replicate, depthwise_replicate_adjoint, otsu_threshold};
use super::gemm::gemm;
use super::state::{Gradients, Param, ParamId};
use super::tensor::Tensor;
use crate::error::Result;
use crate::losses::{bce_clamped_pred, BCE_EPS};

const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Conv {
        x: Var,
        w: ParamId,
        b: Option<ParamId>,
        ksize: usize,
    },
    InstanceNorm {
        x: Var,
        gamma: ParamId,
        beta: ParamId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu {
        x: Var,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Upsample {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    GateMul {
        x: Var,
        gate: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Sigmoid {
        x: Var,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        probs: Vec<f64>,
    },
    Depthwise {
        x: Var,
        kernel: Vec<f64>,
        ksize: usize,
    },
    ThresholdGate {
        x: Var,
        keep: Vec<bool>,
    },
    Cosine {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        s: Var,
    },
    Bce {
        pred: Var,
        target: Vec<f64>,
    },
    LinComb {
        terms: Vec<(Var, f64)>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p [Param],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Param]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Same-size stride-1 convolution with zero padding. The weight has shape
    /// `[out, in, k, k]`.
    pub fn conv(&mut self, x: Var, w: ParamId, b: Option<ParamId>) -> Var {
        let wp = self.param(w);
        let (cout, cin, ksize) = (wp.shape[0], wp.shape[1], wp.shape[2]);
        let xv = self.value(x);
        assert_eq!(xv.channels, cin, "conv '{}' input channels", wp.name);
        let (h, wd) = (xv.height, xv.width);
        let n = h * wd;
        let mut out = vec![0.0; cout * n];
        if ksize == 1 {
            gemm(cout, cin, n, &wp.data, false, &xv.data, false, &mut out, false);
        } else {
            let cols = im2col(&xv.data, cin, h, wd, ksize);
            gemm(cout, cin * ksize * ksize, n, &wp.data, false, &cols, false, &mut out, false);
        }
        if let Some(b) = b {
            for (row, &bias) in out.chunks_exact_mut(n).zip(&self.param(b).data) {
                row.iter_mut().for_each(|v| *v += bias);
            }
        }
        let value = Tensor::from_vec(cout, h, wd, out);
        self.push(value, Op::Conv { x, w, b, ksize }, true)
    }

    /// Per-channel normalization over the spatial extent with affine parameters.
    pub fn instance_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId) -> Var {
        let xv = self.value(x);
        let (c, h, w) = xv.shape();
        let n = h * w;
        let g = &self.param(gamma).data;
        let bt = &self.param(beta).data;
        let mut xhat = vec![0.0; c * n];
        let mut out = vec![0.0; c * n];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let src = xv.channel(ch);
            let mean = src.iter().sum::<f64>() / n as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            inv_std[ch] = inv;
            for i in 0..n {
                let xh = (src[i] - mean) * inv;
                xhat[ch * n + i] = xh;
                out[ch * n + i] = g[ch] * xh + bt[ch];
            }
        }
        let value = Tensor::from_vec(c, h, w, out);
        self.push(
            value,
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            true,
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        value.data.iter_mut().for_each(|v| *v = v.max(0.0));
        let ng = self.needs(x);
        self.push(value, Op::Relu { x }, ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        value.data.iter_mut().for_each(|v| *v = logistic(*v));
        let ng = self.needs(x);
        self.push(value, Op::Sigmoid { x }, ng)
    }

    pub fn max_pool2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (c, h, w) = xv.shape();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![0.0; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        for ch in 0..c {
            let src = xv.channel(ch);
            for y in 0..oh {
                for x0 in 0..ow {
                    let mut best = (2 * y) * w + 2 * x0;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = (2 * y + dy) * w + 2 * x0 + dx;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    let o = ch * oh * ow + y * ow + x0;
                    out[o] = src[best];
                    argmax[o] = ch * h * w + best;
                }
            }
        }
        let ng = self.needs(x);
        self.push(Tensor::from_vec(c, oh, ow, out), Op::MaxPool { x, argmax }, ng)
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (c, h, w) = xv.shape();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            let src = xv.channel(ch);
            for y in 0..oh {
                for x0 in 0..ow {
                    out[ch * oh * ow + y * ow + x0] = src[(y / 2) * w + x0 / 2];
                }
            }
        }
        let ng = self.needs(x);
        self.push(Tensor::from_vec(c, oh, ow, out), Op::Upsample { x }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        assert_eq!(value.shape(), self.value(b).shape(), "add shapes");
        for (v, o) in value.data.iter_mut().zip(&self.value(b).data) {
            *v += o;
        }
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add { a, b }, ng)
    }

    /// Multiplies every channel of `x` by the single-channel map `gate`.
    pub fn gate_mul(&mut self, x: Var, gate: Var) -> Var {
        let g = self.value(gate);
        assert_eq!(g.channels, 1, "gate must have one channel");
        let mut value = self.value(x).clone();
        let n = value.plane();
        assert_eq!(n, g.plane(), "gate spatial size");
        for row in value.data.chunks_exact_mut(n) {
            for (v, gv) in row.iter_mut().zip(&g.data) {
                *v *= gv;
            }
        }
        let ng = self.needs(x) || self.needs(gate);
        self.push(value, Op::GateMul { x, gate }, ng)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let first = self.value(parts[0]);
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!((v.height, v.width), (h, w), "concat spatial size");
            channels += v.channels;
            data.extend_from_slice(&v.data);
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(
            Tensor::from_vec(channels, h, w, data),
            Op::Concat {
                parts: parts.to_vec(),
            },
            ng,
        )
    }

    /// Single-head spatial self-attention: `out[:, i] = Σ_j P[i, j] v[:, j]`
    /// with `P` the row-wise softmax of `qᵀk / √d`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.channels;
        let n = qv.plane();
        assert_eq!(kv.shape(), qv.shape(), "query/key shapes");
        assert_eq!(vv.plane(), n, "value spatial size");
        let probs = softmax_attention(&qv.data, &kv.data, d, n);
        let c = vv.channels;
        let mut out = vec![0.0; c * n];
        gemm(c, n, n, &vv.data, false, &probs, true, &mut out, false);
        let value = Tensor::from_vec(c, vv.height, vv.width, out);
        let ng = self.needs(q) || self.needs(k) || self.needs(v);
        self.push(value, Op::Attention { q, k, v, probs }, ng)
    }

    /// Fixed depthwise filter with replicate padding, same kernel on every channel.
    pub fn depthwise(&mut self, x: Var, kernel: Vec<f64>, ksize: usize) -> Var {
        let xv = self.value(x);
        let (c, h, w) = xv.shape();
        let out = depthwise_replicate(&xv.data, h, w, &kernel, ksize);
        let ng = self.needs(x);
        self.push(
            Tensor::from_vec(c, h, w, out),
            Op::Depthwise { x, kernel, ksize },
            ng,
        )
    }

    /// Keeps activations at or above each channel's Otsu threshold. The
    /// threshold is a constant for differentiation.
    pub fn otsu_gate(&mut self, x: Var, bins: usize) -> Result<Var> {
        let xv = self.value(x);
        let (c, h, w) = xv.shape();
        let mut keep = Vec::with_capacity(xv.data.len());
        for ch in 0..c {
            let vals = xv.channel(ch);
            let t = otsu_threshold(vals, bins)?;
            keep.extend(vals.iter().map(|&v| v >= t));
        }
        let data = xv
            .data
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v } else { 0.0 })
            .collect();
        let ng = self.needs(x);
        Ok(self.push(
            Tensor::from_vec(c, h, w, data),
            Op::ThresholdGate { x, keep },
            ng,
        ))
    }

    /// Cosine similarity of two flattened tensors; 0 when either is all-zero.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.value(a).data, &self.value(b).data);
        assert_eq!(av.len(), bv.len(), "cosine operand sizes");
        let s = cosine_similarity(av, bv);
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::scalar(s), Op::Cosine { a, b }, ng)
    }

    /// `s · x` for a scalar node `s`.
    pub fn scale(&mut self, x: Var, s: Var) -> Var {
        let factor = self.value(s).item();
        let mut value = self.value(x).clone();
        value.data.iter_mut().for_each(|v| *v *= factor);
        let ng = self.needs(x) || self.needs(s);
        self.push(value, Op::Scale { x, s }, ng)
    }

    /// Pixel-mean binary cross-entropy against a constant target.
    pub fn bce(&mut self, pred: Var, target: Vec<f64>) -> Var {
        let p = &self.value(pred).data;
        assert_eq!(p.len(), target.len(), "bce operand sizes");
        let loss = crate::losses::bce_slice(p, &target);
        let ng = self.needs(pred);
        self.push(Tensor::scalar(loss), Op::Bce { pred, target }, ng)
    }

    /// `Σ cᵢ · xᵢ` over scalar nodes.
    pub fn lin_comb(&mut self, terms: &[(Var, f64)]) -> Var {
        let total = terms.iter().map(|&(v, c)| c * self.value(v).item()).sum();
        let ng = terms.iter().any(|&(v, _)| self.needs(v));
        self.push(
            Tensor::scalar(total),
            Op::LinComb {
                terms: terms.to_vec(),
            },
            ng,
        )
    }

    /// Gradients of the scalar node `root` with respect to every parameter.
    #[cfg(test)]
    pub fn backward(&self, root: Var) -> Gradients {
        let mut pgrads = Gradients::zeros_like(self.params);
        self.backward_into(root, 1.0, &mut pgrads);
        pgrads
    }

    /// Accumulates `seed · ∂root/∂θ` into `pgrads`.
    pub fn backward_into(&self, root: Var, seed: f64, pgrads: &mut Gradients) {
        assert_eq!(self.value(root).data.len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![seed]);
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.backward_node(node, &g, &mut grads, pgrads);
        }
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.needs(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.data.len()]);
        f(slot);
    }

    fn backward_node(
        &self,
        node: &Node,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        pg: &mut Gradients,
    ) {
        match &node.op {
            Op::Input => {}
            Op::Conv { x, w, b, ksize } => {
                let xv = self.value(*x);
                let wp = self.param(*w);
                let (cout, cin) = (wp.shape[0], wp.shape[1]);
                let (h, wd) = (xv.height, xv.width);
                let n = h * wd;
                let kk = cin * ksize * ksize;
                if let Some(b) = b {
                    for (gb, row) in pg.grads[b.0].iter_mut().zip(g.chunks_exact(n)) {
                        *gb += row.iter().sum::<f64>();
                    }
                }
                if *ksize == 1 {
                    gemm(cout, n, kk, g, false, &xv.data, true, &mut pg.grads[w.0], true);
                    self.acc(grads, *x, |dx| {
                        gemm(kk, cout, n, &wp.data, true, g, false, dx, true);
                    });
                } else {
                    let cols = im2col(&xv.data, cin, h, wd, *ksize);
                    gemm(cout, n, kk, g, false, &cols, true, &mut pg.grads[w.0], true);
                    if self.needs(*x) {
                        let mut dcols = cols;
                        gemm(kk, cout, n, &wp.data, true, g, false, &mut dcols, false);
                        self.acc(grads, *x, |dx| col2im_add(&dcols, cin, h, wd, *ksize, dx));
                    }
                }
            }
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (c, h, w) = node.value.shape();
                let n = h * w;
                let gam = &self.param(*gamma).data;
                let mut dx_all = vec![0.0; c * n];
                for ch in 0..c {
                    let gs = &g[ch * n..(ch + 1) * n];
                    let xh = &xhat[ch * n..(ch + 1) * n];
                    let mut sum_g = 0.0;
                    let mut sum_gx = 0.0;
                    for (a, b) in gs.iter().zip(xh) {
                        sum_g += a;
                        sum_gx += a * b;
                    }
                    pg.grads[gamma.0][ch] += sum_gx;
                    pg.grads[beta.0][ch] += sum_g;
                    let k = gam[ch] * inv_std[ch] / n as f64;
                    for i in 0..n {
                        dx_all[ch * n + i] = k * (n as f64 * gs[i] - sum_g - xh[i] * sum_gx);
                    }
                }
                self.acc(grads, *x, |dx| add_into(dx, &dx_all));
            }
            Op::Relu { x } => {
                let y = &node.value.data;
                self.acc(grads, *x, |dx| {
                    for ((d, &gv), &yv) in dx.iter_mut().zip(g).zip(y) {
                        if yv > 0.0 {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Sigmoid { x } => {
                let y = &node.value.data;
                self.acc(grads, *x, |dx| {
                    for ((d, &gv), &yv) in dx.iter_mut().zip(g).zip(y) {
                        *d += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::MaxPool { x, argmax } => {
                self.acc(grads, *x, |dx| {
                    for (&src, &gv) in argmax.iter().zip(g) {
                        dx[src] += gv;
                    }
                });
            }
            Op::Upsample { x } => {
                let (c, oh, ow) = node.value.shape();
                let (h, w) = (oh / 2, ow / 2);
                self.acc(grads, *x, |dx| {
                    for ch in 0..c {
                        for y in 0..oh {
                            for x0 in 0..ow {
                                dx[ch * h * w + (y / 2) * w + x0 / 2] += g[ch * oh * ow + y * ow + x0];
                            }
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                self.acc(grads, *a, |d| add_into(d, g));
                self.acc(grads, *b, |d| add_into(d, g));
            }
            Op::GateMul { x, gate } => {
                let xv = &self.value(*x).data;
                let gv = &self.value(*gate).data;
                let n = gv.len();
                self.acc(grads, *x, |dx| {
                    for (drow, grow) in dx.chunks_exact_mut(n).zip(g.chunks_exact(n)) {
                        for ((d, &go), &s) in drow.iter_mut().zip(grow).zip(gv) {
                            *d += go * s;
                        }
                    }
                });
                self.acc(grads, *gate, |dg| {
                    for (xrow, grow) in xv.chunks_exact(n).zip(g.chunks_exact(n)) {
                        for ((d, &go), &xval) in dg.iter_mut().zip(grow).zip(xrow) {
                            *d += go * xval;
                        }
                    }
                });
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).data.len();
                    let slice = &g[offset..offset + len];
                    self.acc(grads, p, |d| add_into(d, slice));
                    offset += len;
                }
            }
            Op::Attention { q, k, v, probs } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let d = qv.channels;
                let n = qv.plane();
                let c = vv.channels;
                self.acc(grads, *v, |dv| gemm(c, n, n, g, false, probs, false, dv, true));
                if self.needs(*q) || self.needs(*k) {
                    let mut ds = vec![0.0; n * n];
                    gemm(n, c, n, g, true, &vv.data, false, &mut ds, false);
                    let scale = 1.0 / (d as f64).sqrt();
                    for (drow, prow) in ds.chunks_exact_mut(n).zip(probs.chunks_exact(n)) {
                        let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                        for (dv, &pv) in drow.iter_mut().zip(prow) {
                            *dv = pv * (*dv - dot) * scale;
                        }
                    }
                    self.acc(grads, *q, |dq| gemm(d, n, n, &kv.data, false, &ds, true, dq, true));
                    self.acc(grads, *k, |dk| gemm(d, n, n, &qv.data, false, &ds, false, dk, true));
                }
            }
            Op::Depthwise { x, kernel, ksize } => {
                let (_, h, w) = node.value.shape();
                self.acc(grads, *x, |dx| {
                    depthwise_replicate_adjoint(g, h, w, kernel, *ksize, dx)
                });
            }
            Op::ThresholdGate { x, keep } => {
                self.acc(grads, *x, |dx| {
                    for ((d, &gv), &k) in dx.iter_mut().zip(g).zip(keep) {
                        if k {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Cosine { a, b } => {
                let (av, bv) = (&self.value(*a).data, &self.value(*b).data);
                let na = av.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nb = bv.iter().map(|v| v * v).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    return;
                }
                let s = node.value.item();
                let gs = g[0];
                self.acc(grads, *a, |da| {
                    for ((d, &x), &y) in da.iter_mut().zip(av).zip(bv) {
                        *d += gs * (y / (na * nb) - s * x / (na * na));
                    }
                });
                self.acc(grads, *b, |db| {
                    for ((d, &x), &y) in db.iter_mut().zip(av).zip(bv) {
                        *d += gs * (x / (na * nb) - s * y / (nb * nb));
                    }
                });
            }
            Op::Scale { x, s } => {
                let factor = self.value(*s).item();
                let xv = &self.value(*x).data;
                self.acc(grads, *x, |dx| {
                    for (d, &gv) in dx.iter_mut().zip(g) {
                        *d += gv * factor;
                    }
                });
                self.acc(grads, *s, |ds| {
                    ds[0] += g.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
                });
            }
            Op::Bce { pred, target } => {
                let p = &self.value(*pred).data;
                let n = p.len() as f64;
                let go = g[0];
                self.acc(grads, *pred, |dp| {
                    for ((d, &pv), &t) in dp.iter_mut().zip(p).zip(target) {
                        // The clamp is flat outside (ε, 1 − ε).
                        if pv <= BCE_EPS || pv >= 1.0 - BCE_EPS {
                            continue;
                        }
                        let pc = bce_clamped_pred(pv);
                        *d += go * (-t / pc + (1.0 - t) / (1.0 - pc)) / n;
                    }
                });
            }
            Op::LinComb { terms } => {
                for &(v, c) in terms {
                    self.acc(grads, v, |d| d[0] += c * g[0]);
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Row-stochastic attention matrix `softmax_j(q_iᵀ k_j / √d)` for `d × n`
/// query and key maps.
pub fn softmax_attention(q: &[f64], k: &[f64], d: usize, n: usize) -> Vec<f64> {
    let mut scores = vec![0.0; n * n];
    gemm(n, d, n, q, true, k, false, &mut scores, false);
    let scale = 1.0 / (d as f64).sqrt();
    for row in scores.chunks_exact_mut(n) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = ((*v - max) * scale).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    scores
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let n = h * w;
    let pad = (k / 2) as isize;
    let mut cols = vec![0.0; c * k * k * n];
    for ch in 0..c {
        let src = &x[ch * n..(ch + 1) * n];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        continue;
                    }
                    let s_off = sy as usize * w;
                    let sx0 = (x_lo as isize + dx) as usize;
                    dst[y * w + x_lo..y * w + x_hi]
                        .copy_from_slice(&src[s_off + sx0..s_off + sx0 + (x_hi - x_lo)]);
                }
            }
        }
    }
    cols
}

fn col2im_add(cols: &[f64], c: usize, h: usize, w: usize, k: usize, dx_out: &mut [f64]) {
    let n = h * w;
    let pad = (k / 2) as isize;
    for ch in 0..c {
        let dst = &mut dx_out[ch * n..(ch + 1) * n];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        continue;
                    }
                    let d_off = sy as usize * w;
                    let sx0 = (x_lo as isize + dx) as usize;
                    for (d, s) in dst[d_off + sx0..d_off + sx0 + (x_hi - x_lo)]
                        .iter_mut()
                        .zip(&src[y * w + x_lo..y * w + x_hi])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
}
