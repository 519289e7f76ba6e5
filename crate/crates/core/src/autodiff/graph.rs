//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in execution order, so inputs always
//! precede their consumers and one reverse sweep visits each node once.
//! Graphs are built fresh for every forward pass.

use crate::error::{PanError, Result};
use crate::spatial;
use crate::tensor::Tensor;

use super::kernels::{self, ConvGeom};
use super::params::{ParamId, ParamStore};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    Relu(Var),
    MaxPool2 {
        x: Var,
        argmax: Vec<u32>,
    },
    AvgPoolGlobal(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    AffineGrid {
        theta: Var,
        out_h: usize,
        out_w: usize,
    },
    GridSample {
        x: Var,
        grid: Var,
    },
    Sum(Var),
    Square(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints from one backward sweep, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.adjoints.get(v.0).and_then(|g| g.as_deref())
    }
}

impl Graph {
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked but not tied to any parameter.
    pub fn input_with_grad(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Copies a stored parameter onto the tape. Untrainable parameters act
    /// as constants: nothing upstream of them is differentiated.
    pub fn param(&mut self, store: &ParamStore, id: ParamId, trainable: bool) -> Var {
        let v = self.push(store.get(id).clone(), Op::Leaf, trainable);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (&[n, c, h, wd], &[o, wc, kh, kw]) = (&xs[..], &ws[..]) else {
            return Err(PanError::shape("conv2d", &xs, &ws));
        };
        if wc != c || stride == 0 || h + 2 * padding < kh || wd + 2 * padding < kw {
            return Err(PanError::shape("conv2d", &xs, &ws));
        }
        if let Some(b) = b {
            if self.shape(b) != [o] {
                return Err(PanError::shape("conv2d bias", &ws, self.shape(b)));
            }
        }
        let geom = ConvGeom {
            c,
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad: padding,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (wd + 2 * padding - kw) / stride + 1,
        };
        let p = geom.oh * geom.ow;
        let k = geom.cols_rows();
        let mut cols = vec![0.0; n * geom.cols_len()];
        let mut out = vec![0.0; n * o * p];
        {
            let xd = self.value(x).data();
            let wdat = self.value(w).data();
            let bias = b.map(|b| self.value(b).data());
            for s in 0..n {
                let col = &mut cols[s * geom.cols_len()..(s + 1) * geom.cols_len()];
                kernels::im2col(&xd[s * c * h * wd..(s + 1) * c * h * wd], &geom, col);
                let dst = &mut out[s * o * p..(s + 1) * o * p];
                if let Some(bias) = bias {
                    for (oc, row) in dst.chunks_mut(p).enumerate() {
                        row.fill(bias[oc]);
                    }
                }
                kernels::gemm(o, k, p, wdat, false, col, false, 1.0, dst);
            }
        }
        let value = Tensor::new(&[n, o, geom.oh, geom.ow], out)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                cols,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(xv.shape(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    /// 2x2 stride-2 max pooling (ceil mode) over the two trailing axes of an
    /// `[N, C, H, W]` tensor.
    pub fn max_pool2d(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let [n, c, h, w] = xs[..] else {
            return Err(PanError::shape("max_pool2d", &xs, &[0, 0, 0, 0]));
        };
        let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
        let mut out = vec![0.0; n * c * oh * ow];
        let mut argmax = vec![0u32; out.len()];
        kernels::max_pool2(self.value(x).data(), n * c, h, w, &mut out, &mut argmax);
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::MaxPool2 { x, argmax }, rg))
    }

    /// `[N, C, H, W] -> [N, C]` spatial mean.
    pub fn avg_pool_global(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let [n, c, h, w] = xs[..] else {
            return Err(PanError::shape("avg_pool_global", &xs, &[0, 0, 0, 0]));
        };
        let hw = h * w;
        let data = self
            .value(x)
            .data()
            .chunks(hw)
            .map(|p| p.iter().sum::<f64>() / hw as f64)
            .collect();
        let value = Tensor::new(&[n, c], data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::AvgPoolGlobal(x), rg))
    }

    /// `x[N, D] * w[O, D]^T + b[O]`.
    pub fn fully_connected(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (&[n, d], &[o, wd]) = (&xs[..], &ws[..]) else {
            return Err(PanError::shape("fully_connected", &xs, &ws));
        };
        if d != wd {
            return Err(PanError::shape("fully_connected", &xs, &ws));
        }
        let mut out = vec![0.0; n * o];
        if let Some(b) = b {
            if self.shape(b) != [o] {
                return Err(PanError::shape("fully_connected bias", &ws, self.shape(b)));
            }
            let bias = self.value(b).data();
            for row in out.chunks_mut(o) {
                row.copy_from_slice(bias);
            }
        }
        kernels::gemm(
            n,
            d,
            o,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            1.0,
            &mut out,
        );
        let value = Tensor::new(&[n, o], out)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`. Accepts `[K]`
    /// (one sample) or `[N, K]` logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.shape(logits).to_vec();
        let (n, k) = match ls[..] {
            [k] => (1, k),
            [n, k] => (n, k),
            _ => {
                return Err(PanError::shape(
                    "softmax_cross_entropy",
                    &ls,
                    &[labels.len()],
                ))
            }
        };
        if k < 2 {
            return Err(PanError::arg("cross-entropy needs at least two classes"));
        }
        if labels.len() != n {
            return Err(PanError::shape(
                "softmax_cross_entropy",
                &ls,
                &[labels.len()],
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(PanError::InvalidLabel {
                label: bad,
                classes: k,
            });
        }
        let z = self.value(logits).data();
        let mut probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for s in 0..n {
            let row = &z[s * k..(s + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_sum = sum.ln();
            for j in 0..k {
                probs[s * k + j] = (row[j] - max - log_sum).exp();
            }
            loss += -(row[labels[s]] - max - log_sum);
        }
        let value = Tensor::scalar(loss / n as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `theta[N, 6] -> grid[N, out_h, out_w, 2]` of source coordinates.
    pub fn affine_grid(&mut self, theta: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let ts = self.shape(theta).to_vec();
        let [n, 6] = ts[..] else {
            return Err(PanError::shape("affine_grid", &ts, &[0, 6]));
        };
        if out_h == 0 || out_w == 0 {
            return Err(PanError::arg("grid dimensions must be positive"));
        }
        let per = 2 * out_h * out_w;
        let mut coords = vec![0.0; n * per];
        let t = self.value(theta).data();
        for s in 0..n {
            spatial::fill_grid(
                &t[s * 6..(s + 1) * 6],
                out_h,
                out_w,
                &mut coords[s * per..(s + 1) * per],
            );
        }
        let value = Tensor::new(&[n, out_h, out_w, 2], coords)?;
        let rg = self.rg(theta);
        Ok(self.push(
            value,
            Op::AffineGrid {
                theta,
                out_h,
                out_w,
            },
            rg,
        ))
    }

    /// Bilinear sampling of `x[N, C, H, W]` at `grid[N, oh, ow, 2]`.
    pub fn grid_sample(&mut self, x: Var, grid: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let gs = self.shape(grid).to_vec();
        let (&[n, c, h, w], &[gn, oh, ow, 2]) = (&xs[..], &gs[..]) else {
            return Err(PanError::shape("grid_sample", &xs, &gs));
        };
        if gn != n {
            return Err(PanError::shape("grid_sample", &xs, &gs));
        }
        if !self.value(grid).is_finite() {
            return Err(PanError::arg("sampling grid has non-finite coordinates"));
        }
        let (isz, gsz, osz) = (c * h * w, oh * ow * 2, c * oh * ow);
        let mut out = vec![0.0; n * osz];
        let xd = self.value(x).data();
        let gd = self.value(grid).data();
        for s in 0..n {
            spatial::sample_into(
                &xd[s * isz..(s + 1) * isz],
                (c, h, w),
                &gd[s * gsz..(s + 1) * gsz],
                &mut out[s * osz..(s + 1) * osz],
            );
        }
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        let rg = self.rg(x) || self.rg(grid);
        Ok(self.push(value, Op::GridSample { x, grid }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let value =
            Tensor::new(xv.shape(), xv.data().iter().map(|v| v * v).collect()).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Square(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(PanError::shape("add", self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let xv = self.value(x);
        let value = Tensor::new(xv.shape(), xv.data().iter().map(|v| v * factor).collect())
            .expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    /// `factor * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, factor: f64, shift: f64) -> Var {
        let xv = self.value(x);
        let value = Tensor::new(
            xv.shape(),
            xv.data().iter().map(|v| v * factor + shift).collect(),
        )
        .expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Reverse sweep from a scalar `loss`. Gradients of trainable parameter
    /// leaves are added to the matching tensors in `store`, so repeated calls
    /// accumulate until the store's gradients are reset.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        for (node, g) in self.nodes.iter().zip(&grads.adjoints) {
            if let (Some(id), Some(g)) = (node.param, g) {
                store.get_mut(id).accumulate_grad(g);
            }
        }
        Ok(grads)
    }

    /// Reverse sweep without touching any parameter store.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(PanError::arg(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.backward_node(node, &g, &mut adj);
            adj[idx] = Some(g);
        }
        // Only keep adjoints for nodes that can carry one.
        for (node, a) in self.nodes.iter().zip(adj.iter_mut()) {
            if !node.requires_grad {
                *a = None;
            }
        }
        Ok(Gradients { adjoints: adj })
    }

    fn accumulate<'a>(&self, adj: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.rg(v) {
            return None;
        }
        let n = self.value(v).len();
        Some(adj[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn backward_node(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                cols,
            } => {
                let n = self.shape(*x)[0];
                let o = self.shape(*w)[0];
                let p = geom.oh * geom.ow;
                let k = geom.cols_rows();
                let clen = geom.cols_len();
                if let Some(gb) = b.and_then(|b| self.accumulate(adj, b)) {
                    for s in 0..n {
                        for oc in 0..o {
                            gb[oc] += g[(s * o + oc) * p..(s * o + oc + 1) * p]
                                .iter()
                                .sum::<f64>();
                        }
                    }
                }
                if let Some(gw) = self.accumulate(adj, *w) {
                    for s in 0..n {
                        kernels::gemm(
                            o,
                            p,
                            k,
                            &g[s * o * p..(s + 1) * o * p],
                            false,
                            &cols[s * clen..(s + 1) * clen],
                            true,
                            1.0,
                            gw,
                        );
                    }
                }
                if self.rg(*x) {
                    let wdat = self.value(*w).data();
                    let isz = geom.c * geom.h * geom.w;
                    let mut dcols = vec![0.0; clen];
                    let gx = self.accumulate(adj, *x).expect("requires grad");
                    for s in 0..n {
                        kernels::gemm(
                            k,
                            o,
                            p,
                            wdat,
                            true,
                            &g[s * o * p..(s + 1) * o * p],
                            false,
                            0.0,
                            &mut dcols,
                        );
                        kernels::col2im(&dcols, geom, &mut gx[s * isz..(s + 1) * isz]);
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                if let Some(gx) = self.accumulate(adj, *x) {
                    for ((a, &gi), &xi) in gx.iter_mut().zip(g).zip(xv) {
                        if xi > 0.0 {
                            *a += gi;
                        }
                    }
                }
            }
            Op::MaxPool2 { x, argmax } => {
                if let Some(gx) = self.accumulate(adj, *x) {
                    for (&i, &gi) in argmax.iter().zip(g) {
                        gx[i as usize] += gi;
                    }
                }
            }
            Op::AvgPoolGlobal(x) => {
                let xs = self.shape(*x);
                let hw = xs[2] * xs[3];
                if let Some(gx) = self.accumulate(adj, *x) {
                    for (plane, &gi) in gx.chunks_mut(hw).zip(g) {
                        let share = gi / hw as f64;
                        for a in plane {
                            *a += share;
                        }
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let (n, d) = (self.shape(*x)[0], self.shape(*x)[1]);
                let o = self.shape(*w)[0];
                if let Some(gb) = b.and_then(|b| self.accumulate(adj, b)) {
                    for row in g.chunks(o) {
                        for (a, gi) in gb.iter_mut().zip(row) {
                            *a += gi;
                        }
                    }
                }
                if let Some(gw) = self.accumulate(adj, *w) {
                    kernels::gemm(o, n, d, g, true, self.value(*x).data(), false, 1.0, gw);
                }
                let wdat = self.value(*w).data();
                if let Some(gx) = self.accumulate(adj, *x) {
                    kernels::gemm(n, o, d, g, false, wdat, false, 1.0, gx);
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let n = labels.len();
                let k = probs.len() / n;
                let scale = g[0] / n as f64;
                if let Some(gl) = self.accumulate(adj, *logits) {
                    for s in 0..n {
                        for j in 0..k {
                            let onehot = if labels[s] == j { 1.0 } else { 0.0 };
                            gl[s * k + j] += scale * (probs[s * k + j] - onehot);
                        }
                    }
                }
            }
            Op::AffineGrid {
                theta,
                out_h,
                out_w,
            } => {
                let per = 2 * out_h * out_w;
                if let Some(gt) = self.accumulate(adj, *theta) {
                    for (s, chunk) in g.chunks(per).enumerate() {
                        spatial::grid_backward_into(
                            chunk,
                            *out_h,
                            *out_w,
                            &mut gt[s * 6..(s + 1) * 6],
                        );
                    }
                }
            }
            Op::GridSample { x, grid } => {
                let xs = self.shape(*x);
                let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
                let gs = self.shape(*grid);
                let (oh, ow) = (gs[1], gs[2]);
                let (isz, gsz, osz) = (c * h * w, oh * ow * 2, c * oh * ow);
                let xd = self.value(*x).data();
                let gd = self.value(*grid).data();
                let mut gx = if self.rg(*x) {
                    Some(vec![0.0; xd.len()])
                } else {
                    None
                };
                let mut gg = if self.rg(*grid) {
                    Some(vec![0.0; gd.len()])
                } else {
                    None
                };
                for s in 0..n {
                    spatial::sample_backward_into(
                        &xd[s * isz..(s + 1) * isz],
                        (c, h, w),
                        &gd[s * gsz..(s + 1) * gsz],
                        &g[s * osz..(s + 1) * osz],
                        gx.as_mut().map(|v| &mut v[s * isz..(s + 1) * isz]),
                        gg.as_mut().map(|v| &mut v[s * gsz..(s + 1) * gsz]),
                    );
                }
                if let (Some(src), Some(dst)) = (gx, self.accumulate(adj, *x)) {
                    add_into(dst, &src);
                }
                if let (Some(src), Some(dst)) = (gg, self.accumulate(adj, *grid)) {
                    add_into(dst, &src);
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.accumulate(adj, *x) {
                    for a in gx {
                        *a += g[0];
                    }
                }
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                if let Some(gx) = self.accumulate(adj, *x) {
                    for ((a, &gi), &xi) in gx.iter_mut().zip(g).zip(xv) {
                        *a += 2.0 * xi * gi;
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.accumulate(adj, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.accumulate(adj, *b) {
                    add_into(gb, g);
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = self.accumulate(adj, *x) {
                    add_into(gx, g);
                }
            }
            Op::Scale(x, f) => {
                if let Some(gx) = self.accumulate(adj, *x) {
                    for (a, gi) in gx.iter_mut().zip(g) {
                        *a += f * gi;
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}
