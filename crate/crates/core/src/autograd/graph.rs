use super::kernels::{conv_backward, conv_forward, gemm, ConvGeom, View};
use super::tensor::Tensor;

const NORM_EPS: f32 = 1e-5;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        out_ch: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Affine {
        x: Var,
        scale: f32,
    },
    Relu(Var),
    LeakyRelu(Var, f32),
    Tanh(Var),
    Sigmoid(Var),
    InstanceNorm {
        x: Var,
        inv_std: Vec<f32>,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<u32>,
    },
    Upsample2(Var),
    GlobalAvgPool(Var),
    Concat(Vec<Var>),
    BroadcastSpatial(Var),
    SetMax {
        x: Var,
        argmax: Vec<u32>,
    },
    Clamp {
        x: Var,
        lo: f32,
        hi: f32,
    },
    Log(Var),
    Abs(Var),
    Mean(Var),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run tape. Nodes are appended in evaluation order, so the node
/// index is already a topological order for the backward sweep.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one backward sweep, indexed by node.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn nchw(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 4, "expected [N, C, H, W], got {s:?}");
    (s[0], s[1], s[2], s[3])
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that records a gradient when `trainable`.
    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.push(value, Op::Leaf, trainable)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Copy of `x` that blocks gradient flow.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.input(value)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (n, c, h, wd) = nchw(self.value(x));
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws.len(), 4, "conv weight must be [O, C, K, K]");
        assert_eq!(ws[1], c, "conv input channels {c} != weight {}", ws[1]);
        assert_eq!(ws[2], ws[3], "square kernels only");
        let out_ch = ws[0];
        let geom = ConvGeom {
            channels: c,
            height: h,
            width: wd,
            kernel: ws[2],
            stride,
            pad,
        };
        let (oh, ow) = (geom.out_h(), geom.out_w());
        let mut out = Tensor::zeros(&[n, out_ch, oh, ow]);
        let mut cols = Vec::new();
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = self.value(b).data();
            let in_len = c * h * wd;
            let out_len = out_ch * oh * ow;
            // Samples are convolved one at a time so each result is
            // independent of its position in the batch.
            for (i, o) in out.data_mut().chunks_mut(out_len).enumerate() {
                conv_forward(
                    &xv[i * in_len..(i + 1) * in_len],
                    wv,
                    bv,
                    out_ch,
                    &geom,
                    &mut cols,
                    o,
                );
            }
        }
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(
            out,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                out_ch,
            },
            ng,
        )
    }

    /// `x [N, F] · wᵀ [F, O] + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs.len(), 2, "linear input must be [N, F]");
        assert_eq!(xs[1], ws[1], "linear in-features mismatch");
        let (n, f, o) = (xs[0], xs[1], ws[0]);
        let mut out = Tensor::zeros(&[n, o]);
        {
            let bv = self.value(b).data().to_vec();
            for row in out.data_mut().chunks_mut(o) {
                row.copy_from_slice(&bv);
            }
            gemm(
                n,
                f,
                o,
                View::rows(self.value(x).data(), f),
                View::transposed(self.value(w).data(), f),
                1.0,
                out.data_mut(),
            );
        }
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(out, Op::Linear { x, w, b }, ng)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f32, f32) -> f32) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shape mismatch");
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_vec(av.shape(), data).expect("same shape")
    }

    fn map(&self, x: Var, f: impl Fn(f32) -> f32) -> Tensor {
        let xv = self.value(x);
        Tensor::from_vec(xv.shape(), xv.data().iter().map(|&v| f(v)).collect())
            .expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f32, shift: f32) -> Var {
        let out = self.map(x, |v| scale * v + shift);
        let ng = self.ng(x);
        self.push(out, Op::Affine { x, scale }, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.map(x, |v| v.max(0.0));
        let ng = self.ng(x);
        self.push(out, Op::Relu(x), ng)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let out = self.map(x, |v| if v > 0.0 { v } else { slope * v });
        let ng = self.ng(x);
        self.push(out, Op::LeakyRelu(x, slope), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.map(x, f32::tanh);
        let ng = self.ng(x);
        self.push(out, Op::Tanh(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.map(x, |v| 1.0 / (1.0 + (-v).exp()));
        let ng = self.ng(x);
        self.push(out, Op::Sigmoid(x), ng)
    }

    /// Per-sample, per-channel normalization over the spatial plane.
    pub fn instance_norm(&mut self, x: Var) -> Var {
        let (n, c, h, w) = nchw(self.value(x));
        let plane = h * w;
        let mut out = self.value(x).clone();
        let mut inv_std = Vec::with_capacity(n * c);
        for chunk in out.data_mut().chunks_mut(plane) {
            let mean = chunk.iter().sum::<f32>() / plane as f32;
            let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / plane as f32;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            for v in chunk.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        debug_assert_eq!(inv_std.len(), n * c);
        let ng = self.ng(x);
        self.push(out, Op::InstanceNorm { x, inv_std }, ng)
    }

    /// 2×2 max pooling with stride 2.
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let (n, c, h, w) = nchw(self.value(x));
        assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even dims");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0u32; n * c * oh * ow];
        {
            let xv = self.value(x).data();
            let od = out.data_mut();
            for p in 0..n * c {
                let base = p * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = base + 2 * oy * w + 2 * ox;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                            if xv[idx] > xv[best] {
                                best = idx;
                            }
                        }
                        let o = (p * oh + oy) * ow + ox;
                        od[o] = xv[best];
                        argmax[o] = best as u32;
                    }
                }
            }
        }
        let ng = self.ng(x);
        self.push(out, Op::MaxPool2 { x, argmax }, ng)
    }

    /// Nearest-neighbour ×2 upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let (n, c, h, w) = nchw(self.value(x));
        let mut out = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
        {
            let xv = self.value(x).data();
            let od = out.data_mut();
            for p in 0..n * c {
                for y in 0..2 * h {
                    for xx in 0..2 * w {
                        od[(p * 2 * h + y) * 2 * w + xx] = xv[(p * h + y / 2) * w + xx / 2];
                    }
                }
            }
        }
        let ng = self.ng(x);
        self.push(out, Op::Upsample2(x), ng)
    }

    /// `[N, C, H, W] -> [N, C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = nchw(self.value(x));
        let plane = (h * w) as f32;
        let data = self
            .value(x)
            .data()
            .chunks(h * w)
            .map(|ch| ch.iter().sum::<f32>() / plane)
            .collect();
        let out = Tensor::from_vec(&[n, c], data).expect("pool shape");
        let ng = self.ng(x);
        self.push(out, Op::GlobalAvgPool(x), ng)
    }

    /// Concatenate along axis 1; all other axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = self.value(parts[0]).shape().to_vec();
        let n = first[0];
        let inner: usize = first[2..].iter().product();
        let mut total_c = 0;
        for &p in parts {
            let s = self.value(p).shape();
            assert_eq!(s.len(), first.len(), "concat rank mismatch");
            assert_eq!(s[0], n, "concat batch mismatch");
            assert_eq!(&s[2..], &first[2..], "concat trailing dims mismatch");
            total_c += s[1];
        }
        let mut shape = first.clone();
        shape[1] = total_c;
        let mut data = Vec::with_capacity(n * total_c * inner);
        for i in 0..n {
            for &p in parts {
                let v = self.value(p);
                let len = v.shape()[1] * inner;
                data.extend_from_slice(&v.data()[i * len..(i + 1) * len]);
            }
        }
        let out = Tensor::from_vec(&shape, data).expect("concat shape");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::Concat(parts.to_vec()), ng)
    }

    /// `[N, K] -> [N, K, H, W]`, each value repeated over the plane.
    pub fn broadcast_spatial(&mut self, x: Var, h: usize, w: usize) -> Var {
        let s = self.value(x).shape().to_vec();
        assert_eq!(s.len(), 2, "broadcast_spatial expects [N, K]");
        let mut data = Vec::with_capacity(s[0] * s[1] * h * w);
        for &v in self.value(x).data() {
            data.extend(std::iter::repeat_n(v, h * w));
        }
        let out = Tensor::from_vec(&[s[0], s[1], h, w], data).expect("broadcast shape");
        let ng = self.ng(x);
        self.push(out, Op::BroadcastSpatial(x), ng)
    }

    /// Max over consecutive groups of `group` rows: `[G*S, F] -> [G, F]`.
    /// Ties resolve to the earliest row, so duplicated rows pool identically.
    pub fn set_max(&mut self, x: Var, group: usize) -> Var {
        let s = self.value(x).shape().to_vec();
        assert_eq!(s.len(), 2, "set_max expects [G*S, F]");
        assert!(group > 0 && s[0] % group == 0, "rows not divisible by group");
        let (g, f) = (s[0] / group, s[1]);
        let mut out = Tensor::zeros(&[g, f]);
        let mut argmax = vec![0u32; g * f];
        {
            let xv = self.value(x).data();
            let od = out.data_mut();
            for gi in 0..g {
                for j in 0..f {
                    let mut best = gi * group;
                    for r in gi * group + 1..(gi + 1) * group {
                        if xv[r * f + j] > xv[best * f + j] {
                            best = r;
                        }
                    }
                    od[gi * f + j] = xv[best * f + j];
                    argmax[gi * f + j] = best as u32;
                }
            }
        }
        let ng = self.ng(x);
        self.push(out, Op::SetMax { x, argmax }, ng)
    }

    pub fn clamp(&mut self, x: Var, lo: f32, hi: f32) -> Var {
        let out = self.map(x, |v| v.clamp(lo, hi));
        let ng = self.ng(x);
        self.push(out, Op::Clamp { x, lo, hi }, ng)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.map(x, f32::ln);
        let ng = self.ng(x);
        self.push(out, Op::Log(x), ng)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.map(x, f32::abs);
        let ng = self.ng(x);
        self.push(out, Op::Abs(x), ng)
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = (v.data().iter().map(|&e| e as f64).sum::<f64>() / v.len() as f64) as f32;
        let ng = self.ng(x);
        self.push(Tensor::scalar(m), Op::Mean(x), ng)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let out = self
            .value(x)
            .clone()
            .reshaped(shape)
            .expect("reshape element count");
        let ng = self.ng(x);
        self.push(out, Op::Reshape(x), ng)
    }

    pub fn scalar_value(&self, v: Var) -> f32 {
        self.value(v).data()[0]
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.ng(loss) {
            return Grads { grads };
        }
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut cols = Vec::new();
        let mut dcols = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backward_node(node, &gy, &mut grads, &mut cols, &mut dcols);
            grads[i] = Some(gy);
        }
        Grads { grads }
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> Option<&'g mut [f32]> {
        if !self.ng(v) {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(v).shape()));
        }
        slot.as_mut().map(|t| t.data_mut())
    }

    fn backward_node(
        &self,
        node: &Node,
        gy: &Tensor,
        grads: &mut [Option<Tensor>],
        cols: &mut Vec<f32>,
        dcols: &mut Vec<f32>,
    ) {
        let dy = gy.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                out_ch,
            } => {
                let n = self.value(*x).shape()[0];
                let in_len = geom.channels * geom.height * geom.width;
                let out_len = out_ch * geom.out_h() * geom.out_w();
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let mut dw = self.ng(*w).then(|| vec![0.0f32; wv.len()]);
                let mut db = self.ng(*b).then(|| vec![0.0f32; *out_ch]);
                let mut dx = self.ng(*x).then(|| vec![0.0f32; xv.len()]);
                for i in 0..n {
                    conv_backward(
                        &xv[i * in_len..(i + 1) * in_len],
                        wv,
                        &dy[i * out_len..(i + 1) * out_len],
                        *out_ch,
                        geom,
                        cols,
                        dcols,
                        dw.as_deref_mut(),
                        db.as_deref_mut(),
                        dx.as_mut().map(|d| &mut d[i * in_len..(i + 1) * in_len]),
                    );
                }
                for (v, d) in [(*w, dw), (*b, db), (*x, dx)] {
                    if let (Some(d), Some(acc)) = (d, self.acc(grads, v)) {
                        add_into(acc, &d);
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.value(*x).shape();
                let (n, f) = (xs[0], xs[1]);
                let o = self.value(*w).shape()[0];
                if let Some(acc) = self.acc(grads, *b) {
                    for row in dy.chunks(o) {
                        add_into(acc, row);
                    }
                }
                if let Some(acc) = self.acc(grads, *w) {
                    // dw(O×F) += dyᵀ(O×N) · x(N×F)
                    gemm(
                        o,
                        n,
                        f,
                        View::transposed(dy, o),
                        View::rows(self.value(*x).data(), f),
                        1.0,
                        acc,
                    );
                }
                if let Some(acc) = self.acc(grads, *x) {
                    // dx(N×F) += dy(N×O) · w(O×F)
                    gemm(
                        n,
                        o,
                        f,
                        View::rows(dy, o),
                        View::rows(self.value(*w).data(), f),
                        1.0,
                        acc,
                    );
                }
            }
            Op::Add(a, b) => {
                if let Some(acc) = self.acc(grads, *a) {
                    add_into(acc, dy);
                }
                if let Some(acc) = self.acc(grads, *b) {
                    add_into(acc, dy);
                }
            }
            Op::Sub(a, b) => {
                if let Some(acc) = self.acc(grads, *a) {
                    add_into(acc, dy);
                }
                if let Some(acc) = self.acc(grads, *b) {
                    for (g, d) in acc.iter_mut().zip(dy) {
                        *g -= d;
                    }
                }
            }
            Op::Affine { x, scale } => {
                if let Some(acc) = self.acc(grads, *x) {
                    for (g, d) in acc.iter_mut().zip(dy) {
                        *g += scale * d;
                    }
                }
            }
            Op::Relu(x) => {
                let y = node.value.data();
                if let Some(acc) = self.acc(grads, *x) {
                    for ((g, d), &yv) in acc.iter_mut().zip(dy).zip(y) {
                        if yv > 0.0 {
                            *g += d;
                        }
                    }
                }
            }
            Op::LeakyRelu(x, slope) => {
                let xv = self.value(*x).data().to_vec();
                if let Some(acc) = self.acc(grads, *x) {
                    for ((g, d), &v) in acc.iter_mut().zip(dy).zip(&xv) {
                        *g += if v > 0.0 { *d } else { slope * d };
                    }
                }
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                if let Some(acc) = self.acc(grads, *x) {
                    for ((g, d), &yv) in acc.iter_mut().zip(dy).zip(y) {
                        *g += d * (1.0 - yv * yv);
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                if let Some(acc) = self.acc(grads, *x) {
                    for ((g, d), &yv) in acc.iter_mut().zip(dy).zip(y) {
                        *g += d * yv * (1.0 - yv);
                    }
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                let (_, _, h, w) = nchw(&node.value);
                let plane = h * w;
                let y = node.value.data();
                if let Some(acc) = self.acc(grads, *x) {
                    for (p, &is) in inv_std.iter().enumerate() {
                        let r = p * plane..(p + 1) * plane;
                        let (dyp, yp) = (&dy[r.clone()], &y[r.clone()]);
                        let mean_dy = dyp.iter().sum::<f32>() / plane as f32;
                        let mean_dyy =
                            dyp.iter().zip(yp).map(|(a, b)| a * b).sum::<f32>() / plane as f32;
                        for ((g, &d), &yv) in acc[r].iter_mut().zip(dyp).zip(yp) {
                            *g += is * (d - mean_dy - yv * mean_dyy);
                        }
                    }
                }
            }
            Op::MaxPool2 { x, argmax } | Op::SetMax { x, argmax } => {
                let row_len = match &node.op {
                    Op::SetMax { .. } => node.value.shape()[1],
                    _ => 0,
                };
                if let Some(acc) = self.acc(grads, *x) {
                    for (o, (&src, d)) in argmax.iter().zip(dy).enumerate() {
                        let idx = if row_len == 0 {
                            src as usize
                        } else {
                            src as usize * row_len + o % row_len
                        };
                        acc[idx] += d;
                    }
                }
            }
            Op::Upsample2(x) => {
                let (n, c, h, w) = nchw(self.value(*x));
                if let Some(acc) = self.acc(grads, *x) {
                    for p in 0..n * c {
                        for y in 0..2 * h {
                            for xx in 0..2 * w {
                                acc[(p * h + y / 2) * w + xx / 2] += dy[(p * 2 * h + y) * 2 * w + xx];
                            }
                        }
                    }
                }
            }
            Op::GlobalAvgPool(x) => {
                let (_, _, h, w) = nchw(self.value(*x));
                let plane = h * w;
                if let Some(acc) = self.acc(grads, *x) {
                    for (chunk, &d) in acc.chunks_mut(plane).zip(dy) {
                        let share = d / plane as f32;
                        for g in chunk.iter_mut() {
                            *g += share;
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let shape = node.value.shape();
                let n = shape[0];
                let inner: usize = shape[2..].iter().product();
                let total = shape[1] * inner;
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).shape()[1] * inner;
                    if let Some(acc) = self.acc(grads, p) {
                        for i in 0..n {
                            add_into(
                                &mut acc[i * len..(i + 1) * len],
                                &dy[i * total + offset..i * total + offset + len],
                            );
                        }
                    }
                    offset += len;
                }
            }
            Op::BroadcastSpatial(x) => {
                let s = node.value.shape();
                let plane = s[2] * s[3];
                if let Some(acc) = self.acc(grads, *x) {
                    for (g, chunk) in acc.iter_mut().zip(dy.chunks(plane)) {
                        *g += chunk.iter().sum::<f32>();
                    }
                }
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x).data().to_vec();
                if let Some(acc) = self.acc(grads, *x) {
                    for ((g, d), &v) in acc.iter_mut().zip(dy).zip(&xv) {
                        if v >= *lo && v <= *hi {
                            *g += d;
                        }
                    }
                }
            }
            Op::Log(x) => {
                let xv = self.value(*x).data().to_vec();
                if let Some(acc) = self.acc(grads, *x) {
                    for ((g, d), &v) in acc.iter_mut().zip(dy).zip(&xv) {
                        *g += d / v;
                    }
                }
            }
            Op::Abs(x) => {
                let xv = self.value(*x).data().to_vec();
                if let Some(acc) = self.acc(grads, *x) {
                    for ((g, d), &v) in acc.iter_mut().zip(dy).zip(&xv) {
                        *g += d * if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                }
            }
            Op::Mean(x) => {
                let len = self.value(*x).len();
                let share = dy[0] / len as f32;
                if let Some(acc) = self.acc(grads, *x) {
                    for g in acc.iter_mut() {
                        *g += share;
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(acc) = self.acc(grads, *x) {
                    add_into(acc, dy);
                }
            }
        }
    }
}

fn add_into(acc: &mut [f32], src: &[f32]) {
    for (a, s) in acc.iter_mut().zip(src) {
        *a += s;
    }
}
