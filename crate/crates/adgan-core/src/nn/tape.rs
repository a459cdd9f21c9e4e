//! Reverse-mode autodiff over a flat operation tape.
//!
//! Nodes are appended in execution order, so the tape itself is the
//! topological order and backward is a single reverse sweep. Parameters are
//! referenced by id into a [`ParamStore`]; each call site can freeze them,
//! which keeps gradient flow through the op but skips accumulation into the
//! parameter. That per-call freezing is how the decoder stays a fixed
//! content-reconstruction function inside the cross-domain loss terms while
//! still training under same-domain reconstruction.

use super::conv::{conv2d_backward, conv2d_forward, linear_backward, linear_forward, Conv2dSpec};
use super::store::{ParamId, ParamStore};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

struct Node {
    value: Tensor,
    op: Op,
}

enum Op {
    Input,
    Conv2d {
        x: NodeId,
        w: ParamId,
        b: ParamId,
        spec: Conv2dSpec,
        frozen: bool,
    },
    Linear {
        x: NodeId,
        w: ParamId,
        b: ParamId,
        out_features: usize,
        frozen: bool,
    },
    AdaIn {
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        mean: Vec<f32>,
        inv_std: Vec<f32>,
    },
    InstanceNorm {
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        frozen: bool,
        mean: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Relu {
        x: NodeId,
    },
    LeakyRelu {
        x: NodeId,
        slope: f32,
    },
    Tanh {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Upsample2 {
        x: NodeId,
    },
    SliceCols {
        x: NodeId,
        offset: usize,
        len: usize,
    },
    L1 {
        a: NodeId,
        b: NodeId,
    },
    BceLogits {
        x: NodeId,
        target: f32,
    },
    MseConst {
        x: NodeId,
        target: f32,
    },
    WeightedSum {
        terms: Vec<(NodeId, f32)>,
    },
}

pub const NORM_EPS: f32 = 1e-5;

/// Per-(n,c) spatial mean and 1/sqrt(var + eps). Statistics accumulate in
/// f64 so that a constant channel yields x - mean == 0 exactly; with the
/// small epsilon under the root, f32 mean rounding would otherwise be
/// amplified by ~1/sqrt(eps).
fn instance_stats(x: &[f32], groups: usize, hw: usize, eps: f32) -> (Vec<f32>, Vec<f32>) {
    let mut mean = vec![0.0f32; groups];
    let mut inv_std = vec![0.0f32; groups];
    for g in 0..groups {
        let xs = &x[g * hw..(g + 1) * hw];
        let m = xs.iter().map(|&v| v as f64).sum::<f64>() / hw as f64;
        let var = xs
            .iter()
            .map(|&v| {
                let d = v as f64 - m;
                d * d
            })
            .sum::<f64>()
            / hw as f64;
        mean[g] = m as f32;
        inv_std[g] = (1.0 / (var + eps as f64).sqrt()) as f32;
    }
    (mean, inv_std)
}

/// Adaptive instance normalization: per channel and per instance,
/// `scale * (x - mean) / sqrt(var + eps) + shift`, with the affine
/// parameters supplied externally instead of learned.
pub fn adain_forward(x: &Tensor, scale: &[f32], shift: &[f32], eps: f32) -> Tensor {
    let (n, c, h, w) = x.dims4();
    assert_eq!(scale.len(), n * c, "scale length must be n*c");
    assert_eq!(shift.len(), n * c, "shift length must be n*c");
    let hw = h * w;
    assert!(hw > 0, "adain on zero spatial extent");
    let (mean, inv_std) = instance_stats(x.data(), n * c, hw, eps);
    let mut out = vec![0.0f32; x.numel()];
    for g in 0..n * c {
        let (m, r) = (mean[g], inv_std[g]);
        let (s, t) = (scale[g], shift[g]);
        let xs = &x.data()[g * hw..(g + 1) * hw];
        let os = &mut out[g * hw..(g + 1) * hw];
        for (o, v) in os.iter_mut().zip(xs) {
            *o = s * (v - m) * r + t;
        }
    }
    Tensor::new(x.shape(), out)
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn conv2d(
        &mut self,
        store: &ParamStore,
        x: NodeId,
        w: ParamId,
        b: ParamId,
        spec: Conv2dSpec,
        frozen: bool,
    ) -> NodeId {
        let (n, c, h, wd) = self.value(x).dims4();
        assert_eq!(c, spec.in_ch, "conv input channels mismatch");
        let (out, oh, ow) = conv2d_forward(
            self.value(x).data(),
            n,
            h,
            wd,
            store.value(w).data(),
            store.value(b).data(),
            &spec,
        );
        let value = Tensor::new(&[n, spec.out_ch, oh, ow], out);
        self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                spec,
                frozen,
            },
        )
    }

    pub fn linear(
        &mut self,
        store: &ParamStore,
        x: NodeId,
        w: ParamId,
        b: ParamId,
        frozen: bool,
    ) -> NodeId {
        let (n, i) = self.value(x).dims2();
        let o = store.value(b).numel();
        assert_eq!(store.value(w).numel(), o * i, "linear weight shape mismatch");
        let y = linear_forward(
            self.value(x).data(),
            n,
            i,
            store.value(w).data(),
            store.value(b).data(),
            o,
        );
        let value = Tensor::new(&[n, o], y);
        self.push(
            value,
            Op::Linear {
                x,
                w,
                b,
                out_features: o,
                frozen,
            },
        )
    }

    /// AdaIN with style inputs coming from the graph (per-sample rows).
    pub fn adain(&mut self, x: NodeId, scale: NodeId, shift: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(self.value(scale).dims2(), (n, c), "adain scale shape");
        assert_eq!(self.value(shift).dims2(), (n, c), "adain shift shape");
        let hw = h * w;
        assert!(hw > 0, "adain on zero spatial extent");
        let (mean, inv_std) = instance_stats(self.value(x).data(), n * c, hw, NORM_EPS);
        let mut out = vec![0.0f32; n * c * hw];
        {
            let xv = self.value(x).data();
            let sv = self.value(scale).data();
            let tv = self.value(shift).data();
            for g in 0..n * c {
                let (m, r) = (mean[g], inv_std[g]);
                let (s, t) = (sv[g], tv[g]);
                for k in 0..hw {
                    out[g * hw + k] = s * (xv[g * hw + k] - m) * r + t;
                }
            }
        }
        let value = Tensor::new(&[n, c, h, w], out);
        self.push(
            value,
            Op::AdaIn {
                x,
                scale,
                shift,
                mean,
                inv_std,
            },
        )
    }

    /// Instance normalization with learnable per-channel affine.
    pub fn instance_norm(
        &mut self,
        store: &ParamStore,
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        frozen: bool,
    ) -> NodeId {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(store.value(gamma).numel(), c);
        let hw = h * w;
        let (mean, inv_std) = instance_stats(self.value(x).data(), n * c, hw, NORM_EPS);
        let mut out = vec![0.0f32; n * c * hw];
        {
            let xv = self.value(x).data();
            let gv = store.value(gamma).data();
            let bv = store.value(beta).data();
            for ni in 0..n {
                for ci in 0..c {
                    let g = ni * c + ci;
                    let (m, r) = (mean[g], inv_std[g]);
                    let (s, t) = (gv[ci], bv[ci]);
                    for k in 0..hw {
                        out[g * hw + k] = s * (xv[g * hw + k] - m) * r + t;
                    }
                }
            }
        }
        let value = Tensor::new(&[n, c, h, w], out);
        self.push(
            value,
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                frozen,
                mean,
                inv_std,
            },
        )
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        for e in v.data_mut() {
            if *e < 0.0 {
                *e = 0.0;
            }
        }
        self.push(v, Op::Relu { x })
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f32) -> NodeId {
        let mut v = self.value(x).clone();
        for e in v.data_mut() {
            if *e < 0.0 {
                *e *= slope;
            }
        }
        self.push(v, Op::LeakyRelu { x, slope })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        for e in v.data_mut() {
            *e = e.tanh();
        }
        self.push(v, Op::Tanh { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shape mismatch");
        let mut v = self.value(a).clone();
        for (e, o) in v.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *e += *o;
        }
        self.push(v, Op::Add { a, b })
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(x).dims4();
        let mut out = vec![0.0f32; n * c * 4 * h * w];
        let (oh, ow) = (2 * h, 2 * w);
        {
            let xv = self.value(x).data();
            for g in 0..n * c {
                for y in 0..h {
                    for xx in 0..w {
                        let v = xv[(g * h + y) * w + xx];
                        let base = (g * oh + 2 * y) * ow + 2 * xx;
                        out[base] = v;
                        out[base + 1] = v;
                        out[base + ow] = v;
                        out[base + ow + 1] = v;
                    }
                }
            }
        }
        self.push(Tensor::new(&[n, c, oh, ow], out), Op::Upsample2 { x })
    }

    /// Column slice of a (n, f) tensor: rows preserved, cols [offset, offset+len).
    pub fn slice_cols(&mut self, x: NodeId, offset: usize, len: usize) -> NodeId {
        let (n, f) = self.value(x).dims2();
        assert!(offset + len <= f, "slice out of range");
        let mut out = vec![0.0f32; n * len];
        {
            let xv = self.value(x).data();
            for r in 0..n {
                out[r * len..(r + 1) * len]
                    .copy_from_slice(&xv[r * f + offset..r * f + offset + len]);
            }
        }
        self.push(Tensor::new(&[n, len], out), Op::SliceCols { x, offset, len })
    }

    /// Mean absolute error between two same-shape nodes.
    pub fn l1(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "l1 shape mismatch");
        let n = self.value(a).numel() as f32;
        let sum: f32 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y).abs())
            .sum();
        self.push(Tensor::scalar(sum / n), Op::L1 { a, b })
    }

    /// Mean binary cross-entropy on raw logits against a constant target,
    /// in the numerically stable form max(x,0) - x*t + ln(1 + e^-|x|).
    pub fn bce_with_logits(&mut self, x: NodeId, target: f32) -> NodeId {
        let n = self.value(x).numel() as f32;
        let sum: f32 = self
            .value(x)
            .data()
            .iter()
            .map(|&v| v.max(0.0) - v * target + (1.0 + (-v.abs()).exp()).ln())
            .sum();
        self.push(Tensor::scalar(sum / n), Op::BceLogits { x, target })
    }

    /// Mean squared error against a constant target (least-squares GAN).
    pub fn mse_const(&mut self, x: NodeId, target: f32) -> NodeId {
        let n = self.value(x).numel() as f32;
        let sum: f32 = self
            .value(x)
            .data()
            .iter()
            .map(|&v| (v - target) * (v - target))
            .sum();
        self.push(Tensor::scalar(sum / n), Op::MseConst { x, target })
    }

    /// Weighted sum of scalar nodes.
    pub fn weighted_sum(&mut self, terms: Vec<(NodeId, f32)>) -> NodeId {
        let mut acc = 0.0f32;
        for (id, w) in &terms {
            acc += self.value(*id).item() * w;
        }
        self.push(Tensor::scalar(acc), Op::WeightedSum { terms })
    }

    fn parents(&self, id: NodeId) -> Vec<NodeId> {
        match &self.nodes[id.0].op {
            Op::Input => vec![],
            Op::Conv2d { x, .. }
            | Op::Linear { x, .. }
            | Op::InstanceNorm { x, .. }
            | Op::Relu { x }
            | Op::LeakyRelu { x, .. }
            | Op::Tanh { x }
            | Op::Upsample2 { x }
            | Op::SliceCols { x, .. }
            | Op::BceLogits { x, .. }
            | Op::MseConst { x, .. } => vec![*x],
            Op::AdaIn { x, scale, shift, .. } => vec![*x, *scale, *shift],
            Op::Add { a, b } | Op::L1 { a, b } => vec![*a, *b],
            Op::WeightedSum { terms } => terms.iter().map(|(id, _)| *id).collect(),
        }
    }

    /// Backpropagate from a scalar root, accumulating parameter gradients
    /// into the store. Input-node gradients are returned for callers that
    /// need them (gradient checks); indexed by node id.
    pub fn backward(&self, root: NodeId, store: &mut ParamStore) -> Vec<Option<Tensor>> {
        assert_eq!(
            self.value(root).numel(),
            1,
            "backward root must be scalar, got {:?}",
            self.value(root).shape()
        );

        // Reachability from the root so unrelated subgraphs cost nothing.
        let mut live = vec![false; self.nodes.len()];
        live[root.0] = true;
        for i in (0..=root.0).rev() {
            if live[i] {
                for p in self.parents(NodeId(i)) {
                    live[p.0] = true;
                }
            }
        }

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            if !live[i] {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {
                    grads[i] = Some(gy); // keep for callers
                    continue;
                }
                Op::Conv2d { x, w, b, spec, frozen } => {
                    let xv = self.value(*x);
                    let (n, _, h, wd) = xv.dims4();
                    let res = conv2d_backward(
                        xv.data(),
                        n,
                        h,
                        wd,
                        store.value(*w).data(),
                        gy.data(),
                        spec,
                        !*frozen,
                    );
                    if let (Some(dw), Some(db)) = (res.dw, res.db) {
                        accumulate(store.grad_mut(*w).data_mut(), &dw);
                        accumulate(store.grad_mut(*b).data_mut(), &db);
                    }
                    add_grad(&mut grads, *x, Tensor::new(xv.shape(), res.dx));
                }
                Op::Linear {
                    x,
                    w,
                    b,
                    out_features,
                    frozen,
                } => {
                    let xv = self.value(*x);
                    let (n, i_f) = xv.dims2();
                    let res = linear_backward(
                        xv.data(),
                        n,
                        i_f,
                        store.value(*w).data(),
                        gy.data(),
                        *out_features,
                        !*frozen,
                    );
                    if let (Some(dw), Some(db)) = (res.dw, res.db) {
                        accumulate(store.grad_mut(*w).data_mut(), &dw);
                        accumulate(store.grad_mut(*b).data_mut(), &db);
                    }
                    add_grad(&mut grads, *x, Tensor::new(xv.shape(), res.dx));
                }
                Op::AdaIn {
                    x,
                    scale,
                    shift,
                    mean,
                    inv_std,
                } => {
                    let xv = self.value(*x);
                    let (n, c, h, w) = xv.dims4();
                    let hw = h * w;
                    let sv = self.value(*scale).data();
                    let mut dx = vec![0.0f32; xv.numel()];
                    let mut dscale = vec![0.0f32; n * c];
                    let mut dshift = vec![0.0f32; n * c];
                    for g in 0..n * c {
                        let (m, r) = (mean[g], inv_std[g]);
                        let s = sv[g];
                        let xs = &xv.data()[g * hw..(g + 1) * hw];
                        let gys = &gy.data()[g * hw..(g + 1) * hw];
                        let mut sum_g = 0.0f32;
                        let mut sum_gx = 0.0f32;
                        for (gv, xv_) in gys.iter().zip(xs) {
                            let xhat = (xv_ - m) * r;
                            sum_g += gv;
                            sum_gx += gv * xhat;
                        }
                        dshift[g] = sum_g;
                        dscale[g] = sum_gx;
                        let mg = sum_g / hw as f32;
                        let mgx = sum_gx / hw as f32;
                        let ds = &mut dx[g * hw..(g + 1) * hw];
                        for k in 0..hw {
                            let xhat = (xs[k] - m) * r;
                            ds[k] = s * r * (gys[k] - mg - xhat * mgx);
                        }
                    }
                    add_grad(&mut grads, *x, Tensor::new(xv.shape(), dx));
                    add_grad(&mut grads, *scale, Tensor::new(&[n, c], dscale));
                    add_grad(&mut grads, *shift, Tensor::new(&[n, c], dshift));
                }
                Op::InstanceNorm {
                    x,
                    gamma,
                    beta,
                    frozen,
                    mean,
                    inv_std,
                } => {
                    let xv = self.value(*x);
                    let (n, c, h, w) = xv.dims4();
                    let hw = h * w;
                    let gv = store.value(*gamma).data().to_vec();
                    let mut dx = vec![0.0f32; xv.numel()];
                    let mut dgamma = vec![0.0f32; c];
                    let mut dbeta = vec![0.0f32; c];
                    for ni in 0..n {
                        for ci in 0..c {
                            let g = ni * c + ci;
                            let (m, r) = (mean[g], inv_std[g]);
                            let s = gv[ci];
                            let xs = &xv.data()[g * hw..(g + 1) * hw];
                            let gys = &gy.data()[g * hw..(g + 1) * hw];
                            let mut sum_g = 0.0f32;
                            let mut sum_gx = 0.0f32;
                            for (gvv, xv_) in gys.iter().zip(xs) {
                                let xhat = (xv_ - m) * r;
                                sum_g += gvv;
                                sum_gx += gvv * xhat;
                            }
                            dbeta[ci] += sum_g;
                            dgamma[ci] += sum_gx;
                            let mg = sum_g / hw as f32;
                            let mgx = sum_gx / hw as f32;
                            let ds = &mut dx[g * hw..(g + 1) * hw];
                            for k in 0..hw {
                                let xhat = (xs[k] - m) * r;
                                ds[k] = s * r * (gys[k] - mg - xhat * mgx);
                            }
                        }
                    }
                    if !*frozen {
                        accumulate(store.grad_mut(*gamma).data_mut(), &dgamma);
                        accumulate(store.grad_mut(*beta).data_mut(), &dbeta);
                    }
                    add_grad(&mut grads, *x, Tensor::new(xv.shape(), dx));
                }
                Op::Relu { x } => {
                    let mut dx = gy.clone();
                    for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        if *y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    add_grad(&mut grads, *x, dx);
                }
                Op::LeakyRelu { x, slope } => {
                    let mut dx = gy.clone();
                    for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        if *y < 0.0 {
                            *d *= slope;
                        }
                    }
                    add_grad(&mut grads, *x, dx);
                }
                Op::Tanh { x } => {
                    let mut dx = gy.clone();
                    for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        *d *= 1.0 - y * y;
                    }
                    add_grad(&mut grads, *x, dx);
                }
                Op::Add { a, b } => {
                    add_grad(&mut grads, *a, gy.clone());
                    add_grad(&mut grads, *b, gy);
                }
                Op::Upsample2 { x } => {
                    let xv = self.value(*x);
                    let (n, c, h, w) = xv.dims4();
                    let (oh, ow) = (2 * h, 2 * w);
                    let mut dx = vec![0.0f32; xv.numel()];
                    for g in 0..n * c {
                        for y in 0..h {
                            for xx in 0..w {
                                let base = (g * oh + 2 * y) * ow + 2 * xx;
                                dx[(g * h + y) * w + xx] = gy.data()[base]
                                    + gy.data()[base + 1]
                                    + gy.data()[base + ow]
                                    + gy.data()[base + ow + 1];
                            }
                        }
                    }
                    add_grad(&mut grads, *x, Tensor::new(xv.shape(), dx));
                }
                Op::SliceCols { x, offset, len } => {
                    let xv = self.value(*x);
                    let (n, f) = xv.dims2();
                    let mut dx = vec![0.0f32; n * f];
                    for r in 0..n {
                        dx[r * f + offset..r * f + offset + len]
                            .copy_from_slice(&gy.data()[r * len..(r + 1) * len]);
                    }
                    add_grad(&mut grads, *x, Tensor::new(xv.shape(), dx));
                }
                Op::L1 { a, b } => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let scale = gy.item() / av.numel() as f32;
                    let mut da = vec![0.0f32; av.numel()];
                    let mut db = vec![0.0f32; av.numel()];
                    for ((d1, d2), (x1, x2)) in da
                        .iter_mut()
                        .zip(db.iter_mut())
                        .zip(av.data().iter().zip(bv.data()))
                    {
                        let s = (x1 - x2).signum() * ((x1 != x2) as i32 as f32);
                        *d1 = scale * s;
                        *d2 = -scale * s;
                    }
                    add_grad(&mut grads, *a, Tensor::new(av.shape(), da));
                    add_grad(&mut grads, *b, Tensor::new(bv.shape(), db));
                }
                Op::BceLogits { x, target } => {
                    let xv = self.value(*x);
                    let scale = gy.item() / xv.numel() as f32;
                    let dx: Vec<f32> = xv
                        .data()
                        .iter()
                        .map(|&v| scale * (sigmoid(v) - target))
                        .collect();
                    add_grad(&mut grads, *x, Tensor::new(xv.shape(), dx));
                }
                Op::MseConst { x, target } => {
                    let xv = self.value(*x);
                    let scale = gy.item() * 2.0 / xv.numel() as f32;
                    let dx: Vec<f32> = xv.data().iter().map(|&v| scale * (v - target)).collect();
                    add_grad(&mut grads, *x, Tensor::new(xv.shape(), dx));
                }
                Op::WeightedSum { terms } => {
                    for (id, w) in terms {
                        add_grad(&mut grads, *id, Tensor::scalar(gy.item() * w));
                    }
                }
            }
        }
        grads
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adain_hand_example() {
        // One channel [1, 3], scale 2, shift 0.5: mean 2, std 1,
        // output [-1.5, 2.5] (up to the epsilon under the root).
        let x = Tensor::new(&[1, 1, 1, 2], vec![1.0, 3.0]);
        let y = adain_forward(&x, &[2.0], &[0.5], NORM_EPS);
        assert!((y.data()[0] - -1.5).abs() < 1e-4, "{:?}", y.data());
        assert!((y.data()[1] - 2.5).abs() < 1e-4, "{:?}", y.data());
    }

    #[test]
    fn adain_identity_normalizes() {
        // scale 1, shift 0: per-channel mean 0, std 1.
        let vals: Vec<f32> = (0..64).map(|i| ((i * 37 % 19) as f32) - 9.0).collect();
        let x = Tensor::new(&[1, 1, 8, 8], vals);
        let y = adain_forward(&x, &[1.0], &[0.0], NORM_EPS);
        let mean: f64 = y.data().iter().map(|&v| v as f64).sum::<f64>() / 64.0;
        let var: f64 = y.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-6, "{mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-4, "{}", var.sqrt());
    }

    #[test]
    fn adain_constant_channel_yields_shift() {
        let x = Tensor::new(&[1, 2, 2, 2], vec![0.7; 8]);
        let y = adain_forward(&x, &[3.0, -1.0], &[0.25, -0.5], NORM_EPS);
        for &v in &y.data()[..4] {
            assert_eq!(v, 0.25);
        }
        for &v in &y.data()[4..] {
            assert_eq!(v, -0.5);
        }
    }

    #[test]
    fn bce_approaches_zero_for_a_confident_correct_discriminator() {
        let mut t = Tape::new();
        let real = t.input(Tensor::new(&[1, 1, 2, 2], vec![20.0; 4]));
        let l_real = t.bce_with_logits(real, 1.0);
        assert!(t.value(l_real).item() < 1e-6);
        let fake = t.input(Tensor::new(&[1, 1, 2, 2], vec![-20.0; 4]));
        let l_fake = t.bce_with_logits(fake, 0.0);
        assert!(t.value(l_fake).item() < 1e-6);
    }
}

fn accumulate(dst: &mut [f32], src: &[f32]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

fn add_grad(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += *b;
            }
        }
        slot => *slot = Some(g),
    }
}
