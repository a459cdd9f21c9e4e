//! im2col convolution kernels used by the tape ops.
//!
//! All heavy math funnels into `matrixmultiply::sgemm`. Batches are
//! processed sample-parallel with disjoint output slices and a fixed
//! sequential reduction order for weight gradients, so results are
//! bit-identical regardless of thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Spatial padding. `reflect` mirrors without repeating the edge pixel
/// (requires pad < dim); zero padding reads 0 outside the input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pad {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
    pub reflect: bool,
}

impl Pad {
    pub fn zero(p: usize) -> Self {
        Pad {
            top: p,
            bottom: p,
            left: p,
            right: p,
            reflect: false,
        }
    }

    pub fn reflect(p: usize) -> Self {
        Pad {
            top: p,
            bottom: p,
            left: p,
            right: p,
            reflect: true,
        }
    }

    /// Asymmetric zero padding that keeps even kernels size-preserving,
    /// e.g. (1, 2) for a 4x4 stride-1 conv.
    pub fn zero_asym(tl: usize, br: usize) -> Self {
        Pad {
            top: tl,
            bottom: br,
            left: tl,
            right: br,
            reflect: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: Pad,
}

impl Conv2dSpec {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + self.pad.top + self.pad.bottom - self.kernel) / self.stride + 1;
        let ow = (w + self.pad.left + self.pad.right - self.kernel) / self.stride + 1;
        (oh, ow)
    }

    pub fn col_rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }
}

/// Map a padded coordinate to a source index, or None for a zero read.
/// Reflection mirrors without repeating the edge pixel and stays valid for
/// any pad via the period-2(n-1) extension; a single-pixel dim reflects to
/// itself.
#[inline]
fn pad_index(i: isize, size: usize, reflect: bool) -> Option<usize> {
    if i >= 0 && (i as usize) < size {
        Some(i as usize)
    } else if reflect {
        if size == 1 {
            return Some(0);
        }
        let period = 2 * (size as isize - 1);
        let mut j = i.rem_euclid(period);
        if j >= size as isize {
            j = period - j;
        }
        Some(j as usize)
    } else {
        None
    }
}

/// Row-major GEMM: C (m,n) = alpha * A (m,k) * B (k,n) + beta * C.
/// Strides let callers pass transposed views without copying. Degenerate
/// shapes (m, k or n equal to 1) take hand-rolled vector paths; the tiled
/// GEMM's packing overhead dwarfs the arithmetic there.
#[allow(clippy::too_many_arguments)]
fn sgemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert!(c.len() >= m * n);
    let at = |i: usize, j: usize| a[(i as isize * rsa + j as isize * csa) as usize];

    if k == 1 {
        // Outer product.
        for i in 0..m {
            let av = alpha * at(i, 0);
            let row = &mut c[i * n..(i + 1) * n];
            if beta == 0.0 {
                for (j, cv) in row.iter_mut().enumerate() {
                    *cv = av * b[(j as isize * csb) as usize];
                }
            } else {
                for (j, cv) in row.iter_mut().enumerate() {
                    *cv = beta * *cv + av * b[(j as isize * csb) as usize];
                }
            }
        }
        return;
    }
    if m == 1 {
        // Row GEMV: accumulate scaled B rows; contiguous-B fast path.
        if beta == 0.0 {
            c[..n].fill(0.0);
        } else if beta != 1.0 {
            for cv in &mut c[..n] {
                *cv *= beta;
            }
        }
        for kk in 0..k {
            let av = alpha * at(0, kk);
            if av == 0.0 {
                continue;
            }
            if csb == 1 {
                let brow = &b[(kk as isize * rsb) as usize..(kk as isize * rsb) as usize + n];
                for (cv, bv) in c[..n].iter_mut().zip(brow) {
                    *cv += av * bv;
                }
            } else {
                for (j, cv) in c[..n].iter_mut().enumerate() {
                    *cv += av * b[(kk as isize * rsb + j as isize * csb) as usize];
                }
            }
        }
        return;
    }
    if n == 1 {
        // Column GEMV: dot products along A rows.
        for i in 0..m {
            let mut acc = 0.0f32;
            if csa == 1 {
                let arow = &a[(i as isize * rsa) as usize..(i as isize * rsa) as usize + k];
                for (kk, av) in arow.iter().enumerate() {
                    acc += av * b[(kk as isize * rsb) as usize];
                }
            } else {
                for kk in 0..k {
                    acc += at(i, kk) * b[(kk as isize * rsb) as usize];
                }
            }
            c[i * n] = beta * c[i * n] + alpha * acc;
        }
        return;
    }

    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Grow-only thread-local scratch; contents are overwritten by every user.
fn with_scratch2<R>(n1: usize, n2: usize, f: impl FnOnce(&mut [f32], &mut [f32]) -> R) -> R {
    thread_local! {
        static BUF1: std::cell::RefCell<Vec<f32>> = const { std::cell::RefCell::new(Vec::new()) };
        static BUF2: std::cell::RefCell<Vec<f32>> = const { std::cell::RefCell::new(Vec::new()) };
    }
    BUF1.with(|b1| {
        BUF2.with(|b2| {
            let mut b1 = b1.borrow_mut();
            let mut b2 = b2.borrow_mut();
            if b1.len() < n1 {
                b1.resize(n1, 0.0);
            }
            if b2.len() < n2 {
                b2.resize(n2, 0.0);
            }
            f(&mut b1[..n1], &mut b2[..n2])
        })
    })
}

/// Unfold one sample (c,h,w) into a (c*k*k, oh*ow) column matrix.
fn im2col(x: &[f32], c: usize, h: usize, w: usize, spec: &Conv2dSpec, cols: &mut [f32]) {
    let k = spec.kernel;
    let (oh, ow) = spec.out_hw(h, w);
    let ohw = oh * ow;
    debug_assert_eq!(cols.len(), spec.col_rows() * ohw);
    for ci in 0..c {
        let xc = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * ohw;
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky) as isize - spec.pad.top as isize;
                    let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                    match pad_index(iy, h, spec.pad.reflect) {
                        None => dst.fill(0.0),
                        Some(sy) => {
                            let src_row = &xc[sy * w..(sy + 1) * w];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                let ix =
                                    (ox * spec.stride + kx) as isize - spec.pad.left as isize;
                                *d = match pad_index(ix, w, spec.pad.reflect) {
                                    Some(sx) => src_row[sx],
                                    None => 0.0,
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: scatter-add columns back onto the input gradient.
fn col2im_add(cols: &[f32], c: usize, h: usize, w: usize, spec: &Conv2dSpec, dx: &mut [f32]) {
    let k = spec.kernel;
    let (oh, ow) = spec.out_hw(h, w);
    let ohw = oh * ow;
    for ci in 0..c {
        let dxc = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * ohw;
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky) as isize - spec.pad.top as isize;
                    let Some(sy) = pad_index(iy, h, spec.pad.reflect) else {
                        continue;
                    };
                    let src = &cols[row + oy * ow..row + (oy + 1) * ow];
                    for (ox, s) in src.iter().enumerate() {
                        let ix = (ox * spec.stride + kx) as isize - spec.pad.left as isize;
                        if let Some(sx) = pad_index(ix, w, spec.pad.reflect) {
                            dxc[sy * w + sx] += *s;
                        }
                    }
                }
            }
        }
    }
}

/// Direct stride-1 convolution for one sample: row-sliding accumulation,
/// no im2col inflation. Used for the 7x7 image-side convs where the
/// unfolded matrix would be ~50x the input.
fn conv2d_direct_s1(
    x: &[f32],
    h: usize,
    w: usize,
    weight: &[f32],
    bias: &[f32],
    spec: &Conv2dSpec,
    out: &mut [f32],
) {
    let k = spec.kernel;
    let (oh, ow) = spec.out_hw(h, w);
    let ohw = oh * ow;
    for co in 0..spec.out_ch {
        out[co * ohw..(co + 1) * ohw].fill(bias[co]);
    }
    for co in 0..spec.out_ch {
        let oplane = &mut out[co * ohw..(co + 1) * ohw];
        for ci in 0..spec.in_ch {
            let xplane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((co * spec.in_ch + ci) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    // ix = ox + kx - pad.left; contiguous where in-bounds.
                    let lo = spec.pad.left.saturating_sub(kx).min(ow);
                    let hi = (w + spec.pad.left).saturating_sub(kx).min(ow);
                    for oy in 0..oh {
                        let iy = (oy + ky) as isize - spec.pad.top as isize;
                        let Some(sy) = pad_index(iy, h, spec.pad.reflect) else {
                            continue;
                        };
                        let xrow = &xplane[sy * w..(sy + 1) * w];
                        let orow = &mut oplane[oy * ow..(oy + 1) * ow];
                        let shift = kx as isize - spec.pad.left as isize;
                        for (ox, ov) in orow.iter_mut().enumerate().take(hi).skip(lo) {
                            *ov += wv * xrow[(ox as isize + shift) as usize];
                        }
                        if spec.pad.reflect {
                            for ox in (0..lo).chain(hi..ow) {
                                if let Some(sx) = pad_index(ox as isize + shift, w, true) {
                                    orow[ox] += wv * xrow[sx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Backward of the direct path: input gradients by scattering, weight
/// gradients by per-tap dot products.
#[allow(clippy::too_many_arguments)]
fn conv2d_direct_s1_backward(
    x: &[f32],
    h: usize,
    w: usize,
    weight: &[f32],
    dy: &[f32],
    spec: &Conv2dSpec,
    dx: &mut [f32],
    mut dw: Option<&mut [f32]>,
    mut db: Option<&mut [f32]>,
) {
    let k = spec.kernel;
    let (oh, ow) = spec.out_hw(h, w);
    let ohw = oh * ow;
    for co in 0..spec.out_ch {
        let dyplane = &dy[co * ohw..(co + 1) * ohw];
        if let Some(db) = db.as_deref_mut() {
            db[co] += dyplane.iter().sum::<f32>();
        }
        for ci in 0..spec.in_ch {
            let xplane = &x[ci * h * w..(ci + 1) * h * w];
            let dxplane = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((co * spec.in_ch + ci) * k + ky) * k + kx;
                    let wv = weight[widx];
                    let mut wgrad = 0.0f32;
                    let lo = spec.pad.left.saturating_sub(kx).min(ow);
                    let hi = (w + spec.pad.left).saturating_sub(kx).min(ow);
                    let shift = kx as isize - spec.pad.left as isize;
                    for oy in 0..oh {
                        let iy = (oy + ky) as isize - spec.pad.top as isize;
                        let Some(sy) = pad_index(iy, h, spec.pad.reflect) else {
                            continue;
                        };
                        let dyrow = &dyplane[oy * ow..(oy + 1) * ow];
                        let xrow = &xplane[sy * w..(sy + 1) * w];
                        let dxrow = &mut dxplane[sy * w..(sy + 1) * w];
                        for ox in lo..hi {
                            let ix = (ox as isize + shift) as usize;
                            let g = dyrow[ox];
                            wgrad += g * xrow[ix];
                            dxrow[ix] += wv * g;
                        }
                        if spec.pad.reflect {
                            for ox in (0..lo).chain(hi..ow) {
                                if let Some(sx) = pad_index(ox as isize + shift, w, true) {
                                    let g = dyrow[ox];
                                    wgrad += g * xrow[sx];
                                    dxrow[sx] += wv * g;
                                }
                            }
                        }
                    }
                    if let Some(dw) = dw.as_deref_mut() {
                        dw[widx] += wgrad;
                    }
                }
            }
        }
    }
}

fn use_direct(spec: &Conv2dSpec) -> bool {
    spec.stride == 1 && spec.kernel >= 5
}

/// Batched conv forward. `x` is (n,c,h,w) flattened, `weight` is
/// (out_ch, in_ch*k*k) row-major, `bias` is (out_ch).
pub fn conv2d_forward(
    x: &[f32],
    n: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    bias: &[f32],
    spec: &Conv2dSpec,
) -> (Vec<f32>, usize, usize) {
    let (oh, ow) = spec.out_hw(h, w);
    let ohw = oh * ow;
    let chw = spec.in_ch * h * w;
    let mut out = vec![0.0f32; n * spec.out_ch * ohw];
    x.par_chunks(chw)
        .zip(out.par_chunks_mut(spec.out_ch * ohw))
        .for_each(|(xs, os)| {
            if use_direct(spec) {
                conv2d_direct_s1(xs, h, w, weight, bias, spec, os);
                return;
            }
            with_scratch2(spec.col_rows() * ohw, 0, |cols, _| {
                im2col(xs, spec.in_ch, h, w, spec, cols);
                sgemm_strided(
                    spec.out_ch,
                    spec.col_rows(),
                    ohw,
                    1.0,
                    weight,
                    spec.col_rows() as isize,
                    1,
                    cols,
                    ohw as isize,
                    1,
                    0.0,
                    os,
                );
            });
            for co in 0..spec.out_ch {
                let b = bias[co];
                for v in &mut os[co * ohw..(co + 1) * ohw] {
                    *v += b;
                }
            }
        });
    (out, oh, ow)
}

pub struct ConvGrads {
    pub dx: Vec<f32>,
    /// None when the call site froze the parameters.
    pub dw: Option<Vec<f32>>,
    pub db: Option<Vec<f32>>,
}

/// Batched conv backward. Recomputes im2col rather than caching it.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    x: &[f32],
    n: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    dy: &[f32],
    spec: &Conv2dSpec,
    want_param_grads: bool,
) -> ConvGrads {
    let (oh, ow) = spec.out_hw(h, w);
    let ohw = oh * ow;
    let chw = spec.in_ch * h * w;
    let kk = spec.col_rows();

    // Contiguous W^T shared by every sample's input-gradient GEMM.
    let mut w_t = vec![0.0f32; kk * spec.out_ch];
    for co in 0..spec.out_ch {
        for r in 0..kk {
            w_t[r * spec.out_ch + co] = weight[co * kk + r];
        }
    }

    let mut dx = vec![0.0f32; n * chw];
    let per_sample: Vec<(Vec<f32>, Vec<f32>)> = x
        .par_chunks(chw)
        .zip(dy.par_chunks(spec.out_ch * ohw))
        .zip(dx.par_chunks_mut(chw))
        .map(|((xs, dys), dxs)| {
            if use_direct(spec) {
                let mut dw_t = vec![0.0f32; want_param_grads as usize * spec.out_ch * kk];
                let mut db = vec![0.0f32; want_param_grads as usize * spec.out_ch];
                conv2d_direct_s1_backward(
                    xs,
                    h,
                    w,
                    weight,
                    dys,
                    spec,
                    dxs,
                    want_param_grads.then_some(&mut dw_t[..]),
                    want_param_grads.then_some(&mut db[..]),
                );
                // Direct path fills dw in (out_ch, kk) layout already; wrap
                // it so the shared reduction below can stay transposed.
                if want_param_grads {
                    let mut t = vec![0.0f32; kk * spec.out_ch];
                    for co in 0..spec.out_ch {
                        for r in 0..kk {
                            t[r * spec.out_ch + co] = dw_t[co * kk + r];
                        }
                    }
                    return (t, db);
                }
                return (Vec::new(), Vec::new());
            }
            with_scratch2(kk * ohw, kk * ohw, |dcols, cols| {
                // dcols (kk, ohw) = W^T (kk, out_ch) x dY (out_ch, ohw)
                sgemm_strided(
                    kk,
                    spec.out_ch,
                    ohw,
                    1.0,
                    &w_t,
                    spec.out_ch as isize,
                    1,
                    dys,
                    ohw as isize,
                    1,
                    0.0,
                    dcols,
                );
                col2im_add(dcols, spec.in_ch, h, w, spec, dxs);

                if want_param_grads {
                    im2col(xs, spec.in_ch, h, w, spec, cols);
                    // dW^T (kk, out_ch) = cols (kk, ohw) x dY^T (ohw, out_ch);
                    // both GEMM inputs stay contiguous along their rows.
                    let mut dw_t = vec![0.0f32; kk * spec.out_ch];
                    sgemm_strided(
                        kk,
                        ohw,
                        spec.out_ch,
                        1.0,
                        cols,
                        ohw as isize,
                        1,
                        dys,
                        1,
                        ohw as isize,
                        0.0,
                        &mut dw_t,
                    );
                    let mut db = vec![0.0f32; spec.out_ch];
                    for co in 0..spec.out_ch {
                        db[co] = dys[co * ohw..(co + 1) * ohw].iter().sum();
                    }
                    (dw_t, db)
                } else {
                    (Vec::new(), Vec::new())
                }
            })
        })
        .collect();

    let (dw, db) = if want_param_grads {
        // Fixed-order reduction over samples keeps gradients bit-exact.
        let mut dw = vec![0.0f32; spec.out_ch * kk];
        let mut db = vec![0.0f32; spec.out_ch];
        for (dw_t, dbs) in &per_sample {
            for r in 0..kk {
                for co in 0..spec.out_ch {
                    dw[co * kk + r] += dw_t[r * spec.out_ch + co];
                }
            }
            for (a, b) in db.iter_mut().zip(dbs) {
                *a += *b;
            }
        }
        (Some(dw), Some(db))
    } else {
        (None, None)
    };

    ConvGrads { dx, dw, db }
}

/// y (n,o) = x (n,i) * W^T + b, with W stored (o,i) row-major.
pub fn linear_forward(x: &[f32], n: usize, i: usize, weight: &[f32], bias: &[f32], o: usize) -> Vec<f32> {
    let mut y = vec![0.0f32; n * o];
    sgemm_strided(n, i, o, 1.0, x, i as isize, 1, weight, 1, i as isize, 0.0, &mut y);
    for r in 0..n {
        for (c, b) in bias.iter().enumerate() {
            y[r * o + c] += *b;
        }
    }
    y
}

pub struct LinearGrads {
    pub dx: Vec<f32>,
    pub dw: Option<Vec<f32>>,
    pub db: Option<Vec<f32>>,
}

pub fn linear_backward(
    x: &[f32],
    n: usize,
    i: usize,
    weight: &[f32],
    dy: &[f32],
    o: usize,
    want_param_grads: bool,
) -> LinearGrads {
    // dX (n,i) = dY (n,o) * W (o,i)
    let mut dx = vec![0.0f32; n * i];
    sgemm_strided(n, o, i, 1.0, dy, o as isize, 1, weight, i as isize, 1, 0.0, &mut dx);
    if !want_param_grads {
        return LinearGrads {
            dx,
            dw: None,
            db: None,
        };
    }
    // dW (o,i) = dY^T (o,n) * x (n,i)
    let mut dw = vec![0.0f32; o * i];
    sgemm_strided(o, n, i, 1.0, dy, 1, o as isize, x, i as isize, 1, 0.0, &mut dw);
    let mut db = vec![0.0f32; o];
    for r in 0..n {
        for c in 0..o {
            db[c] += dy[r * o + c];
        }
    }
    LinearGrads {
        dx,
        dw: Some(dw),
        db: Some(db),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel_passes_through() {
        // 1x1 kernel with weight 1: output equals input.
        let spec = Conv2dSpec {
            in_ch: 1,
            out_ch: 1,
            kernel: 1,
            stride: 1,
            pad: Pad::zero(0),
        };
        let x: Vec<f32> = (0..9).map(|v| v as f32).collect();
        let (y, oh, ow) = conv2d_forward(&x, 1, 3, 3, &[1.0], &[0.0], &spec);
        assert_eq!((oh, ow), (3, 3));
        assert_eq!(y, x);
    }

    #[test]
    fn conv_shapes_match_stride_arithmetic() {
        // 3x3 stride-2 pad-1: halves even dims.
        let spec = Conv2dSpec {
            in_ch: 2,
            out_ch: 3,
            kernel: 3,
            stride: 2,
            pad: Pad::zero(1),
        };
        assert_eq!(spec.out_hw(64, 64), (32, 32));
        // 4x4 stride-1 asym pad (1,2): size preserving.
        let spec = Conv2dSpec {
            in_ch: 1,
            out_ch: 1,
            kernel: 4,
            stride: 1,
            pad: Pad::zero_asym(1, 2),
        };
        assert_eq!(spec.out_hw(32, 32), (32, 32));
    }

    #[test]
    fn reflect_pad_keeps_uniform_input_uniform() {
        let spec = Conv2dSpec {
            in_ch: 1,
            out_ch: 1,
            kernel: 3,
            stride: 1,
            pad: Pad::reflect(1),
        };
        let x = vec![0.7f32; 36];
        let w = vec![0.1f32; 9];
        let (y, _, _) = conv2d_forward(&x, 1, 6, 6, &w, &[0.2], &spec);
        let expect = 0.7 * 0.9 + 0.2;
        for v in y {
            assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
        }
    }

    #[test]
    fn conv_matches_direct_convolution_oracle() {
        // Brute-force direct conv on a small random-ish case.
        let spec = Conv2dSpec {
            in_ch: 2,
            out_ch: 2,
            kernel: 3,
            stride: 2,
            pad: Pad::zero(1),
        };
        let h = 5;
        let w = 6;
        let x: Vec<f32> = (0..2 * h * w).map(|v| ((v * 37 % 11) as f32) - 5.0).collect();
        let wt: Vec<f32> = (0..2 * 2 * 9).map(|v| ((v * 13 % 7) as f32) * 0.1 - 0.3).collect();
        let b = [0.25f32, -0.5];
        let (y, oh, ow) = conv2d_forward(&x, 1, h, w, &wt, &b, &spec);

        for co in 0..2 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    let xv = x[ci * h * w + iy as usize * w + ix as usize];
                                    let wv = wt[((co * 2 + ci) * 3 + ky) * 3 + kx];
                                    acc += xv * wv;
                                }
                            }
                        }
                    }
                    let got = y[(co * oh + oy) * ow + ox];
                    assert!((got - acc).abs() < 1e-4, "({co},{oy},{ox}): {got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn linear_matches_oracle() {
        let x = [1.0f32, 2.0, 3.0, -1.0, 0.5, 2.0];
        let w = [0.5f32, -0.25, 1.0, 2.0, 0.0, -1.0]; // (2,3)
        let b = [0.1f32, -0.2];
        let y = linear_forward(&x, 2, 3, &w, &b, 2);
        let expect = [
            1.0 * 0.5 + 2.0 * -0.25 + 3.0 * 1.0 + 0.1,
            1.0 * 2.0 + 2.0 * 0.0 + 3.0 * -1.0 - 0.2,
            -1.0 * 0.5 + 0.5 * -0.25 + 2.0 * 1.0 + 0.1,
            -1.0 * 2.0 + 0.5 * 0.0 + 2.0 * -1.0 - 0.2,
        ];
        for (a, e) in y.iter().zip(expect) {
            assert!((a - e).abs() < 1e-5);
        }
    }
}
