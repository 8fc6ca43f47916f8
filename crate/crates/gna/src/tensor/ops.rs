//! Pure forward kernels and their backward rules. Forward functions are
//! free of hidden state; backward functions take the saved inputs (or the
//! forward output where cheaper) plus the output gradient and return input
//! gradients. The tape in [`super::tape`] dispatches into both.
//!
//! Layout conventions: feature maps are `[H, W, C]` (channels last), conv
//! weights are `[kh, kw, Cin, Cout]`, matrices are `[rows, cols]`.

use crate::error::{Error, Result};

use super::{dims2, dims3, dims4, Tensor};

// ── Shape helpers ────────────────────────────────────────────────────────

/// (outer, len, inner) decomposition around `axis`.
fn around_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape(format!("axis {axis} out of rank {}", shape.len())));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

// ── Matmul ───────────────────────────────────────────────────────────────

/// `[m,k] · [k,n] -> [m,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, ka) = dims2(a)?;
    let (kb, n) = dims2(b)?;
    if ka != kb {
        return Err(Error::shape(format!("matmul inner extents {ka} vs {kb}")));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &ad[i * ka..(i + 1) * ka];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &bd[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_vec(&[m, n], out)
}

pub(crate) fn matmul_bwd(a: &Tensor, b: &Tensor, gout: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (m, k) = dims2(a).expect("checked in forward");
    let (_, n) = dims2(b).expect("checked in forward");
    let (ad, bd) = (a.data(), b.data());
    // ga = gout · bᵀ, gb = aᵀ · gout
    let mut ga = vec![0.0; m * k];
    let mut gb = vec![0.0; k * n];
    for i in 0..m {
        let grow = &gout[i * n..(i + 1) * n];
        let garow = &mut ga[i * k..(i + 1) * k];
        for l in 0..k {
            let brow = &bd[l * n..(l + 1) * n];
            let mut acc = 0.0;
            for (&g, &bv) in grow.iter().zip(brow) {
                acc += g * bv;
            }
            garow[l] += acc;
            let av = ad[i * k + l];
            let gbrow = &mut gb[l * n..(l + 1) * n];
            for (gbv, &g) in gbrow.iter_mut().zip(grow) {
                *gbv += av * g;
            }
        }
    }
    (ga, gb)
}

// ── Softmax ──────────────────────────────────────────────────────────────

/// Softmax along `axis`, computed with max-subtraction.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = around_axis(x.shape(), axis)?;
    let xd = x.data();
    let mut out = vec![0.0; xd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut max = f64::NEG_INFINITY;
            for j in 0..len {
                max = max.max(xd[base + j * inner]);
            }
            let mut sum = 0.0;
            for j in 0..len {
                let e = (xd[base + j * inner] - max).exp();
                out[base + j * inner] = e;
                sum += e;
            }
            for j in 0..len {
                out[base + j * inner] /= sum;
            }
        }
    }
    Tensor::from_vec(x.shape(), out)
}

pub(crate) fn softmax_bwd(y: &Tensor, gout: &[f64], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = around_axis(y.shape(), axis).expect("checked in forward");
    let yd = y.data();
    let mut gx = vec![0.0; yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut dot = 0.0;
            for j in 0..len {
                let off = base + j * inner;
                dot += yd[off] * gout[off];
            }
            for j in 0..len {
                let off = base + j * inner;
                gx[off] = yd[off] * (gout[off] - dot);
            }
        }
    }
    gx
}

// ── Elementwise ──────────────────────────────────────────────────────────

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

pub(crate) fn relu_bwd(x: &Tensor, gout: &[f64]) -> Vec<f64> {
    x.data().iter().zip(gout).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect()
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

pub(crate) fn sigmoid_bwd(y: &Tensor, gout: &[f64]) -> Vec<f64> {
    y.data().iter().zip(gout).map(|(&s, &g)| g * s * (1.0 - s)).collect()
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::from_vec(a.shape(), data)
}

pub fn scale(x: &Tensor, c: f64) -> Tensor {
    let data = x.data().iter().map(|&v| v * c).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

// ── Reductions ───────────────────────────────────────────────────────────

/// Mean over one axis, or over all elements (rank-0 result) when `axis`
/// is `None`.
pub fn mean(x: &Tensor, axis: Option<usize>) -> Result<Tensor> {
    match axis {
        None => {
            let s: f64 = x.data().iter().sum();
            Ok(Tensor::scalar(s / x.numel() as f64))
        }
        Some(a) => {
            let (outer, len, inner) = around_axis(x.shape(), a)?;
            let xd = x.data();
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for j in 0..len {
                    let base = (o * len + j) * inner;
                    let obase = o * inner;
                    for i in 0..inner {
                        out[obase + i] += xd[base + i];
                    }
                }
            }
            let inv = 1.0 / len as f64;
            out.iter_mut().for_each(|v| *v *= inv);
            let shape: Vec<usize> = x
                .shape()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != a)
                .map(|(_, &e)| e)
                .collect();
            Tensor::from_vec(&shape, out)
        }
    }
}

pub(crate) fn mean_bwd(xshape: &[usize], gout: &[f64], axis: Option<usize>) -> Vec<f64> {
    let numel: usize = xshape.iter().product();
    match axis {
        None => {
            let g = gout[0] / numel as f64;
            vec![g; numel]
        }
        Some(a) => {
            let (outer, len, inner) = around_axis(xshape, a).expect("checked in forward");
            let inv = 1.0 / len as f64;
            let mut gx = vec![0.0; numel];
            for o in 0..outer {
                for j in 0..len {
                    let base = (o * len + j) * inner;
                    let obase = o * inner;
                    for i in 0..inner {
                        gx[base + i] = gout[obase + i] * inv;
                    }
                }
            }
            gx
        }
    }
}

pub fn sum_all(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data().iter().sum())
}

// ── Concat ───────────────────────────────────────────────────────────────

/// Concatenation along `axis`; all other extents must agree.
pub fn concat(xs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = *xs.first().ok_or_else(|| Error::contract("concat of zero tensors"))?;
    if axis >= first.rank() {
        return Err(Error::shape(format!("axis {axis} out of rank {}", first.rank())));
    }
    let mut axis_total = 0;
    for x in xs {
        if x.rank() != first.rank() {
            return Err(Error::shape("concat rank mismatch"));
        }
        for (i, (&a, &b)) in x.shape().iter().zip(first.shape()).enumerate() {
            if i != axis && a != b {
                return Err(Error::shape(format!(
                    "concat extent mismatch at axis {i}: {a} vs {b}"
                )));
            }
        }
        axis_total += x.shape()[axis];
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = axis_total;
    let (outer, _, inner) = around_axis(&shape, axis)?;
    let mut out = vec![0.0; outer * axis_total * inner];
    for o in 0..outer {
        let mut written = 0;
        for x in xs {
            let len = x.shape()[axis];
            let block = len * inner;
            let src = &x.data()[o * block..(o + 1) * block];
            let dst_base = (o * axis_total + written) * inner;
            out[dst_base..dst_base + block].copy_from_slice(src);
            written += len;
        }
    }
    Tensor::from_vec(&shape, out)
}

pub(crate) fn concat_bwd(shapes: &[&[usize]], gout: &[f64], axis: usize) -> Vec<Vec<f64>> {
    let axis_total: usize = shapes.iter().map(|s| s[axis]).sum();
    let outer: usize = shapes[0][..axis].iter().product();
    let inner: usize = shapes[0][axis + 1..].iter().product();
    let mut grads: Vec<Vec<f64>> =
        shapes.iter().map(|s| vec![0.0; s.iter().product()]).collect();
    for o in 0..outer {
        let mut taken = 0;
        for (x, s) in grads.iter_mut().zip(shapes) {
            let len = s[axis];
            let block = len * inner;
            let src_base = (o * axis_total + taken) * inner;
            x[o * block..(o + 1) * block].copy_from_slice(&gout[src_base..src_base + block]);
            taken += len;
        }
    }
    grads
}

// ── Convolution ──────────────────────────────────────────────────────────

fn conv_out_extent(input: usize, k: usize, stride: usize, dilation: usize, padding: usize) -> Result<usize> {
    let span = dilation * (k - 1) + 1;
    let padded = input + 2 * padding;
    if padded < span {
        return Err(Error::shape(format!(
            "kernel span {span} exceeds padded extent {padded}"
        )));
    }
    Ok((padded - span) / stride + 1)
}

/// 2D convolution, zero padding. `x: [H,W,Cin]`, `weights: [kh,kw,Cin,Cout]`,
/// `bias: [Cout]`.
pub fn conv2d(
    x: &Tensor,
    weights: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    dilation: usize,
    padding: usize,
) -> Result<Tensor> {
    if stride == 0 || dilation == 0 {
        return Err(Error::shape("stride and dilation must be positive"));
    }
    let (h, w, cin) = dims3(x)?;
    let (kh, kw, wcin, cout) = dims4(weights)?;
    if wcin != cin {
        return Err(Error::shape(format!("conv input channels {cin} vs weight {wcin}")));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(format!("bias shape {:?}, want [{cout}]", b.shape())));
        }
    }
    let ho = conv_out_extent(h, kh, stride, dilation, padding)?;
    let wo = conv_out_extent(w, kw, stride, dilation, padding)?;
    let (xd, wd) = (x.data(), weights.data());
    let mut out = vec![0.0; ho * wo * cout];
    if let Some(b) = bias {
        for px in out.chunks_exact_mut(cout) {
            px.copy_from_slice(b.data());
        }
    }
    for oy in 0..ho {
        for ox in 0..wo {
            let orow = (oy * wo + ox) * cout;
            for ky in 0..kh {
                let iy = (oy * stride + ky * dilation) as isize - padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx * dilation) as isize - padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let irow = (iy as usize * w + ix as usize) * cin;
                    let wrow = ((ky * kw + kx) * cin) * cout;
                    for ci in 0..cin {
                        let xv = xd[irow + ci];
                        let wslice = &wd[wrow + ci * cout..wrow + (ci + 1) * cout];
                        let oslice = &mut out[orow..orow + cout];
                        for (o, &wv) in oslice.iter_mut().zip(wslice) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[ho, wo, cout], out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_bwd(
    x: &Tensor,
    weights: &Tensor,
    gout: &[f64],
    stride: usize,
    dilation: usize,
    padding: usize,
    has_bias: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let (h, w, cin) = dims3(x).expect("checked in forward");
    let (kh, kw, _, cout) = dims4(weights).expect("checked in forward");
    let ho = conv_out_extent(h, kh, stride, dilation, padding).expect("checked in forward");
    let wo = conv_out_extent(w, kw, stride, dilation, padding).expect("checked in forward");
    let (xd, wd) = (x.data(), weights.data());
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wd.len()];
    let mut gb = has_bias.then(|| vec![0.0; cout]);
    if let Some(gb) = &mut gb {
        for px in gout.chunks_exact(cout) {
            for (b, &g) in gb.iter_mut().zip(px) {
                *b += g;
            }
        }
    }
    for oy in 0..ho {
        for ox in 0..wo {
            let orow = (oy * wo + ox) * cout;
            let grow = &gout[orow..orow + cout];
            for ky in 0..kh {
                let iy = (oy * stride + ky * dilation) as isize - padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx * dilation) as isize - padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let irow = (iy as usize * w + ix as usize) * cin;
                    let wrow = ((ky * kw + kx) * cin) * cout;
                    for ci in 0..cin {
                        let xv = xd[irow + ci];
                        let wslice = &wd[wrow + ci * cout..wrow + (ci + 1) * cout];
                        let gwslice = &mut gw[wrow + ci * cout..wrow + (ci + 1) * cout];
                        let mut acc = 0.0;
                        for ((gw_i, &wv), &g) in gwslice.iter_mut().zip(wslice).zip(grow) {
                            *gw_i += xv * g;
                            acc += wv * g;
                        }
                        gx[irow + ci] += acc;
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

// ── Transposed convolution ───────────────────────────────────────────────

/// Transposed convolution fixed to kernel 3, stride 2, padding 1, output
/// padding 1, so the output is exactly `[2H, 2W, Cout]`.
pub fn deconv2d(
    x: &Tensor,
    weights: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
) -> Result<Tensor> {
    if stride != 2 {
        return Err(Error::shape(format!("deconv2d supports stride 2 only, got {stride}")));
    }
    let (h, w, cin) = dims3(x)?;
    let (kh, kw, wcin, cout) = dims4(weights)?;
    if (kh, kw) != (3, 3) {
        return Err(Error::shape(format!("deconv2d kernel must be 3x3, got {kh}x{kw}")));
    }
    if wcin != cin {
        return Err(Error::shape(format!("deconv input channels {cin} vs weight {wcin}")));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(format!("bias shape {:?}, want [{cout}]", b.shape())));
        }
    }
    let (ho, wo) = (2 * h, 2 * w);
    let (xd, wd) = (x.data(), weights.data());
    let mut out = vec![0.0; ho * wo * cout];
    if let Some(b) = bias {
        for px in out.chunks_exact_mut(cout) {
            px.copy_from_slice(b.data());
        }
    }
    for iy in 0..h {
        for ix in 0..w {
            let irow = (iy * w + ix) * cin;
            for ky in 0..3 {
                let oy = (2 * iy + ky) as isize - 1;
                if oy < 0 || oy >= ho as isize {
                    continue;
                }
                for kx in 0..3 {
                    let ox = (2 * ix + kx) as isize - 1;
                    if ox < 0 || ox >= wo as isize {
                        continue;
                    }
                    let orow = (oy as usize * wo + ox as usize) * cout;
                    let wrow = ((ky * 3 + kx) * cin) * cout;
                    for ci in 0..cin {
                        let xv = xd[irow + ci];
                        let wslice = &wd[wrow + ci * cout..wrow + (ci + 1) * cout];
                        let oslice = &mut out[orow..orow + cout];
                        for (o, &wv) in oslice.iter_mut().zip(wslice) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[ho, wo, cout], out)
}

pub(crate) fn deconv2d_bwd(
    x: &Tensor,
    weights: &Tensor,
    gout: &[f64],
    has_bias: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let (h, w, cin) = dims3(x).expect("checked in forward");
    let (_, _, _, cout) = dims4(weights).expect("checked in forward");
    let (ho, wo) = (2 * h, 2 * w);
    let (xd, wd) = (x.data(), weights.data());
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wd.len()];
    let mut gb = has_bias.then(|| vec![0.0; cout]);
    if let Some(gb) = &mut gb {
        for px in gout.chunks_exact(cout) {
            for (b, &g) in gb.iter_mut().zip(px) {
                *b += g;
            }
        }
    }
    for iy in 0..h {
        for ix in 0..w {
            let irow = (iy * w + ix) * cin;
            for ky in 0..3 {
                let oy = (2 * iy + ky) as isize - 1;
                if oy < 0 || oy >= ho as isize {
                    continue;
                }
                for kx in 0..3 {
                    let ox = (2 * ix + kx) as isize - 1;
                    if ox < 0 || ox >= wo as isize {
                        continue;
                    }
                    let orow = (oy as usize * wo + ox as usize) * cout;
                    let grow = &gout[orow..orow + cout];
                    let wrow = ((ky * 3 + kx) * cin) * cout;
                    for ci in 0..cin {
                        let xv = xd[irow + ci];
                        let wslice = &wd[wrow + ci * cout..wrow + (ci + 1) * cout];
                        let gwslice = &mut gw[wrow + ci * cout..wrow + (ci + 1) * cout];
                        let mut acc = 0.0;
                        for ((gw_i, &wv), &g) in gwslice.iter_mut().zip(wslice).zip(grow) {
                            *gw_i += xv * g;
                            acc += wv * g;
                        }
                        gx[irow + ci] += acc;
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

// ── Pooling ──────────────────────────────────────────────────────────────

/// 2×2 average pooling; spatial extents must be even.
pub fn avg_pool2(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = dims3(x)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("avg_pool2 needs even extents, got {h}x{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = vec![0.0; ho * wo * c];
    for oy in 0..ho {
        for ox in 0..wo {
            let obase = (oy * wo + ox) * c;
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let ibase = ((2 * oy + dy) * w + 2 * ox + dx) * c;
                for ci in 0..c {
                    out[obase + ci] += xd[ibase + ci];
                }
            }
            for v in &mut out[obase..obase + c] {
                *v *= 0.25;
            }
        }
    }
    Tensor::from_vec(&[ho, wo, c], out)
}

pub(crate) fn avg_pool2_bwd(xshape: &[usize], gout: &[f64]) -> Vec<f64> {
    let (h, w, c) = (xshape[0], xshape[1], xshape[2]);
    let (ho, wo) = (h / 2, w / 2);
    let mut gx = vec![0.0; h * w * c];
    for oy in 0..ho {
        for ox in 0..wo {
            let obase = (oy * wo + ox) * c;
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let ibase = ((2 * oy + dy) * w + 2 * ox + dx) * c;
                for ci in 0..c {
                    gx[ibase + ci] = gout[obase + ci] * 0.25;
                }
            }
        }
    }
    gx
}

// ── Weighted binary cross-entropy ────────────────────────────────────────

/// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the logs.
pub const BCE_EPS: f64 = 1e-7;

/// Mean over all elements of `-(w_pos·t·ln p + (1-t)·ln(1-p))` with `p`
/// clamped away from {0, 1}.
pub fn weighted_bce_loss(pred: &Tensor, target: &Tensor, w_pos: f64) -> Result<Tensor> {
    same_shape(pred, target)?;
    let mut acc = 0.0;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        acc -= w_pos * t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    Ok(Tensor::scalar(acc / pred.numel() as f64))
}

/// Gradient w.r.t. predictions; zero where the clamp was active.
pub(crate) fn weighted_bce_bwd(pred: &Tensor, target: &Tensor, w_pos: f64, gout: f64) -> Vec<f64> {
    let inv_n = 1.0 / pred.numel() as f64;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
                0.0
            } else {
                gout * inv_n * (-w_pos * t / p + (1.0 - t) / (1.0 - p))
            }
        })
        .collect()
}

// ── Gather ───────────────────────────────────────────────────────────────

/// Row `j` of the output is the feature vector of `x` at `idx[j]`.
pub fn gather_indices(x: &Tensor, idx: &[(usize, usize)]) -> Result<Tensor> {
    let (h, w, d) = dims3(x)?;
    if idx.is_empty() {
        return Err(Error::contract("gather_indices with empty index list"));
    }
    let xd = x.data();
    let mut out = vec![0.0; idx.len() * d];
    for (j, &(r, c)) in idx.iter().enumerate() {
        if r >= h || c >= w {
            return Err(Error::index(format!("({r},{c}) outside {h}x{w} map")));
        }
        let base = (r * w + c) * d;
        out[j * d..(j + 1) * d].copy_from_slice(&xd[base..base + d]);
    }
    Tensor::from_vec(&[idx.len(), d], out)
}

pub(crate) fn gather_bwd(xshape: &[usize], idx: &[(usize, usize)], gout: &[f64]) -> Vec<f64> {
    let (w, d) = (xshape[1], xshape[2]);
    let mut gx = vec![0.0; xshape.iter().product()];
    for (j, &(r, c)) in idx.iter().enumerate() {
        let base = (r * w + c) * d;
        for k in 0..d {
            gx[base + k] += gout[j * d + k];
        }
    }
    gx
}
