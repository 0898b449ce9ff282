use crate::exec;
use crate::labels::LabelMap;
use crate::{Error, Real, Result};

use super::Tensor;

/// Axis along which [`conv1d_axis`] slides its kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Along each row (the width axis).
    Row,
    /// Along each column (the height axis).
    Column,
}

// ---------------------------------------------------------------------------
// Line kernels shared by the 1D convolutions and the scans.
//
// A "line" block is `channels × len` values where channel `c` starts at
// `c * stride`. Every output element accumulates its terms in (channel, tap)
// order, so results do not depend on how callers split the work.

#[inline]
fn tap_range(len: usize, off: isize) -> (usize, usize) {
    let lo = if off < 0 { (-off) as usize } else { 0 };
    let hi = if off > 0 {
        len.saturating_sub(off as usize)
    } else {
        len
    };
    (lo, hi.max(lo))
}

/// `out[x] += Σ_c Σ_t kernel_o[c·k + t] · src[c, x + t − k/2]`, zero padded.
#[inline]
pub(crate) fn line_conv_acc<T: Real>(
    kernel_o: &[T],
    k: usize,
    src: &[T],
    stride: usize,
    channels: usize,
    out: &mut [T],
) {
    let len = out.len();
    let pad = (k / 2) as isize;
    for c in 0..channels {
        let line = &src[c * stride..c * stride + len];
        for t in 0..k {
            let w = kernel_o[c * k + t];
            let off = t as isize - pad;
            let (lo, hi) = tap_range(len, off);
            if lo >= hi {
                continue;
            }
            let s = &line[(lo as isize + off) as usize..(hi as isize + off) as usize];
            for (o, &v) in out[lo..hi].iter_mut().zip(s) {
                *o += w * v;
            }
        }
    }
}

/// Output channels per register block in [`line_conv_acc_block`].
pub(crate) const LINE_BLOCK: usize = 4;

/// [`line_conv_acc`] for up to [`LINE_BLOCK`] consecutive output channels at
/// once, reading each source element once per block. `out` holds
/// `kernels.len() / (channels·k)` lines of `len`. Per-element summation order
/// is identical to calling [`line_conv_acc`] per channel.
#[inline]
pub(crate) fn line_conv_acc_block<T: Real>(
    kernels: &[T],
    k: usize,
    src: &[T],
    stride: usize,
    channels: usize,
    out: &mut [T],
    len: usize,
) {
    let per = channels * k;
    let nb = kernels.len() / per;
    if nb != LINE_BLOCK {
        for (j, line) in out.chunks_exact_mut(len).enumerate() {
            line_conv_acc(
                &kernels[j * per..(j + 1) * per],
                k,
                src,
                stride,
                channels,
                line,
            );
        }
        return;
    }
    let pad = (k / 2) as isize;
    let (r0, rest) = out.split_at_mut(len);
    let (r1, rest) = rest.split_at_mut(len);
    let (r2, r3) = rest.split_at_mut(len);
    for c in 0..channels {
        let line = &src[c * stride..c * stride + len];
        for t in 0..k {
            let i = c * k + t;
            let (w0, w1, w2, w3) = (
                kernels[i],
                kernels[per + i],
                kernels[2 * per + i],
                kernels[3 * per + i],
            );
            let off = t as isize - pad;
            let (lo, hi) = tap_range(len, off);
            if lo >= hi {
                continue;
            }
            let s = &line[(lo as isize + off) as usize..(hi as isize + off) as usize];
            let n = s.len();
            let (a, b, cc, d) = (
                &mut r0[lo..lo + n],
                &mut r1[lo..lo + n],
                &mut r2[lo..lo + n],
                &mut r3[lo..lo + n],
            );
            for x in 0..n {
                let v = s[x];
                a[x] += w0 * v;
                b[x] += w1 * v;
                cc[x] += w2 * v;
                d[x] += w3 * v;
            }
        }
    }
}

/// Kernel adjoint: `dkernel_o[c·k + t] += Σ_x dout[x] · src[c, x + t − k/2]`.
#[inline]
pub(crate) fn line_conv_kernel_grad<T: Real>(
    dout: &[T],
    k: usize,
    src: &[T],
    stride: usize,
    channels: usize,
    dkernel_o: &mut [T],
) {
    let len = dout.len();
    let pad = (k / 2) as isize;
    for c in 0..channels {
        let line = &src[c * stride..c * stride + len];
        for t in 0..k {
            let off = t as isize - pad;
            let (lo, hi) = tap_range(len, off);
            let mut acc = T::zero();
            for x in lo..hi {
                acc += dout[x] * line[(x as isize + off) as usize];
            }
            dkernel_o[c * k + t] += acc;
        }
    }
}

/// Input adjoint for one input channel `c`:
/// `dsrc[y] += Σ_o Σ_t kernel[o, c, t] · dout[o, y − t + k/2]`.
#[inline]
pub(crate) fn line_conv_input_grad<T: Real>(
    kernel: &[T],
    cout: usize,
    cin: usize,
    k: usize,
    c: usize,
    dout: &[T],
    stride: usize,
    dsrc: &mut [T],
) {
    let len = dsrc.len();
    let pad = (k / 2) as isize;
    for o in 0..cout {
        let g = &dout[o * stride..o * stride + len];
        for t in 0..k {
            let w = kernel[(o * cin + c) * k + t];
            // dsrc[y] pairs with dout[x] where y = x + off.
            let off = t as isize - pad;
            let (lo, hi) = tap_range(len, off);
            if lo >= hi {
                continue;
            }
            let d = &mut dsrc[(lo as isize + off) as usize..(hi as isize + off) as usize];
            for (s, &v) in d.iter_mut().zip(&g[lo..hi]) {
                *s += w * v;
            }
        }
    }
}

// ---------------------------------------------------------------------------

fn check_conv1d<T: Real>(
    op: &'static str,
    input: &Tensor<T>,
    kernel: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (cin, h, w) = input.dims3(op)?;
    let [cout, kcin, k] = kernel.shape()[..] else {
        return Err(Error::invalid(
            op,
            format!("kernel must be Cout×Cin×k, got shape {:?}", kernel.shape()),
        ));
    };
    if k % 2 == 0 {
        return Err(Error::invalid(op, format!("kernel extent {k} must be odd")));
    }
    if kcin != cin {
        return Err(Error::shape(op, &[cout, cin, k], kernel.shape()));
    }
    Ok((cin, cout, k, h, w))
}

/// Swaps the two spatial axes of a `C×H×W` tensor.
pub fn transpose_hw<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..h {
            for xx in 0..w {
                out[base + xx * h + y] = src[base + y * w + xx];
            }
        }
    }
    Tensor::from_vec(&[c, w, h], out).expect("same element count")
}

fn conv1d_rows<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &[T],
    dims: (usize, usize, usize, usize, usize),
) -> Tensor<T> {
    let (cin, cout, k, h, w) = dims;
    let plane = h * w;
    let mut out = vec![T::zero(); cout * plane];
    let (src, kd) = (input.data(), kernel.data());
    exec::for_each_chunk(&mut out, plane, cout * cin * k * plane, |o, dst| {
        let ko = &kd[o * cin * k..(o + 1) * cin * k];
        for y in 0..h {
            let row = &mut dst[y * w..(y + 1) * w];
            row.iter_mut().for_each(|v| *v = bias[o]);
            line_conv_acc(ko, k, &src[y * w..], plane, cin, row);
        }
    });
    Tensor::from_vec(&[cout, h, w], out).expect("sized above")
}

/// 1D cross-correlation along `axis` with channel mixing and zero padding
/// of `(k − 1)/2`. Spatial extents are preserved.
pub fn conv1d_axis<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    axis: Axis,
) -> Result<Tensor<T>> {
    const OP: &str = "conv1d_axis";
    let dims = check_conv1d(OP, input, kernel)?;
    bias.ensure_shape(OP, &[dims.1])?;
    match axis {
        Axis::Row => Ok(conv1d_rows(input, kernel, bias.data(), dims)),
        Axis::Column => {
            let (cin, cout, k, h, w) = dims;
            let t = transpose_hw(input);
            let out = conv1d_rows(&t, kernel, bias.data(), (cin, cout, k, w, h));
            Ok(transpose_hw(&out))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

fn conv1d_rows_vjp<T: Real>(
    upstream: &Tensor<T>,
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    dims: (usize, usize, usize, usize, usize),
) -> Conv1dGrads<T> {
    let (cin, cout, k, h, w) = dims;
    let plane = h * w;
    let (g, src, kd) = (upstream.data(), input.data(), kernel.data());

    let mut dkernel = vec![T::zero(); cout * cin * k];
    exec::for_each_chunk(&mut dkernel, cin * k, cout * cin * k * plane, |o, dk| {
        for y in 0..h {
            let go = &g[o * plane + y * w..o * plane + (y + 1) * w];
            line_conv_kernel_grad(go, k, &src[y * w..], plane, cin, dk);
        }
    });
    let dbias = (0..cout)
        .map(|o| g[o * plane..(o + 1) * plane].iter().copied().sum())
        .collect();
    let mut dinput = vec![T::zero(); cin * plane];
    exec::for_each_chunk(&mut dinput, plane, cout * cin * k * plane, |c, di| {
        for y in 0..h {
            line_conv_input_grad(
                kd,
                cout,
                cin,
                k,
                c,
                &g[y * w..],
                plane,
                &mut di[y * w..(y + 1) * w],
            );
        }
    });
    Conv1dGrads {
        input: Tensor::from_vec(&[cin, h, w], dinput).expect("sized"),
        kernel: Tensor::from_vec(&[cout, cin, k], dkernel).expect("sized"),
        bias: Tensor::from_vec(&[cout], dbias).expect("sized"),
    }
}

/// Adjoint of [`conv1d_axis`] with respect to input, kernel and bias.
pub fn conv1d_axis_vjp<T: Real>(
    upstream: &Tensor<T>,
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    axis: Axis,
) -> Result<Conv1dGrads<T>> {
    const OP: &str = "conv1d_axis_vjp";
    let dims = check_conv1d(OP, input, kernel)?;
    let (cin, cout, k, h, w) = dims;
    upstream.ensure_shape(OP, &[cout, h, w])?;
    match axis {
        Axis::Row => Ok(conv1d_rows_vjp(upstream, input, kernel, dims)),
        Axis::Column => {
            let mut g = conv1d_rows_vjp(
                &transpose_hw(upstream),
                &transpose_hw(input),
                kernel,
                (cin, cout, k, w, h),
            );
            g.input = transpose_hw(&g.input);
            Ok(g)
        }
    }
}

// ---------------------------------------------------------------------------

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given the pre-activation `x`; the kink at 0 takes slope 0.
pub fn relu_vjp<T: Real>(upstream: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    upstream.ensure_shape("relu_vjp", x.shape())?;
    let data = upstream
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Gradient of the sigmoid given its output `y`.
pub fn sigmoid_vjp<T: Real>(upstream: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    upstream.ensure_shape("sigmoid_vjp", y.shape())?;
    let data = upstream
        .data()
        .iter()
        .zip(y.data())
        .map(|(&g, &s)| g * s * (T::one() - s))
        .collect();
    Tensor::from_vec(y.shape(), data)
}

// ---------------------------------------------------------------------------

/// Per-pixel softmax over the channel axis of a `C×H×W` tensor.
pub fn softmax_channels<T: Real>(scores: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = scores.dims3("softmax_channels")?;
    if c == 0 {
        return Err(Error::invalid(
            "softmax_channels",
            "need at least one channel",
        ));
    }
    let plane = h * w;
    let s = scores.data();
    let mut out = vec![T::zero(); s.len()];
    for p in 0..plane {
        let mut m = s[p];
        for k in 1..c {
            m = m.max(s[k * plane + p]);
        }
        let mut z = T::zero();
        for k in 0..c {
            let e = (s[k * plane + p] - m).exp();
            out[k * plane + p] = e;
            z += e;
        }
        for k in 0..c {
            out[k * plane + p] = out[k * plane + p] / z;
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}

/// Adjoint of [`softmax_channels`] given its output `probs`.
pub fn softmax_channels_vjp<T: Real>(upstream: &Tensor<T>, probs: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = probs.dims3("softmax_channels_vjp")?;
    upstream.ensure_shape("softmax_channels_vjp", probs.shape())?;
    let plane = h * w;
    let (g, y) = (upstream.data(), probs.data());
    let mut out = vec![T::zero(); g.len()];
    for p in 0..plane {
        let mut dot = T::zero();
        for k in 0..c {
            dot += g[k * plane + p] * y[k * plane + p];
        }
        for k in 0..c {
            out[k * plane + p] = y[k * plane + p] * (g[k * plane + p] - dot);
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}

// ---------------------------------------------------------------------------

fn check_targets<T: Real>(
    op: &'static str,
    scores: &Tensor<T>,
    target: &LabelMap,
) -> Result<usize> {
    let (c, h, w) = scores.dims3(op)?;
    if target.height() != h || target.width() != w {
        return Err(Error::shape(
            op,
            &[c, h, w],
            &[c, target.height(), target.width()],
        ));
    }
    for &v in target.values() {
        if v != target.ignore_value() && v as usize >= c {
            return Err(Error::range(
                op,
                format!("target class {v} is not below the channel count {c}"),
            ));
        }
    }
    Ok(c)
}

/// Mean over non-ignored pixels of `−log softmax(scores)[target]`.
/// A map with no evaluated pixels has loss 0.
pub fn cross_entropy_masked<T: Real>(scores: &Tensor<T>, target: &LabelMap) -> Result<T> {
    let c = check_targets("cross_entropy_masked", scores, target)?;
    let plane = target.len();
    let s = scores.data();
    let ignore = target.ignore_value();
    let mut total = T::zero();
    let mut count = 0usize;
    for (p, &t) in target.values().iter().enumerate() {
        if t == ignore {
            continue;
        }
        let mut m = s[p];
        for k in 1..c {
            m = m.max(s[k * plane + p]);
        }
        let mut z = T::zero();
        for k in 0..c {
            z += (s[k * plane + p] - m).exp();
        }
        total += z.ln() + m - s[t as usize * plane + p];
        count += 1;
    }
    if count == 0 {
        return Ok(T::zero());
    }
    Ok(total / T::of(count as f64))
}

/// Gradient of `upstream · cross_entropy_masked(scores, target)` with respect to `scores`.
pub fn cross_entropy_masked_vjp<T: Real>(
    upstream: T,
    scores: &Tensor<T>,
    target: &LabelMap,
) -> Result<Tensor<T>> {
    let c = check_targets("cross_entropy_masked_vjp", scores, target)?;
    let ignore = target.ignore_value();
    let count = target.values().iter().filter(|&&v| v != ignore).count();
    let mut grad = Tensor::zeros(scores.shape());
    if count == 0 {
        return Ok(grad);
    }
    let probs = softmax_channels(scores)?;
    let plane = target.len();
    let scale = upstream / T::of(count as f64);
    let (y, g) = (probs.data(), grad.data_mut());
    for (p, &t) in target.values().iter().enumerate() {
        if t == ignore {
            continue;
        }
        for k in 0..c {
            let onehot = if k == t as usize { T::one() } else { T::zero() };
            g[k * plane + p] = scale * (y[k * plane + p] - onehot);
        }
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------

/// Per-pixel linear map `out[o] = Σ_c weight[o, c] · x[c] (+ bias[o])`.
pub fn pointwise_linear<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    const OP: &str = "pointwise_linear";
    let (cin, h, w) = x.dims3(OP)?;
    let [cout, wc] = weight.shape()[..] else {
        return Err(Error::invalid(
            OP,
            format!("weight must be Cout×Cin, got {:?}", weight.shape()),
        ));
    };
    if wc != cin {
        return Err(Error::shape(OP, &[cout, cin], weight.shape()));
    }
    if let Some(b) = bias {
        b.ensure_shape(OP, &[cout])?;
    }
    let plane = h * w;
    let (src, wd) = (x.data(), weight.data());
    let mut out = vec![T::zero(); cout * plane];
    exec::for_each_chunk(&mut out, plane, cout * cin * plane, |o, dst| {
        if let Some(b) = bias {
            dst.iter_mut().for_each(|v| *v = b.data()[o]);
        }
        for c in 0..cin {
            let wv = wd[o * cin + c];
            for (d, &s) in dst.iter_mut().zip(&src[c * plane..(c + 1) * plane]) {
                *d += wv * s;
            }
        }
    });
    Tensor::from_vec(&[cout, h, w], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn pointwise_linear_vjp<T: Real>(
    upstream: &Tensor<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    const OP: &str = "pointwise_linear_vjp";
    let (cin, h, w) = x.dims3(OP)?;
    let cout = weight.shape()[0];
    weight.ensure_shape(OP, &[cout, cin])?;
    upstream.ensure_shape(OP, &[cout, h, w])?;
    let plane = h * w;
    let (g, src, wd) = (upstream.data(), x.data(), weight.data());
    let mut dweight = vec![T::zero(); cout * cin];
    exec::for_each_chunk(&mut dweight, cin, cout * cin * plane, |o, dw| {
        let go = &g[o * plane..(o + 1) * plane];
        for (c, d) in dw.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (&a, &b) in go.iter().zip(&src[c * plane..(c + 1) * plane]) {
                acc += a * b;
            }
            *d = acc;
        }
    });
    let dbias = (0..cout)
        .map(|o| g[o * plane..(o + 1) * plane].iter().copied().sum())
        .collect();
    let mut dinput = vec![T::zero(); cin * plane];
    exec::for_each_chunk(&mut dinput, plane, cout * cin * plane, |c, di| {
        for o in 0..cout {
            let wv = wd[o * cin + c];
            for (d, &v) in di.iter_mut().zip(&g[o * plane..(o + 1) * plane]) {
                *d += wv * v;
            }
        }
    });
    Ok(LinearGrads {
        input: Tensor::from_vec(&[cin, h, w], dinput)?,
        weight: Tensor::from_vec(&[cout, cin], dweight)?,
        bias: Tensor::from_vec(&[cout], dbias)?,
    })
}

// ---------------------------------------------------------------------------

fn check_conv2d<T: Real>(
    op: &'static str,
    x: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (cin, h, w) = x.dims3(op)?;
    let [cout, wc, kh, kw] = weight.shape()[..] else {
        return Err(Error::invalid(
            op,
            format!("weight must be Cout×Cin×k×k, got {:?}", weight.shape()),
        ));
    };
    if wc != cin || kh != kw || kh % 2 == 0 {
        return Err(Error::shape(op, &[cout, cin, kh, kh], weight.shape()));
    }
    Ok((cin, cout, kh, h, w))
}

/// Visits every tap of a dilated `k×k` kernel together with the output
/// rectangle `[y0, y1) × [x0, x1)` whose shifted source stays in bounds.
fn for_each_tap(
    k: usize,
    dilation: usize,
    h: usize,
    w: usize,
    mut f: impl FnMut(usize, isize, isize, usize, usize, usize, usize),
) {
    let half = (k / 2) as isize;
    for ky in 0..k {
        let dy = (ky as isize - half) * dilation as isize;
        let (y0, y1) = tap_range(h, dy);
        for kx in 0..k {
            let dx = (kx as isize - half) * dilation as isize;
            let (x0, x1) = tap_range(w, dx);
            if y0 < y1 && x0 < x1 {
                f(ky * k + kx, dy, dx, y0, y1, x0, x1);
            }
        }
    }
}

/// Stride-1 dilated 2D cross-correlation with zero padding `dilation·(k − 1)/2`.
pub fn conv2d_dilated<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    dilation: usize,
) -> Result<Tensor<T>> {
    const OP: &str = "conv2d_dilated";
    let (cin, cout, k, h, w) = check_conv2d(OP, x, weight)?;
    bias.ensure_shape(OP, &[cout])?;
    let plane = h * w;
    let (src, wd, bd) = (x.data(), weight.data(), bias.data());
    let mut out = vec![T::zero(); cout * plane];
    exec::for_each_chunk(&mut out, plane, cout * cin * k * k * plane, |o, dst| {
        dst.iter_mut().for_each(|v| *v = bd[o]);
        for c in 0..cin {
            let s = &src[c * plane..(c + 1) * plane];
            let wk = &wd[(o * cin + c) * k * k..(o * cin + c + 1) * k * k];
            for_each_tap(k, dilation, h, w, |t, dy, dx, y0, y1, x0, x1| {
                let wv = wk[t];
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    let srow = &s[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                    for (d, &v) in dst[y * w + x0..y * w + x1].iter_mut().zip(srow) {
                        *d += wv * v;
                    }
                }
            });
        }
    });
    Tensor::from_vec(&[cout, h, w], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_dilated_vjp<T: Real>(
    upstream: &Tensor<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dilation: usize,
) -> Result<Conv2dGrads<T>> {
    const OP: &str = "conv2d_dilated_vjp";
    let (cin, cout, k, h, w) = check_conv2d(OP, x, weight)?;
    upstream.ensure_shape(OP, &[cout, h, w])?;
    let plane = h * w;
    let kk = k * k;
    let work = cout * cin * kk * plane;
    let (g, src, wd) = (upstream.data(), x.data(), weight.data());

    let mut dweight = vec![T::zero(); cout * cin * kk];
    exec::for_each_chunk(&mut dweight, cin * kk, work, |o, dw| {
        let go = &g[o * plane..(o + 1) * plane];
        for c in 0..cin {
            let s = &src[c * plane..(c + 1) * plane];
            for_each_tap(k, dilation, h, w, |t, dy, dx, y0, y1, x0, x1| {
                let mut acc = T::zero();
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    let srow = &s[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                    for (&a, &b) in go[y * w + x0..y * w + x1].iter().zip(srow) {
                        acc += a * b;
                    }
                }
                dw[c * kk + t] = acc;
            });
        }
    });
    let dbias = (0..cout)
        .map(|o| g[o * plane..(o + 1) * plane].iter().copied().sum())
        .collect();
    let mut dinput = vec![T::zero(); cin * plane];
    exec::for_each_chunk(&mut dinput, plane, work, |c, di| {
        for o in 0..cout {
            let go = &g[o * plane..(o + 1) * plane];
            let wk = &wd[(o * cin + c) * kk..(o * cin + c + 1) * kk];
            for_each_tap(k, dilation, h, w, |t, dy, dx, y0, y1, x0, x1| {
                let wv = wk[t];
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    let drow = &mut di[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                    for (d, &v) in drow.iter_mut().zip(&go[y * w + x0..y * w + x1]) {
                        *d += wv * v;
                    }
                }
            });
        }
    });
    Ok(Conv2dGrads {
        input: Tensor::from_vec(&[cin, h, w], dinput)?,
        weight: Tensor::from_vec(&[cout, cin, k, k], dweight)?,
        bias: Tensor::from_vec(&[cout], dbias)?,
    })
}
