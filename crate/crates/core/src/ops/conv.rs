//! Direct 3D convolution and transposed convolution with exact gradients.
//!
//! Weights are rank-5 tensors in (out_channels, in_channels, kt, kh, kw)
//! layout. The forward pass is a plain direct convolution; the transposed
//! operator is defined as the adjoint of the forward map and implemented by
//! reusing the convolution input-gradient routine with the channel axes of
//! the weight tensor swapped.
//!
//! Summation per output element always runs in the fixed order
//! (in_channel, dt, dy, dx) so results are reproducible bit-for-bit.

use crate::tensor::{Shape5, Tensor5, TensorError};

/// Stride and zero-padding for one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    /// (st, sh, sw), all >= 1
    pub stride: (usize, usize, usize),
    /// (pt, ph, pw) zero-padding per side
    pub padding: (usize, usize, usize),
}

impl ConvSpec {
    pub const fn new(stride: (usize, usize, usize), padding: (usize, usize, usize)) -> Self {
        ConvSpec { stride, padding }
    }

    /// Unit stride with symmetric "same" spatial padding for a (kt, kh, kw) kernel.
    pub const fn same(kh: usize, kw: usize) -> Self {
        ConvSpec {
            stride: (1, 1, 1),
            padding: (0, (kh - 1) / 2, (kw - 1) / 2),
        }
    }

    fn out_dim(in_dim: usize, k: usize, s: usize, p: usize) -> Result<usize, TensorError> {
        let padded = in_dim + 2 * p;
        if k > padded {
            return Err(TensorError::ShapeMismatch(format!(
                "kernel {} larger than padded input {}",
                k, padded
            )));
        }
        Ok((padded - k) / s + 1)
    }

    /// Output shape of a forward convolution of `x` with weights `w`.
    pub fn out_shape(&self, x: Shape5, w: Shape5) -> Result<Shape5, TensorError> {
        if w.c != x.c {
            return Err(TensorError::ShapeMismatch(format!(
                "conv3d: input has {} channels but weights expect {}",
                x.c, w.c
            )));
        }
        let t = Self::out_dim(x.t, w.t, self.stride.0, self.padding.0)?;
        let h = Self::out_dim(x.h, w.h, self.stride.1, self.padding.1)?;
        let wd = Self::out_dim(x.w, w.w, self.stride.2, self.padding.2)?;
        Ok(Shape5::new(x.n, w.n, t, h, wd))
    }
}

/// Zero-pad the t/h/w axes of `x` by `(pt, ph, pw)` per side.
fn pad(x: &Tensor5, p: (usize, usize, usize)) -> Tensor5 {
    if p == (0, 0, 0) {
        return x.clone();
    }
    let s = x.shape();
    let ps = Shape5::new(s.n, s.c, s.t + 2 * p.0, s.h + 2 * p.1, s.w + 2 * p.2);
    let mut out = Tensor5::zeros(ps).expect("padded shape valid");
    for n in 0..s.n {
        for c in 0..s.c {
            for t in 0..s.t {
                for h in 0..s.h {
                    let src = x.row(n, c, t, h);
                    let dst = out.row_mut(n, c, t + p.0, h + p.1);
                    dst[p.2..p.2 + s.w].copy_from_slice(src);
                }
            }
        }
    }
    out
}

/// Inverse of `pad`: copy the interior back out.
fn crop(xpad: &Tensor5, p: (usize, usize, usize), orig: Shape5) -> Tensor5 {
    if p == (0, 0, 0) {
        return xpad.clone();
    }
    let mut out = Tensor5::zeros(orig).expect("orig shape valid");
    for n in 0..orig.n {
        for c in 0..orig.c {
            for t in 0..orig.t {
                for h in 0..orig.h {
                    let src = xpad.row(n, c, t + p.0, h + p.1);
                    out.row_mut(n, c, t, h)
                        .copy_from_slice(&src[p.2..p.2 + orig.w]);
                }
            }
        }
    }
    out
}

/// Dot product with four independent accumulators; the serial mul_add
/// chain is FMA-latency-bound otherwise. Summation order is still fixed.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            s[l] = x[l].mul_add(y[l], s[l]);
        }
    }
    let mut tail = 0.0f64;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = x.mul_add(*y, tail);
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

fn check_bias(bias: &[f64], out_c: usize) -> Result<(), TensorError> {
    if bias.len() != out_c {
        return Err(TensorError::ShapeMismatch(format!(
            "bias length {} != output channels {}",
            bias.len(),
            out_c
        )));
    }
    Ok(())
}

/// out[n,o,t,y,x] = bias[o] + sum over (i, dt, dy, dx) of
/// x_padded[n, i, t*st+dt, y*sh+dy, x*sw+dx] * w[o, i, dt, dy, dx].
pub fn conv3d_forward(
    x: &Tensor5,
    w: &Tensor5,
    bias: &[f64],
    spec: &ConvSpec,
) -> Result<Tensor5, TensorError> {
    let os = spec.out_shape(x.shape(), w.shape())?;
    check_bias(bias, os.c)?;
    let xp = pad(x, spec.padding);
    let ws = w.shape();
    let (st, sh, sw) = spec.stride;
    let mut out = Tensor5::zeros(os)?;
    let mut acc = vec![0.0f64; os.w];
    for n in 0..os.n {
        for o in 0..os.c {
            for t in 0..os.t {
                for y in 0..os.h {
                    acc.iter_mut().for_each(|a| *a = bias[o]);
                    for i in 0..ws.c {
                        for dt in 0..ws.t {
                            for dy in 0..ws.h {
                                let xr = xp.row(n, i, t * st + dt, y * sh + dy);
                                for dx in 0..ws.w {
                                    let wv = w.at(o, i, dt, dy, dx);
                                    if sw == 1 {
                                        let src = &xr[dx..dx + os.w];
                                        for (a, &v) in acc.iter_mut().zip(src) {
                                            *a = v.mul_add(wv, *a);
                                        }
                                    } else {
                                        for (xo, a) in acc.iter_mut().enumerate() {
                                            *a = xr[xo * sw + dx].mul_add(wv, *a);
                                        }
                                    }
                                }
                            }
                        }
                    }
                    out.row_mut(n, o, t, y).copy_from_slice(&acc);
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of the loss w.r.t. the convolution input.
pub fn conv3d_backward_input(
    x_shape: Shape5,
    w: &Tensor5,
    spec: &ConvSpec,
    grad_out: &Tensor5,
) -> Result<Tensor5, TensorError> {
    let os = spec.out_shape(x_shape, w.shape())?;
    if os != grad_out.shape() {
        return Err(TensorError::ShapeMismatch(format!(
            "conv3d_backward: grad_out shape {} != forward output {}",
            grad_out.shape(),
            os
        )));
    }
    let ws = w.shape();
    let (st, sh, sw) = spec.stride;
    let p = spec.padding;
    let ps = Shape5::new(
        x_shape.n,
        x_shape.c,
        x_shape.t + 2 * p.0,
        x_shape.h + 2 * p.1,
        x_shape.w + 2 * p.2,
    );
    let mut gxp = Tensor5::zeros(ps)?;
    for n in 0..os.n {
        for o in 0..os.c {
            for t in 0..os.t {
                for y in 0..os.h {
                    let goff = grad_out.offset(n, o, t, y, 0);
                    for i in 0..ws.c {
                        for dt in 0..ws.t {
                            for dy in 0..ws.h {
                                let dst_off = gxp.offset(n, i, t * st + dt, y * sh + dy, 0);
                                for dx in 0..ws.w {
                                    let wv = w.at(o, i, dt, dy, dx);
                                    let gr = &grad_out.data()[goff..goff + os.w];
                                    let dr = &mut gxp.data_mut()[dst_off..dst_off + ps.w];
                                    if sw == 1 {
                                        for (g, d) in gr.iter().zip(dr[dx..dx + os.w].iter_mut()) {
                                            *d = g.mul_add(wv, *d);
                                        }
                                    } else {
                                        for (xo, g) in gr.iter().enumerate() {
                                            dr[xo * sw + dx] = g.mul_add(wv, dr[xo * sw + dx]);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(crop(&gxp, p, x_shape))
}

/// Gradients w.r.t. weights and bias.
pub fn conv3d_backward_params(
    x: &Tensor5,
    w_shape: Shape5,
    spec: &ConvSpec,
    grad_out: &Tensor5,
) -> Result<(Tensor5, Vec<f64>), TensorError> {
    let os = spec.out_shape(x.shape(), w_shape)?;
    if os != grad_out.shape() {
        return Err(TensorError::ShapeMismatch(format!(
            "conv3d_backward: grad_out shape {} != forward output {}",
            grad_out.shape(),
            os
        )));
    }
    let xp = pad(x, spec.padding);
    let (st, sh, sw) = spec.stride;
    let mut gw = Tensor5::zeros(w_shape)?;
    let mut gb = vec![0.0f64; w_shape.n];
    for n in 0..os.n {
        for o in 0..os.c {
            for t in 0..os.t {
                for y in 0..os.h {
                    let gr = grad_out.row(n, o, t, y);
                    gb[o] += gr.iter().sum::<f64>();
                    for i in 0..w_shape.c {
                        for dt in 0..w_shape.t {
                            for dy in 0..w_shape.h {
                                let xr = xp.row(n, i, t * st + dt, y * sh + dy);
                                for dx in 0..w_shape.w {
                                    let mut acc = 0.0f64;
                                    if sw == 1 {
                                        acc = dot(gr, &xr[dx..dx + os.w]);
                                    } else {
                                        for (xo, g) in gr.iter().enumerate() {
                                            acc = g.mul_add(xr[xo * sw + dx], acc);
                                        }
                                    }
                                    *gw.at_mut(o, i, dt, dy, dx) += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((gw, gb))
}

/// Full backward pass: (grad_x, grad_weights, grad_bias).
pub fn conv3d_backward(
    x: &Tensor5,
    w: &Tensor5,
    spec: &ConvSpec,
    grad_out: &Tensor5,
) -> Result<(Tensor5, Tensor5, Vec<f64>), TensorError> {
    let gx = conv3d_backward_input(x.shape(), w, spec, grad_out)?;
    let (gw, gb) = conv3d_backward_params(x, w.shape(), spec, grad_out)?;
    Ok((gx, gw, gb))
}

/// Swap the out/in channel axes of a weight tensor.
pub fn swap_oi(w: &Tensor5) -> Tensor5 {
    let s = w.shape();
    let ns = Shape5::new(s.c, s.n, s.t, s.h, s.w);
    let mut out = Tensor5::zeros(ns).expect("swapped shape valid");
    let kvol = s.t * s.h * s.w;
    for o in 0..s.n {
        for i in 0..s.c {
            let src = &w.data()[(o * s.c + i) * kvol..(o * s.c + i + 1) * kvol];
            out.data_mut()[(i * s.n + o) * kvol..(i * s.n + o + 1) * kvol].copy_from_slice(src);
        }
    }
    out
}

/// Shape of tconv3d_forward output for input `x` and weights `w` (out, in, kt, kh, kw).
pub fn tconv_out_shape(x: Shape5, w: Shape5, spec: &ConvSpec) -> Result<Shape5, TensorError> {
    if w.c != x.c {
        return Err(TensorError::ShapeMismatch(format!(
            "tconv3d: input has {} channels but weights expect {}",
            x.c, w.c
        )));
    }
    let (st, sh, sw) = spec.stride;
    let (pt, ph, pw) = spec.padding;
    let dim = |i: usize, k: usize, s: usize, p: usize| -> Result<usize, TensorError> {
        let v = (i - 1) * s + k;
        if v < 2 * p + 1 {
            return Err(TensorError::ShapeMismatch(
                "tconv3d: padding exceeds output extent".into(),
            ));
        }
        Ok(v - 2 * p)
    };
    Ok(Shape5::new(
        x.n,
        w.n,
        dim(x.t, w.t, st, pt)?,
        dim(x.h, w.h, sh, ph)?,
        dim(x.w, w.w, sw, pw)?,
    ))
}

/// Transposed convolution: the adjoint of conv3d_forward with the same
/// weights, plus a per-output-channel bias. Equivalent to the input
/// gradient of a convolution that maps the output space back to the input
/// space.
pub fn tconv3d_forward(
    x: &Tensor5,
    w: &Tensor5,
    bias: &[f64],
    spec: &ConvSpec,
) -> Result<Tensor5, TensorError> {
    let os = tconv_out_shape(x.shape(), w.shape(), spec)?;
    check_bias(bias, os.c)?;
    let v = swap_oi(w);
    let mut out = conv3d_backward_input(os, &v, spec, x)?;
    let plane = os.t * os.h * os.w;
    for n in 0..os.n {
        for o in 0..os.c {
            let start = (n * os.c + o) * plane;
            for e in &mut out.data_mut()[start..start + plane] {
                *e += bias[o];
            }
        }
    }
    Ok(out)
}

/// Backward pass of tconv3d_forward: (grad_x, grad_weights, grad_bias).
///
/// By transposition, grad_x is a plain forward convolution of grad_out with
/// the channel-swapped weights.
pub fn tconv3d_backward(
    x: &Tensor5,
    w: &Tensor5,
    spec: &ConvSpec,
    grad_out: &Tensor5,
) -> Result<(Tensor5, Tensor5, Vec<f64>), TensorError> {
    let os = tconv_out_shape(x.shape(), w.shape(), spec)?;
    if os != grad_out.shape() {
        return Err(TensorError::ShapeMismatch(format!(
            "tconv3d_backward: grad_out shape {} != forward output {}",
            grad_out.shape(),
            os
        )));
    }
    let v = swap_oi(w);
    let zero = vec![0.0f64; x.shape().c];
    let gx = conv3d_forward(grad_out, &v, &zero, spec)?;
    let vs = v.shape();
    let (gv, _) = conv3d_backward_params(grad_out, vs, spec, x)?;
    let gw = swap_oi(&gv);
    let mut gb = vec![0.0f64; os.c];
    let plane = os.t * os.h * os.w;
    for n in 0..os.n {
        for (o, g) in gb.iter_mut().enumerate() {
            let start = (n * os.c + o) * plane;
            *g += grad_out.data()[start..start + plane].iter().sum::<f64>();
        }
    }
    Ok((gx, gw, gb))
}
