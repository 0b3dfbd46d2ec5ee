//! 1x2x2 max pooling and nearest-neighbor upsampling with exact adjoints.

use crate::tensor::{Shape5, Tensor5, TensorError};

/// Flat input index of the selected maximum for every pooled output element.
#[derive(Debug, Clone)]
pub struct PoolIndices {
    pub input_shape: Shape5,
    pub argmax: Vec<usize>,
}

/// Spatial 2x2 max pooling (temporal depth untouched). Ties resolve to the
/// lowest flat index so the backward routing is deterministic.
pub fn maxpool_122(x: &Tensor5) -> Result<(Tensor5, PoolIndices), TensorError> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(TensorError::ShapeMismatch(format!(
            "maxpool_122 needs even h and w, got {}x{}",
            s.h, s.w
        )));
    }
    let os = Shape5::new(s.n, s.c, s.t, s.h / 2, s.w / 2);
    let mut out = Tensor5::zeros(os)?;
    let mut argmax = vec![0usize; os.len()];
    let mut k = 0;
    for n in 0..s.n {
        for c in 0..s.c {
            for t in 0..s.t {
                for y in 0..os.h {
                    let top = x.row(n, c, t, 2 * y);
                    let bot = x.row(n, c, t, 2 * y + 1);
                    let top_off = x.offset(n, c, t, 2 * y, 0);
                    let bot_off = x.offset(n, c, t, 2 * y + 1, 0);
                    let orow = out.row_mut(n, c, t, y);
                    for xo in 0..os.w {
                        let cand = [
                            (top[2 * xo], top_off + 2 * xo),
                            (top[2 * xo + 1], top_off + 2 * xo + 1),
                            (bot[2 * xo], bot_off + 2 * xo),
                            (bot[2 * xo + 1], bot_off + 2 * xo + 1),
                        ];
                        let mut best = cand[0];
                        for &c in &cand[1..] {
                            if c.0 > best.0 {
                                best = c;
                            }
                        }
                        orow[xo] = best.0;
                        argmax[k] = best.1;
                        k += 1;
                    }
                }
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_shape: s,
            argmax,
        },
    ))
}

/// Route upstream gradients to the recorded argmax positions.
pub fn maxpool_122_backward(
    indices: &PoolIndices,
    grad_out: &Tensor5,
) -> Result<Tensor5, TensorError> {
    if grad_out.shape().len() != indices.argmax.len() {
        return Err(TensorError::ShapeMismatch(format!(
            "maxpool backward: grad_out has {} elements, indices {}",
            grad_out.shape().len(),
            indices.argmax.len()
        )));
    }
    let mut gx = Tensor5::zeros(indices.input_shape)?;
    for (&idx, &g) in indices.argmax.iter().zip(grad_out.iter()) {
        gx.data_mut()[idx] += g;
    }
    Ok(gx)
}

/// Nearest-neighbor 1x2x2 upsampling: each element fills a 2x2 spatial block.
pub fn upsample_122(x: &Tensor5) -> Result<Tensor5, TensorError> {
    let s = x.shape();
    let os = Shape5::new(s.n, s.c, s.t, s.h * 2, s.w * 2);
    let mut out = Tensor5::zeros(os)?;
    for n in 0..s.n {
        for c in 0..s.c {
            for t in 0..s.t {
                for y in 0..s.h {
                    let src_off = x.offset(n, c, t, y, 0);
                    for dy in 0..2 {
                        let dst = out.row_mut(n, c, t, 2 * y + dy);
                        for xo in 0..s.w {
                            let v = x.data()[src_off + xo];
                            dst[2 * xo] = v;
                            dst[2 * xo + 1] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of upsample_122: sum the four upstream gradients per source element.
pub fn upsample_122_backward(grad_out: &Tensor5) -> Result<Tensor5, TensorError> {
    let s = grad_out.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(TensorError::ShapeMismatch(format!(
            "upsample backward needs even h and w, got {}x{}",
            s.h, s.w
        )));
    }
    let os = Shape5::new(s.n, s.c, s.t, s.h / 2, s.w / 2);
    let mut gx = Tensor5::zeros(os)?;
    for n in 0..s.n {
        for c in 0..s.c {
            for t in 0..s.t {
                for y in 0..os.h {
                    let top = grad_out.row(n, c, t, 2 * y);
                    let bot = grad_out.row(n, c, t, 2 * y + 1);
                    let dst = gx.row_mut(n, c, t, y);
                    for xo in 0..os.w {
                        dst[xo] = top[2 * xo] + top[2 * xo + 1] + bot[2 * xo] + bot[2 * xo + 1];
                    }
                }
            }
        }
    }
    Ok(gx)
}
