//! Dense rank-5 tensors in (batch, channel, time, height, width) layout.
//!
//! Everything in the pipeline — frames, feature maps, convolution weights,
//! gradients — is a `Tensor5` of `f64` values stored row-major with the
//! width axis fastest-varying, so the innermost convolution loops walk
//! contiguous memory.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("dimension must be >= 1, got shape {0:?}")]
    ZeroDim(Shape5),
    #[error("element count overflows usize for shape {0:?}")]
    SizeOverflow(Shape5),
    #[error("index {idx:?} out of bounds for shape {shape:?}")]
    IndexOutOfBounds { idx: [usize; 5], shape: Shape5 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Dimensions of a rank-5 tensor: (n, c, t, h, w).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape5 {
    pub n: usize,
    pub c: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape5 {
    pub const fn new(n: usize, c: usize, t: usize, h: usize, w: usize) -> Self {
        Shape5 { n, c, t, h, w }
    }

    /// Total element count, failing on zero dims or overflow.
    pub fn checked_len(&self) -> Result<usize, TensorError> {
        if self.n == 0 || self.c == 0 || self.t == 0 || self.h == 0 || self.w == 0 {
            return Err(TensorError::ZeroDim(*self));
        }
        self.n
            .checked_mul(self.c)
            .and_then(|v| v.checked_mul(self.t))
            .and_then(|v| v.checked_mul(self.h))
            .and_then(|v| v.checked_mul(self.w))
            .ok_or(TensorError::SizeOverflow(*self))
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.t * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major strides with w fastest-varying.
    pub fn strides(&self) -> [usize; 5] {
        let sw = 1;
        let sh = self.w;
        let st = self.h * sh;
        let sc = self.t * st;
        let sn = self.c * sc;
        [sn, sc, st, sh, sw]
    }
}

impl std::fmt::Display for Shape5 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{},{})", self.n, self.c, self.t, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor5 {
    shape: Shape5,
    data: Vec<f64>,
}

impl Tensor5 {
    /// Allocate a tensor filled with a constant.
    pub fn filled(shape: Shape5, fill: f64) -> Result<Self, TensorError> {
        let len = shape.checked_len()?;
        Ok(Tensor5 {
            shape,
            data: vec![fill; len],
        })
    }

    pub fn zeros(shape: Shape5) -> Result<Self, TensorError> {
        Self::filled(shape, 0.0)
    }

    pub fn from_vec(shape: Shape5, data: Vec<f64>) -> Result<Self, TensorError> {
        let len = shape.checked_len()?;
        if data.len() != len {
            return Err(TensorError::ShapeMismatch(format!(
                "data length {} != element count {} for shape {}",
                data.len(),
                len,
                shape
            )));
        }
        Ok(Tensor5 { shape, data })
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Flat offset of (n, c, t, h, w). Callers must stay in bounds.
    #[inline(always)]
    pub fn offset(&self, n: usize, c: usize, t: usize, h: usize, w: usize) -> usize {
        (((n * self.shape.c + c) * self.shape.t + t) * self.shape.h + h) * self.shape.w + w
    }

    fn check_idx(&self, idx: [usize; 5]) -> Result<(), TensorError> {
        let s = self.shape;
        if idx[0] >= s.n || idx[1] >= s.c || idx[2] >= s.t || idx[3] >= s.h || idx[4] >= s.w {
            return Err(TensorError::IndexOutOfBounds { idx, shape: s });
        }
        Ok(())
    }

    pub fn get(&self, idx: [usize; 5]) -> Result<f64, TensorError> {
        self.check_idx(idx)?;
        Ok(self.data[self.offset(idx[0], idx[1], idx[2], idx[3], idx[4])])
    }

    pub fn set(&mut self, idx: [usize; 5], v: f64) -> Result<(), TensorError> {
        self.check_idx(idx)?;
        let off = self.offset(idx[0], idx[1], idx[2], idx[3], idx[4]);
        self.data[off] = v;
        Ok(())
    }

    /// Unchecked accessors for hot loops.
    #[inline(always)]
    pub fn at(&self, n: usize, c: usize, t: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c, t, h, w)]
    }

    #[inline(always)]
    pub fn at_mut(&mut self, n: usize, c: usize, t: usize, h: usize, w: usize) -> &mut f64 {
        let off = self.offset(n, c, t, h, w);
        &mut self.data[off]
    }

    /// Contiguous row at fixed (n, c, t, h).
    #[inline(always)]
    pub fn row(&self, n: usize, c: usize, t: usize, h: usize) -> &[f64] {
        let off = self.offset(n, c, t, h, 0);
        &self.data[off..off + self.shape.w]
    }

    #[inline(always)]
    pub fn row_mut(&mut self, n: usize, c: usize, t: usize, h: usize) -> &mut [f64] {
        let off = self.offset(n, c, t, h, 0);
        let w = self.shape.w;
        &mut self.data[off..off + w]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor5 {
        Tensor5 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }
}

/// Concatenate along the channel axis; all other dims must agree.
pub fn concat_channels(parts: &[&Tensor5]) -> Result<Tensor5, TensorError> {
    let first = parts
        .first()
        .ok_or_else(|| TensorError::ShapeMismatch("concat of zero parts".into()))?;
    let base = first.shape();
    for p in parts.iter().skip(1) {
        let s = p.shape();
        if s.n != base.n || s.t != base.t || s.h != base.h || s.w != base.w {
            return Err(TensorError::ShapeMismatch(format!(
                "concat_channels: {} incompatible with {}",
                s, base
            )));
        }
    }
    let c_total: usize = parts.iter().map(|p| p.shape().c).sum();
    let out_shape = Shape5::new(base.n, c_total, base.t, base.h, base.w);
    let mut out = Tensor5::zeros(out_shape)?;
    let plane = base.t * base.h * base.w;
    for n in 0..base.n {
        let mut c_off = 0;
        for p in parts {
            let pc = p.shape().c;
            let src = &p.data()[n * pc * plane..(n + 1) * pc * plane];
            let dst_start = (n * c_total + c_off) * plane;
            out.data_mut()[dst_start..dst_start + pc * plane].copy_from_slice(src);
            c_off += pc;
        }
    }
    Ok(out)
}

/// Copy channels [start, start+count) into a new tensor.
pub fn slice_channels(x: &Tensor5, start: usize, count: usize) -> Result<Tensor5, TensorError> {
    let s = x.shape();
    if start + count > s.c {
        return Err(TensorError::ShapeMismatch(format!(
            "channel slice {}..{} out of range for {} channels",
            start,
            start + count,
            s.c
        )));
    }
    let out_shape = Shape5::new(s.n, count, s.t, s.h, s.w);
    let mut out = Tensor5::zeros(out_shape)?;
    let plane = s.t * s.h * s.w;
    for n in 0..s.n {
        let src_start = (n * s.c + start) * plane;
        let dst_start = n * count * plane;
        out.data_mut()[dst_start..dst_start + count * plane]
            .copy_from_slice(&x.data()[src_start..src_start + count * plane]);
    }
    Ok(out)
}
