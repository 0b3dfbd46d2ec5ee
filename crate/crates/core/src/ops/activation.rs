//! Elementwise activations with their gradients, plus the k-way branch
//! average used by the multi-receptive-field feature stages.

use crate::tensor::{Tensor5, TensorError};

pub fn relu(x: &Tensor5) -> Tensor5 {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Subgradient 0 at x == 0.
pub fn relu_backward(x: &Tensor5, grad_out: &Tensor5) -> Result<Tensor5, TensorError> {
    if x.shape() != grad_out.shape() {
        return Err(TensorError::ShapeMismatch(
            "relu_backward: shape mismatch".into(),
        ));
    }
    Tensor5::from_vec(
        x.shape(),
        x.iter()
            .zip(grad_out.iter())
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
    )
}

#[inline]
fn sigmoid_scalar(x: f64) -> f64 {
    // split form avoids overflow of exp for large |x|
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor5) -> Tensor5 {
    x.map(sigmoid_scalar)
}

/// Takes the forward output y, not the input: grad = y * (1 - y) * grad_out.
pub fn sigmoid_backward(y: &Tensor5, grad_out: &Tensor5) -> Result<Tensor5, TensorError> {
    if y.shape() != grad_out.shape() {
        return Err(TensorError::ShapeMismatch(
            "sigmoid_backward: shape mismatch".into(),
        ));
    }
    Tensor5::from_vec(
        y.shape(),
        y.iter()
            .zip(grad_out.iter())
            .map(|(&v, &g)| v * (1.0 - v) * g)
            .collect(),
    )
}

/// Elementwise mean of k equal-shaped tensors.
pub fn branch_average(parts: &[&Tensor5]) -> Result<Tensor5, TensorError> {
    let first = parts
        .first()
        .ok_or_else(|| TensorError::ShapeMismatch("branch_average of zero parts".into()))?;
    for p in parts.iter().skip(1) {
        if p.shape() != first.shape() {
            return Err(TensorError::ShapeMismatch(
                "branch_average: parts differ in shape".into(),
            ));
        }
    }
    let k = parts.len() as f64;
    let mut out = (*first).clone();
    for p in parts.iter().skip(1) {
        for (o, &v) in out.data_mut().iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    for o in out.data_mut() {
        *o /= k;
    }
    Ok(out)
}

/// Each branch receives grad_out / k.
pub fn branch_average_backward(grad_out: &Tensor5, k: usize) -> Vec<Tensor5> {
    let scaled = grad_out.map(|v| v / k as f64);
    vec![scaled; k]
}
