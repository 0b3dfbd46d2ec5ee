//! Masked binary cross-entropy over probability maps.

use crate::tensor::{Tensor5, TensorError};

/// Clamp applied to predictions before the log, keeping the loss finite at
/// saturated sigmoid outputs.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over pixels where `weight_mask` is 1, together
/// with the gradient w.r.t. the predictions. Masked-out pixels contribute
/// zero loss and zero gradient; an all-zero mask yields (0, zeros).
pub fn bce_loss(
    pred: &Tensor5,
    target: &Tensor5,
    weight_mask: &Tensor5,
) -> Result<(f64, Tensor5), TensorError> {
    if pred.shape() != target.shape() || pred.shape() != weight_mask.shape() {
        return Err(TensorError::ShapeMismatch(
            "bce_loss: pred/target/mask shapes differ".into(),
        ));
    }
    let mask_sum: f64 = weight_mask.iter().sum();
    let norm = mask_sum.max(1.0);
    let mut loss = 0.0;
    let mut grad = vec![0.0f64; pred.shape().len()];
    for (k, ((&p, &y), &m)) in pred
        .iter()
        .zip(target.iter())
        .zip(weight_mask.iter())
        .enumerate()
    {
        if m == 0.0 {
            continue;
        }
        let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= m * (y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
        // derivative of the clamped form; zero where the clamp is active
        if p > BCE_EPS && p < 1.0 - BCE_EPS {
            grad[k] = m * (pc - y) / (pc * (1.0 - pc)) / norm;
        }
    }
    Ok((loss / norm, Tensor5::from_vec(pred.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape5;

    fn scalar(v: f64) -> Tensor5 {
        Tensor5::from_vec(Shape5::new(1, 1, 1, 1, 1), vec![v]).unwrap()
    }

    #[test]
    fn half_prediction_gives_ln2() {
        let (loss, _) = bce_loss(&scalar(0.5), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_near_zero() {
        let (loss, _) = bce_loss(&scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!(loss <= -(1.0 - BCE_EPS).ln() + 1e-15);
        assert!(loss >= 0.0);
    }

    #[test]
    fn masked_out_pixels_contribute_nothing() {
        let s = Shape5::new(1, 1, 1, 1, 2);
        let pred = Tensor5::from_vec(s, vec![0.9, 0.1]).unwrap();
        let target = Tensor5::from_vec(s, vec![1.0, 1.0]).unwrap();
        let mask = Tensor5::from_vec(s, vec![1.0, 0.0]).unwrap();
        let (loss, grad) = bce_loss(&pred, &target, &mask).unwrap();
        let (ref_loss, _) = bce_loss(&scalar(0.9), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((loss - ref_loss).abs() < 1e-12);
        assert_eq!(grad.data()[1], 0.0);
    }

    #[test]
    fn empty_mask_is_zero() {
        let (loss, grad) = bce_loss(&scalar(0.7), &scalar(1.0), &scalar(0.0)).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let s = Shape5::new(1, 1, 1, 2, 2);
        let pred = Tensor5::from_vec(s, vec![0.3, 0.7, 0.45, 0.9]).unwrap();
        let target = Tensor5::from_vec(s, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let mask = Tensor5::from_vec(s, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let (_, grad) = bce_loss(&pred, &target, &mask).unwrap();
        let eps = 1e-6;
        for k in 0..4 {
            let mut hi = pred.clone();
            hi.data_mut()[k] += eps;
            let mut lo = pred.clone();
            lo.data_mut()[k] -= eps;
            let (lh, _) = bce_loss(&hi, &target, &mask).unwrap();
            let (ll, _) = bce_loss(&lo, &target, &mask).unwrap();
            let num = (lh - ll) / (2.0 * eps);
            assert!(
                (num - grad.data()[k]).abs() < 1e-6,
                "k={}: {} vs {}",
                k,
                num,
                grad.data()[k]
            );
        }
    }
}
