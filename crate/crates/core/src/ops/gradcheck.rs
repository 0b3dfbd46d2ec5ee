//! Central finite-difference verification of analytic gradients.

use crate::tensor::Tensor5;

/// Floor for the relative-error denominator.
pub const GRADCHECK_DENOM_FLOOR: f64 = 1e-8;

/// Compare analytic gradients against central differences of a scalar loss.
///
/// `loss` evaluates the scalar objective at the given inputs; `analytic`
/// holds the claimed dL/d(input) tensors, one per input, in the same order.
/// Returns the maximum relative error over all coordinates, with the
/// denominator max(|analytic|, |numeric|, 1e-8).
pub fn finite_diff_check<F>(inputs: &[Tensor5], loss: F, analytic: &[Tensor5], eps: f64) -> f64
where
    F: Fn(&[Tensor5]) -> f64,
{
    assert_eq!(inputs.len(), analytic.len(), "one gradient per input");
    let mut work: Vec<Tensor5> = inputs.to_vec();
    let mut max_rel = 0.0f64;
    for k in 0..work.len() {
        assert_eq!(
            work[k].shape(),
            analytic[k].shape(),
            "gradient shape mismatch for input {}",
            k
        );
        for j in 0..work[k].shape().len() {
            let orig = work[k].data()[j];
            work[k].data_mut()[j] = orig + eps;
            let hi = loss(&work);
            work[k].data_mut()[j] = orig - eps;
            let lo = loss(&work);
            work[k].data_mut()[j] = orig;
            let numeric = (hi - lo) / (2.0 * eps);
            let a = analytic[k].data()[j];
            let denom = a.abs().max(numeric.abs()).max(GRADCHECK_DENOM_FLOOR);
            max_rel = max_rel.max((a - numeric).abs() / denom);
        }
    }
    max_rel
}

/// Like `finite_diff_check`, but probes only `samples` randomly chosen
/// coordinates per input. Exhaustive probing is quadratic in parameter
/// count; for the end-to-end network check a random subset keeps the run
/// in seconds while still exercising every layer with high probability.
pub fn finite_diff_check_sampled<F, R>(
    inputs: &[Tensor5],
    loss: F,
    analytic: &[Tensor5],
    eps: f64,
    samples: usize,
    rng: &mut R,
) -> f64
where
    F: Fn(&[Tensor5]) -> f64,
    R: rand::Rng,
{
    assert_eq!(inputs.len(), analytic.len(), "one gradient per input");
    let mut work: Vec<Tensor5> = inputs.to_vec();
    let mut max_rel = 0.0f64;
    for k in 0..work.len() {
        let n = work[k].shape().len();
        for _ in 0..samples.min(n) {
            let j = rng.gen_range(0..n);
            let orig = work[k].data()[j];
            work[k].data_mut()[j] = orig + eps;
            let hi = loss(&work);
            work[k].data_mut()[j] = orig - eps;
            let lo = loss(&work);
            work[k].data_mut()[j] = orig;
            let numeric = (hi - lo) / (2.0 * eps);
            let a = analytic[k].data()[j];
            let denom = a.abs().max(numeric.abs()).max(GRADCHECK_DENOM_FLOOR);
            max_rel = max_rel.max((a - numeric).abs() / denom);
        }
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::conv::{conv3d_backward, conv3d_forward, ConvSpec};
    use crate::ops::testutil::rand_tensor;
    use crate::tensor::Shape5;
    use rand::SeedableRng;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor5::from_vec(Shape5::new(1, 1, 1, 1, 3), vec![1.0, -2.0, 0.5]).unwrap();
        let grad = Tensor5::from_vec(x.shape(), vec![2.0, 3.0, -1.0]).unwrap();
        let err = finite_diff_check(
            &[x],
            |v| 2.0 * v[0].data()[0] + 3.0 * v[0].data()[1] - v[0].data()[2],
            &[grad],
            1e-5,
        );
        assert!(err < 1e-9, "err = {}", err);
    }

    #[test]
    fn conv_gradient_passes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let spec = ConvSpec::new((1, 1, 1), (0, 1, 1));
        let x = rand_tensor(Shape5::new(1, 2, 3, 4, 4), &mut rng);
        let w = rand_tensor(Shape5::new(2, 2, 2, 3, 3), &mut rng);
        let bias = vec![0.1, -0.2];
        let out = conv3d_forward(&x, &w, &bias, &spec).unwrap();
        let g = Tensor5::filled(out.shape(), 1.0).unwrap();
        let (gx, gw, _) = conv3d_backward(&x, &w, &spec, &g).unwrap();
        let err = finite_diff_check(
            &[x, w.clone()],
            |v| {
                conv3d_forward(&v[0], &v[1], &bias, &spec)
                    .unwrap()
                    .iter()
                    .sum()
            },
            &[gx, gw],
            1e-5,
        );
        assert!(err < 1e-5, "err = {}", err);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let spec = ConvSpec::new((1, 1, 1), (0, 0, 0));
        let x = rand_tensor(Shape5::new(1, 1, 2, 3, 3), &mut rng);
        let w = rand_tensor(Shape5::new(1, 1, 1, 2, 2), &mut rng);
        let out = conv3d_forward(&x, &w, &[0.0], &spec).unwrap();
        let g = Tensor5::filled(out.shape(), 1.0).unwrap();
        let (gx, _, _) = conv3d_backward(&x, &w, &spec, &g).unwrap();
        let mut bad = gx.clone();
        bad.data_mut()[0] *= 2.0;
        let err = finite_diff_check(
            &[x],
            |v| {
                conv3d_forward(&v[0], &w, &[0.0], &spec)
                    .unwrap()
                    .iter()
                    .sum()
            },
            &[bad],
            1e-5,
        );
        assert!(err > 0.1, "fault not detected, err = {}", err);
    }
}
