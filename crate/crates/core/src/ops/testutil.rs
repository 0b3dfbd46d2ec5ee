//! Small helpers shared by unit tests and the gradcheck command.

use crate::tensor::{Shape5, Tensor5};
use rand::Rng;

/// Agreement tolerance between the fast convolution and the naive oracle.
pub const NAIVE_TOL: f64 = 1e-12;

/// Standard-normal tensor from the given RNG.
pub fn rand_tensor<R: Rng>(shape: Shape5, rng: &mut R) -> Tensor5 {
    use rand_distr::{Distribution, StandardNormal};
    let data = (0..shape.len())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor5::from_vec(shape, data).expect("valid shape")
}
