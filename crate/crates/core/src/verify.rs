//! Self-verification suite: finite-difference checks for every
//! differentiable primitive and for the assembled network.

use crate::net;
use crate::ops::gradcheck::{finite_diff_check, finite_diff_check_sampled};
use crate::ops::testutil::rand_tensor;
use crate::ops::{
    bce_loss, branch_average, branch_average_backward, conv3d_backward, conv3d_forward,
    maxpool_122, maxpool_122_backward, relu, relu_backward, sigmoid, sigmoid_backward,
    tconv3d_backward, tconv3d_forward, upsample_122, upsample_122_backward, ConvSpec,
};
use crate::tensor::{Shape5, Tensor5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bound every check must stay below.
pub const GRADCHECK_BOUND: f64 = 1e-4;

/// Step used for central differences.
pub const GRADCHECK_EPS: f64 = 1e-5;

/// Random small instances per primitive.
pub const INSTANCES_PER_PRIMITIVE: usize = 20;

/// Coordinates probed per layer-parameter block in the end-to-end check.
const E2E_SAMPLES: usize = 400;

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub bound: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.bound
    }
}

fn small_spec(rng: &mut ChaCha8Rng) -> (Shape5, Shape5, ConvSpec) {
    let ci = rng.gen_range(1..3);
    let co = rng.gen_range(1..3);
    let kt = rng.gen_range(1..3);
    let k = [1usize, 3][rng.gen_range(0..2)];
    let x = Shape5::new(1, ci, rng.gen_range(kt..4), 4, 4);
    let w = Shape5::new(co, ci, kt, k, k);
    let spec = ConvSpec::new((rng.gen_range(1..3), 1, 1), (0, (k - 1) / 2, (k - 1) / 2));
    (x, w, spec)
}

fn conv_check(rng: &mut ChaCha8Rng, fault: bool) -> f64 {
    let mut worst = 0.0f64;
    for inst in 0..INSTANCES_PER_PRIMITIVE {
        let (xs, ws, spec) = small_spec(rng);
        let x = rand_tensor(xs, rng);
        let w = rand_tensor(ws, rng);
        let bias: Vec<f64> = (0..ws.n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let out = conv3d_forward(&x, &w, &bias, &spec).unwrap();
        let g = Tensor5::filled(out.shape(), 1.0).unwrap();
        let (gx, mut gw, _) = conv3d_backward(&x, &w, &spec, &g).unwrap();
        if fault && inst == 0 {
            gw.data_mut()[0] = gw.data()[0] * 2.0 + 1.0;
        }
        let err = finite_diff_check(
            &[x, w],
            |v| {
                conv3d_forward(&v[0], &v[1], &bias, &spec)
                    .unwrap()
                    .iter()
                    .sum()
            },
            &[gx, gw],
            GRADCHECK_EPS,
        );
        worst = worst.max(err);
    }
    worst
}

fn tconv_check(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES_PER_PRIMITIVE {
        let ci = rng.gen_range(1..3);
        let co = rng.gen_range(1..3);
        let k = [1usize, 3][rng.gen_range(0..2)];
        let x = rand_tensor(Shape5::new(1, ci, 1, 4, 4), rng);
        let w = rand_tensor(Shape5::new(co, ci, 1, k, k), rng);
        let bias: Vec<f64> = (0..co).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let spec = ConvSpec::same(k, k);
        let out = tconv3d_forward(&x, &w, &bias, &spec).unwrap();
        let g = Tensor5::filled(out.shape(), 1.0).unwrap();
        let (gx, gw, _) = tconv3d_backward(&x, &w, &spec, &g).unwrap();
        let err = finite_diff_check(
            &[x, w],
            |v| {
                tconv3d_forward(&v[0], &v[1], &bias, &spec)
                    .unwrap()
                    .iter()
                    .sum()
            },
            &[gx, gw],
            GRADCHECK_EPS,
        );
        worst = worst.max(err);
    }
    worst
}

fn maxpool_check(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES_PER_PRIMITIVE {
        // widely spread values keep the instances tie-free
        let x = rand_tensor(Shape5::new(1, 2, 2, 4, 4), rng).map(|v| 3.0 * v);
        let (out, idx) = maxpool_122(&x).unwrap();
        let g = Tensor5::filled(out.shape(), 1.0).unwrap();
        let gx = maxpool_122_backward(&idx, &g).unwrap();
        let err = finite_diff_check(
            &[x],
            |v| maxpool_122(&v[0]).unwrap().0.iter().sum(),
            &[gx],
            GRADCHECK_EPS,
        );
        worst = worst.max(err);
    }
    worst
}

fn upsample_check(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES_PER_PRIMITIVE {
        let x = rand_tensor(Shape5::new(1, 2, 1, 3, 3), rng);
        let up = upsample_122(&x).unwrap();
        let g = rand_tensor(up.shape(), rng);
        let gx = upsample_122_backward(&g).unwrap();
        let gc = g.clone();
        let err = finite_diff_check(
            &[x],
            move |v| {
                upsample_122(&v[0])
                    .unwrap()
                    .iter()
                    .zip(gc.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            },
            &[gx],
            GRADCHECK_EPS,
        );
        worst = worst.max(err);
    }
    worst
}

fn relu_check(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES_PER_PRIMITIVE {
        // keep samples away from the kink at 0
        let x = rand_tensor(Shape5::new(1, 2, 1, 3, 3), rng)
            .map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
        let g = Tensor5::filled(x.shape(), 1.0).unwrap();
        let gx = relu_backward(&x, &g).unwrap();
        let err = finite_diff_check(
            &[x],
            |v| relu(&v[0]).iter().sum(),
            &[gx],
            GRADCHECK_EPS,
        );
        worst = worst.max(err);
    }
    worst
}

fn sigmoid_check(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES_PER_PRIMITIVE {
        let x = rand_tensor(Shape5::new(1, 2, 1, 3, 3), rng);
        let y = sigmoid(&x);
        let g = Tensor5::filled(x.shape(), 1.0).unwrap();
        let gx = sigmoid_backward(&y, &g).unwrap();
        let err = finite_diff_check(
            &[x],
            |v| sigmoid(&v[0]).iter().sum(),
            &[gx],
            GRADCHECK_EPS,
        );
        worst = worst.max(err);
    }
    worst
}

fn branch_average_check(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES_PER_PRIMITIVE {
        let s = Shape5::new(1, 2, 1, 3, 3);
        let parts: Vec<Tensor5> = (0..3).map(|_| rand_tensor(s, rng)).collect();
        let refs: Vec<&Tensor5> = parts.iter().collect();
        let out = branch_average(&refs).unwrap();
        let g = Tensor5::filled(out.shape(), 1.0).unwrap();
        let grads = branch_average_backward(&g, 3);
        let err = finite_diff_check(
            &parts,
            |v| {
                branch_average(&v.iter().collect::<Vec<_>>())
                    .unwrap()
                    .iter()
                    .sum()
            },
            &grads,
            GRADCHECK_EPS,
        );
        worst = worst.max(err);
    }
    worst
}

fn bce_check(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES_PER_PRIMITIVE {
        let s = Shape5::new(1, 1, 1, 3, 3);
        let pred = Tensor5::from_vec(s, (0..s.len()).map(|_| rng.gen_range(0.05..0.95)).collect())
            .unwrap();
        let target =
            Tensor5::from_vec(s, (0..s.len()).map(|_| rng.gen_range(0..2) as f64).collect())
                .unwrap();
        let mask =
            Tensor5::from_vec(s, (0..s.len()).map(|_| rng.gen_range(0..2) as f64).collect())
                .unwrap();
        let (_, grad) = bce_loss(&pred, &target, &mask).unwrap();
        let t = target.clone();
        let m = mask.clone();
        let err = finite_diff_check(
            &[pred],
            move |v| bce_loss(&v[0], &t, &m).unwrap().0,
            &[grad],
            GRADCHECK_EPS,
        );
        worst = worst.max(err);
    }
    worst
}

/// End-to-end check on an 8x8-spatial instance of the full network: the
/// loss is the sum of the probability map; analytic parameter gradients
/// from `net::backward` are compared against central differences at
/// randomly sampled parameter coordinates.
pub fn end_to_end_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = net::init_params(seed ^ 0x5eed, net::INPUT_CHANNELS);
    let history = rand_tensor(Shape5::new(1, 3, net::HISTORY_LEN, 8, 8), &mut rng)
        .map(|v| 0.5 + 0.2 * v);
    let current = rand_tensor(Shape5::new(1, 3, 1, 8, 8), &mut rng).map(|v| 0.5 + 0.2 * v);
    let (prob, cache) = net::forward(&history, &current, &params).unwrap();
    let ones = Tensor5::filled(prob.shape(), 1.0).unwrap();
    let grads = net::backward(&cache, &params, &ones).unwrap();
    let flat = params.to_flat();
    let n = flat.len();
    let flat_t = Tensor5::from_vec(Shape5::new(1, 1, 1, 1, n), flat).unwrap();
    let grad_t = Tensor5::from_vec(Shape5::new(1, 1, 1, 1, n), grads.to_flat()).unwrap();
    let template = params.clone();
    let h = history.clone();
    let c = current.clone();
    finite_diff_check_sampled(
        &[flat_t],
        move |v| {
            let mut p = template.clone();
            p.set_flat(v[0].data());
            net::forward(&h, &c, &p).unwrap().0.iter().sum()
        },
        &[grad_t],
        GRADCHECK_EPS,
        E2E_SAMPLES,
        &mut rng,
    )
}

/// Run every check. `inject_fault` corrupts one analytic convolution
/// gradient so callers can confirm the harness actually fails.
pub fn run_gradcheck_suite(seed: u64, inject_fault: bool) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mk = |name: &str, err: f64| CheckReport {
        name: name.to_string(),
        max_rel_err: err,
        bound: GRADCHECK_BOUND,
    };
    vec![
        mk("conv3d", conv_check(&mut rng, inject_fault)),
        mk("tconv3d", tconv_check(&mut rng)),
        mk("maxpool_122", maxpool_check(&mut rng)),
        mk("upsample_122", upsample_check(&mut rng)),
        mk("relu", relu_check(&mut rng)),
        mk("sigmoid", sigmoid_check(&mut rng)),
        mk("branch_average", branch_average_check(&mut rng)),
        mk("bce_loss", bce_check(&mut rng)),
        mk("network_end_to_end", end_to_end_check(seed)),
    ]
}
