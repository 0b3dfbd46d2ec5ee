use threedfr::net;
use threedfr::ops::testutil::rand_tensor;
use threedfr::tensor::{Shape5, Tensor5};
use rand::SeedableRng;

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let p = net::init_params(1, 3);
    let h = rand_tensor(Shape5::new(1, 3, 50, 64, 64), &mut rng);
    let c = rand_tensor(Shape5::new(1, 3, 1, 64, 64), &mut rng);
    let t0 = std::time::Instant::now();
    let (prob, cache) = net::forward(&h, &c, &p).unwrap();
    let t1 = std::time::Instant::now();
    let g = Tensor5::filled(prob.shape(), 1.0).unwrap();
    let _ = net::backward(&cache, &p, &g).unwrap();
    let t2 = std::time::Instant::now();
    println!("forward: {:?}  backward: {:?}", t1 - t0, t2 - t1);
    // steady-state over 5 iters
    let t3 = std::time::Instant::now();
    for _ in 0..5 {
        let (prob, cache) = net::forward(&h, &c, &p).unwrap();
        let g = Tensor5::filled(prob.shape(), 1.0).unwrap();
        let _ = net::backward(&cache, &p, &g).unwrap();
    }
    println!("per step: {:?}", (std::time::Instant::now() - t3) / 5);
}
