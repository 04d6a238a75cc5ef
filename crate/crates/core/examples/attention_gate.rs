//! The additive attention gate between the radar and Lidar branches.

use forkfuse::backbone::{gate_forward, AttentionGate};
use forkfuse::nn::{ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> forkfuse::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::<f64>::new();
    let gate = AttentionGate::new(8, 4, &mut store, "gate", &mut rng)?;

    let x_r = Tensor::from_fn(vec![2, 8, 5, 5], |_| rng.gen_range(-1.0..1.0));
    let x_l = Tensor::from_fn(vec![2, 8, 5, 5], |_| rng.gen_range(-1.0..1.0));
    let (alpha, out) = gate_forward(&gate, &store, &x_r, &x_l)?;
    let (lo, hi) = alpha.data().iter().fold((1.0f64, 0.0f64), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    println!("alpha: shape {:?}, range [{lo:.3}, {hi:.3}]", alpha.shape());
    println!("output shape {:?}", out.shape());

    // psi = 0 pins alpha at sigmoid(0) = 0.5
    gate.set_psi(&mut store, 0.0);
    let (_, out) = gate_forward(&gate, &store, &x_r, &x_l)?;
    let err = out.data().iter().zip(x_r.data()).map(|(o, x)| (o - 1.5 * x).abs()).fold(0.0, f64::max);
    println!("psi = 0: max |out - 1.5 x_r| = {err:.1e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
