//! Depth-wise and dilated convolutions, and the weight-shared fork built from them.
//!
//! Prints the stage-by-stage shape trace of the full-size configuration without running it.

use forkfuse::backbone::{Backbone, ModelConfig};
use forkfuse::nn::{effective_kernel, ConvSpec, Graph, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> forkfuse::Result<()> {
    // one filter per channel, taps spaced d apart
    let spec = ConvSpec::depthwise(4, 11, 4);
    println!("11x11 depth-wise, dilation 4: {} weights, footprint {}", spec.weight_count(), spec.effective_kernel());
    for d in [2, 4, 8] {
        println!("k=11 d={d} -> effective kernel {}", effective_kernel(11, d));
    }

    let cfg = ModelConfig::paper();
    let mut store = ParamStore::<f32>::new();
    let net = Backbone::build(&cfg, &mut store, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("full-size backbone: {} parameters", store.scalar_count());
    for (stage, c, (h, w)) in net.primary.shape_trace(cfg.in_channels, cfg.input_hw)? {
        println!("  {stage:<7} {c:>5} x {h} x {w}");
    }
    let fork = &net.primary.pfs[0];
    println!("fork kernels {:?}, one shared weight {:?}", fork.effective_kernels(), store.get(fork.shared_weight).shape());

    // a single depth-wise conv never mixes channels
    let x = Tensor::<f32>::from_fn(vec![1, 4, 6, 6], |i| if i < 36 { 1.0 } else { 0.0 });
    let w = Tensor::<f32>::full(spec.weight_shape().to_vec(), 0.1);
    let mut g = Graph::new();
    let (xv, wv) = (g.input(x), g.input(w));
    let y = g.conv2d(xv, wv, None, spec.same_padding())?;
    let energy: Vec<f32> = (0..4).map(|c| g.value(y).plane(0, c).iter().sum()).collect();
    println!("per-channel output mass with only channel 0 lit: {energy:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
