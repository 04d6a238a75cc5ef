//! Anchors, target assignment, box encoding and the region-proposal loss.

use forkfuse::head::{
    assign_and_sample, decode, encode, generate_anchors, rpn_loss, smooth_l1, AssignConfig, AxisBox, Label,
    DEFAULT_LAMBDA,
};
use forkfuse::nn::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> forkfuse::Result<()> {
    // a 12x12 feature map at stride 16 over a 192x192 image
    let anchors = generate_anchors((12, 12), 16, &[32.0, 64.0, 128.0], &[0.5, 1.0, 2.0])?;
    println!("{} anchors, {} per cell", anchors.len(), anchors.per_cell());

    let gts = [AxisBox::new(40.0, 40.0, 100.0, 80.0)?, AxisBox::new(120.0, 130.0, 160.0, 180.0)?];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = assign_and_sample(&anchors, &gts, 128, &AssignConfig::default(), &mut rng)?;
    println!(
        "sampled {} positives, {} negatives; {} ignored",
        t.count(Label::Positive),
        t.count(Label::Negative),
        t.count(Label::Ignore)
    );

    let j = t.labels.iter().position(|l| *l == Label::Positive).expect("each box gets an anchor");
    let d = encode(&gts[0], &anchors.boxes[j]);
    println!("anchor {:?} -> deltas {:.3?} -> {:?}", anchors.boxes[j], d, decode(d, &anchors.boxes[j]));

    println!("smooth L1: 0.5 -> {}, 2 -> {}", smooth_l1(0.5), smooth_l1(2.0));

    // zero predictions: every logit at 0.5 probability, every delta at 0
    let a = anchors.per_cell();
    let logits = Tensor::<f64>::zeros(vec![1, a, 12, 12]);
    let deltas = Tensor::<f64>::zeros(vec![1, 4 * a, 12, 12]);
    let (loss, grads) = rpn_loss(&logits, &deltas, &[t], DEFAULT_LAMBDA)?;
    println!("loss {:.4} = cls {:.4} + reg {:.4}", loss.total, loss.cls, loss.weighted_reg());
    println!("gradient norms: logits {:.4}", grads.logits.data().iter().map(|g| g * g).sum::<f64>().sqrt());
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
