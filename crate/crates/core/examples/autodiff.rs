//! Build a small graph by hand, backpropagate, and confirm the result with finite differences.
//!
//!     cargo run --example autodiff

use forkfuse::nn::{ConvSpec, GradCheck, Graph, Tensor};

pub fn run() -> forkfuse::Result<()> {
    let x = Tensor::<f64>::from_fn(vec![1, 2, 5, 5], |i| ((i * 37 % 11) as f64 - 5.0) / 5.0);
    let w = Tensor::<f64>::from_fn(vec![3, 2, 3, 3], |i| ((i * 13 % 7) as f64 - 3.0) / 10.0);
    let spec = ConvSpec::new(2, 3, 3).same_padding();

    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let wv = g.leaf(w.clone());
    let y = g.conv2d(xv, wv, None, spec)?;
    let y = g.sigmoid(y);
    let loss = g.sum(y);
    println!("loss = {:.6}", g.value(loss).data()[0]);

    let grads = g.backward(loss)?;
    let dw = grads.wrt(wv).expect("weight is a leaf");
    println!("dL/dw has shape {:?}, first entries {:?}", dw.shape(), &dw.data()[..3]);

    // same op, checked numerically
    let report = GradCheck::new(1e-4).run(&[x, w], |g, v| {
        let y = g.conv2d(v[0], v[1], None, spec)?;
        Ok(g.sigmoid(y))
    })?;
    println!(
        "gradcheck: {} entries, max relative error {:.2e}, passed = {}",
        report.checked, report.max_rel_error, report.passed
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
