//! Every differentiable operator against central differences, the same suite
//! `forkfuse gradcheck` runs.

use forkfuse::gradsuite::run_gradient_suite;

pub fn run() -> forkfuse::Result<()> {
    let report = run_gradient_suite(1e-4, 5, 42)?;
    println!("{report}");
    assert!(report.passed());
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
