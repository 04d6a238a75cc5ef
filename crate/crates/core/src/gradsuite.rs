//! Finite-difference checks over every differentiable operator, at double precision.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::additive_attention_gate;
use crate::error::Result;
use crate::head::{rpn_loss_var, Label, RpnTargets};
use crate::nn::{ConvSpec, GradCheck, Graph, NormMode, Tensor, Var};

/// Instances per family when not overridden.
pub const DEFAULT_INSTANCES: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyReport {
    pub name: &'static str,
    pub instances: usize,
    /// Scalar gradient entries compared.
    pub checked: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub tol: f64,
    pub families: Vec<FamilyReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.families.iter().all(|f| f.passed)
    }

    pub fn family(&self, name: &str) -> Option<&FamilyReport> {
        self.families.iter().find(|f| f.name == name)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.families {
            writeln!(
                f,
                "{:<6} {:<14} instances={:<3} entries={:<6} max_rel_err={:.3e}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.instances,
                r.checked,
                r.max_rel_error
            )?;
        }
        write!(
            f,
            "{} (tol {:e})",
            if self.passed() { "all families pass" } else { "gradient check FAILED" },
            self.tol
        )
    }
}

type Case = (Vec<Tensor<f64>>, Box<dyn Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>>);

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Uniform magnitudes in [0.05, 1) with random sign: keeps rectifier inputs off the kink.
fn off_kink(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) { m } else { -m }
    })
}

fn conv_case(rng: &mut ChaCha8Rng, spec: ConvSpec, batch: usize, hw: (usize, usize)) -> Case {
    let x = uniform(rng, vec![batch, spec.in_channels, hw.0, hw.1], -1.0, 1.0);
    let w = uniform(rng, spec.weight_shape().to_vec(), -1.0, 1.0);
    let b = uniform(rng, vec![spec.out_channels], -0.5, 0.5);
    (
        vec![x, w, b],
        Box::new(move |g, v| g.conv2d(v[0], v[1], Some(v[2]), spec)),
    )
}

fn dense_conv(rng: &mut ChaCha8Rng) -> Case {
    let cin = rng.gen_range(1..=3);
    let cout = rng.gen_range(1..=3);
    let k = [1, 2, 3][rng.gen_range(0..3)];
    let spec = ConvSpec::new(cin, cout, k)
        .with_stride(rng.gen_range(1..=2))
        .with_padding(rng.gen_range(0..k));
    let hw = (rng.gen_range(k.max(3)..=5), rng.gen_range(k.max(3)..=5));
    let batch = rng.gen_range(1..=2);
    conv_case(rng, spec, batch, hw)
}

fn depthwise_conv(rng: &mut ChaCha8Rng) -> Case {
    let c = rng.gen_range(1..=4);
    let k = [3, 5][rng.gen_range(0..2)];
    let spec = ConvSpec::depthwise(c, k, 1);
    let hw = (rng.gen_range(3..=6), rng.gen_range(3..=6));
    let batch = rng.gen_range(1..=2);
    conv_case(rng, spec, batch, hw)
}

/// Dilated same-padded convolution; some inputs are smaller than the dilated footprint.
fn dilated_conv(rng: &mut ChaCha8Rng) -> Case {
    let c = rng.gen_range(1..=3);
    let d = rng.gen_range(2..=4);
    let spec = if rng.gen_bool(0.5) {
        ConvSpec::depthwise(c, 3, d)
    } else {
        ConvSpec::new(c, rng.gen_range(1..=3), 3).with_dilation(d).same_padding()
    };
    let hw = (rng.gen_range(2..=7), rng.gen_range(2..=7));
    conv_case(rng, spec, 1, hw)
}

fn batch_norm_case(rng: &mut ChaCha8Rng) -> Case {
    let c = rng.gen_range(1..=3);
    let (n, h, w) = (rng.gen_range(2..=3), rng.gen_range(2..=3), rng.gen_range(2..=3));
    let x = uniform(rng, vec![n, c, h, w], -2.0, 2.0);
    let gamma = uniform(rng, vec![c], 0.5, 1.5);
    let beta = uniform(rng, vec![c], -0.5, 0.5);
    let mode = if rng.gen_bool(0.75) {
        NormMode::Train { eps: 1e-5, track: None }
    } else {
        let mean = (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let var = (0..c).map(|_| rng.gen_range(0.5..2.0)).collect();
        NormMode::Eval { mean, var, eps: 1e-5 }
    };
    (
        vec![x, gamma, beta],
        Box::new(move |g, v| g.batch_norm(v[0], v[1], v[2], mode.clone())),
    )
}

fn activation_case(rng: &mut ChaCha8Rng) -> Case {
    let x = off_kink(rng, vec![2, 2, 3, 3]);
    let relu = rng.gen_bool(0.5);
    (
        vec![x],
        Box::new(move |g, v| Ok(if relu { g.relu(v[0]) } else { g.sigmoid(v[0]) })),
    )
}

fn elementwise_case(rng: &mut ChaCha8Rng) -> Case {
    let c = rng.gen_range(1..=3);
    let a = uniform(rng, vec![2, c, 3, 3], -1.0, 1.0);
    // single-channel b broadcasts across a's channels
    let bc = if rng.gen_bool(0.5) { 1 } else { c };
    let b = uniform(rng, vec![2, bc, 3, 3], -1.0, 1.0);
    let mul = rng.gen_bool(0.5);
    (
        vec![a, b],
        Box::new(move |g, v| if mul { g.mul(v[0], v[1]) } else { g.add(v[0], v[1]) }),
    )
}

fn concat_case(rng: &mut ChaCha8Rng) -> Case {
    let parts: Vec<Tensor<f64>> = (0..rng.gen_range(1..=3))
        .map(|_| {
            let c = rng.gen_range(1..=3);
            uniform(rng, vec![1, c, 2, 3], -1.0, 1.0)
        })
        .collect();
    (parts, Box::new(|g, v| g.concat(v)))
}

fn gate_case(rng: &mut ChaCha8Rng) -> Case {
    let c = rng.gen_range(1..=3);
    let mid = rng.gen_range(1..=3);
    let hw = (rng.gen_range(2..=3), rng.gen_range(2..=3));
    let inputs = vec![
        uniform(rng, vec![1, c, hw.0, hw.1], -1.0, 1.0),
        uniform(rng, vec![1, c, hw.0, hw.1], -1.0, 1.0),
        uniform(rng, vec![mid, c, 1, 1], -1.0, 1.0),
        uniform(rng, vec![mid, c, 1, 1], -1.0, 1.0),
        uniform(rng, vec![1, mid, 1, 1], -1.0, 1.0),
        uniform(rng, vec![1], -0.5, 0.5),
    ];
    (
        inputs,
        Box::new(|g, v| Ok(additive_attention_gate(g, v[0], v[1], v[2], v[3], v[4], v[5])?.output)),
    )
}

fn rpn_loss_case(rng: &mut ChaCha8Rng) -> Case {
    let (b, a, h, w) = (rng.gen_range(1..=2), rng.gen_range(1..=3), 2, rng.gen_range(2..=3));
    let n = a * h * w;
    let logits = uniform(rng, vec![b, a, h, w], -3.0, 3.0);
    let deltas = uniform(rng, vec![b, 4 * a, h, w], -2.0, 2.0);
    let targets: Vec<RpnTargets> = (0..b)
        .map(|_| {
            let labels: Vec<Label> = (0..n)
                .map(|_| match rng.gen_range(0..3) {
                    0 => Label::Positive,
                    1 => Label::Negative,
                    _ => Label::Ignore,
                })
                .collect();
            let b_star = labels
                .iter()
                .map(|l| {
                    if *l == Label::Positive {
                        [0; 4].map(|_| rng.gen_range(-1.5..1.5))
                    } else {
                        [0.0; 4]
                    }
                })
                .collect();
            RpnTargets { labels, b_star, minibatch: n, cells: h * w }
        })
        .collect();
    let lambda = rng.gen_range(0.5..10.0);
    (
        vec![logits, deltas],
        Box::new(move |g, v| Ok(rpn_loss_var(g, v[0], v[1], &targets, lambda)?.0)),
    )
}

const FAMILIES: [(&str, fn(&mut ChaCha8Rng) -> Case); 9] = [
    ("conv2d", dense_conv),
    ("conv2d_dw", depthwise_conv),
    ("conv2d_dilated", dilated_conv),
    ("batch_norm", batch_norm_case),
    ("activation", activation_case),
    ("elementwise", elementwise_case),
    ("concat", concat_case),
    ("attention_gate", gate_case),
    ("rpn_loss", rpn_loss_case),
];

pub fn family_names() -> Vec<&'static str> {
    FAMILIES.iter().map(|(n, _)| *n).collect()
}

/// Runs `instances` random cases of every family.
pub fn run_gradient_suite(tol: f64, instances: usize, seed: u64) -> Result<SuiteReport> {
    let check = GradCheck::new(tol);
    let mut families = Vec::with_capacity(FAMILIES.len());
    for (k, (name, make)) in FAMILIES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut fam = FamilyReport { name, instances, checked: 0, max_rel_error: 0.0, passed: true };
        for _ in 0..instances {
            let (inputs, op) = make(&mut rng);
            let r = check.run(&inputs, |g, v| op(g, v))?;
            fam.checked += r.checked;
            fam.max_rel_error = fam.max_rel_error.max(r.max_rel_error);
            fam.passed &= r.passed;
        }
        families.push(fam);
    }
    Ok(SuiteReport { tol, families })
}
