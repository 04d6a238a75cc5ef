use forkfuse::backbone::additive_attention_gate;
use forkfuse::gradsuite::{family_names, run_gradient_suite};
use forkfuse::nn::{conv2d, ConvSpec, GradCheck, Graph, Tensor};
use proptest::prelude::*;

fn conv_f64(x: &Tensor<f64>, w: &Tensor<f64>, spec: ConvSpec) -> Tensor<f64> {
    conv2d(x, w, None, &spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Finite-difference sensitivity of output channel o to input channel c is zero unless o == c.
    #[test]
    fn depthwise_never_mixes_channels(c in 2usize..5, k in prop::sample::select(vec![3usize, 5]), d in 1usize..3, seed in 0u64..1000) {
        let spec = ConvSpec::depthwise(c, k, d);
        let x = Tensor::<f64>::from_fn(vec![1, c, 6, 6], |i| ((i as u64 * 2654435761 + seed) % 97) as f64 / 97.0 - 0.5);
        let w = Tensor::<f64>::from_fn(spec.weight_shape().to_vec(), |i| ((i as u64 * 40503 + seed) % 89) as f64 / 89.0 - 0.5);
        let base = conv_f64(&x, &w, spec);
        for src in 0..c {
            let mut xp = x.clone();
            for v in &mut xp.data_mut()[src * 36..(src + 1) * 36] {
                *v += 1e-3;
            }
            let out = conv_f64(&xp, &w, spec);
            for o in 0..c {
                let moved = out.plane(0, o).iter().zip(base.plane(0, o)).any(|(a, b)| a != b);
                prop_assert_eq!(moved, o == src, "input channel {} moved output channel {}", src, o);
            }
        }
    }
}

#[test]
fn every_family_passes_twenty_instances() {
    let r = run_gradient_suite(1e-4, 20, 0).unwrap();
    assert!(r.passed(), "{r}");
    for name in ["conv2d", "conv2d_dw", "conv2d_dilated", "batch_norm", "activation", "attention_gate", "rpn_loss"] {
        assert!(family_names().contains(&name));
        assert!(r.family(name).unwrap().instances >= 20);
    }
}

#[test]
fn corrupted_gradient_is_caught() {
    let x = Tensor::<f64>::from_fn(vec![1, 2, 4, 4], |i| (i as f64 * 0.37).sin());
    let w = Tensor::<f64>::from_fn(vec![3, 2, 3, 3], |i| (i as f64 * 0.11).cos());
    let spec = ConvSpec::new(2, 3, 3).same_padding();
    let op = |g: &mut Graph<'_, f64>, v: &[forkfuse::nn::Var]| g.conv2d(v[0], v[1], None, spec);
    assert!(GradCheck::new(1e-4).run(&[x.clone(), w.clone()], op).unwrap().passed);
    assert!(!GradCheck::new(1e-4).corrupt_analytic(1.1).run(&[x, w], op).unwrap().passed);
}

#[test]
fn gate_output_depends_on_the_lidar_input() {
    let t = |shape: Vec<usize>, s: f64| Tensor::<f64>::from_fn(shape, move |i| ((i as f64 + 1.0) * s).sin());
    let inputs = [
        t(vec![1, 3, 3, 3], 0.7),
        t(vec![1, 3, 3, 3], 1.3),
        t(vec![2, 3, 1, 1], 0.9),
        t(vec![2, 3, 1, 1], 0.4),
        t(vec![1, 2, 1, 1], 2.1),
        Tensor::full(vec![1], 0.1),
    ];
    let out = |x_l: &Tensor<f64>| {
        let mut g = Graph::new();
        let mut v: Vec<_> = inputs.iter().map(|x| g.input(x.clone())).collect();
        v[1] = g.input(x_l.clone());
        let o = additive_attention_gate(&mut g, v[0], v[1], v[2], v[3], v[4], v[5]).unwrap().output;
        g.value(o).clone()
    };
    let h = 1e-5;
    let mut max_sens = 0.0f64;
    for i in 0..inputs[1].numel() {
        let (mut p, mut m) = (inputs[1].clone(), inputs[1].clone());
        p.data_mut()[i] += h;
        m.data_mut()[i] -= h;
        let (op, om) = (out(&p), out(&m));
        for (a, b) in op.data().iter().zip(om.data()) {
            max_sens = max_sens.max(((a - b) / (2.0 * h)).abs());
        }
    }
    assert!(max_sens > 1e-3, "sensitivity {max_sens}");
}
