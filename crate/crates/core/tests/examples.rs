//! Every example runs to completion.

macro_rules! example {
    ($name:ident, $path:literal) => {
        #[path = $path]
        mod $name;

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(autodiff, "../examples/autodiff.rs");
example!(gradient_suite, "../examples/gradient_suite.rs");
example!(dilated_fork, "../examples/dilated_fork.rs");
example!(attention_gate, "../examples/attention_gate.rs");
example!(rpn_targets, "../examples/rpn_targets.rs");
example!(nms_and_ap, "../examples/nms_and_ap.rs");
example!(bev_raster, "../examples/bev_raster.rs");
example!(synth_dataset, "../examples/synth_dataset.rs");
example!(fusion_detector, "../examples/fusion_detector.rs");
example!(train_small, "../examples/train_small.rs");
example!(fusion_ablation, "../examples/fusion_ablation.rs");
