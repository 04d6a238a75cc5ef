//! Central-difference verification of reverse-mode gradients.
//!
//! The op under test is any closure that builds a value from leaf variables. Non-scalar
//! outputs are reduced with a fixed pseudo-random projection `Σ rᵢ·yᵢ`, which exercises every
//! output element with a distinct weight. Each input element is perturbed by ±`step` and the
//! difference quotient is compared with the analytic gradient using
//! `|a − n| / max(|a|, |n|, floor)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::graph::{Graph, Var};
use super::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub tol: f64,
    pub step: f64,
    /// Denominator floor: gradients smaller than this are compared in absolute terms.
    pub floor: f64,
    analytic_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// (input index, element index) of the worst mismatch.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tol: f64,
    pub passed: bool,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self::new(1e-4)
    }
}

impl GradCheck {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            step: 1e-5,
            floor: 1e-3,
            analytic_scale: 1.0,
        }
    }

    /// Multiplies analytic gradients before comparison; a negative control for the checker.
    pub fn corrupt_analytic(mut self, scale: f64) -> Self {
        self.analytic_scale = scale;
        self
    }

    pub fn run<F>(&self, inputs: &[Tensor<f64>], op: F) -> Result<GradReport>
    where
        F: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
    {
        let eval = |vals: &[Tensor<f64>]| -> Result<Tensor<f64>> {
            let mut g = Graph::new();
            let vars: Vec<Var> = vals.iter().map(|t| g.input(t.clone())).collect();
            let out = op(&mut g, &vars)?;
            Ok(g.value(out).clone())
        };

        let base = eval(inputs)?;
        base.ensure_finite("op output")?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
        let proj = Tensor::from_fn(base.shape().to_vec(), |_| rng.gen_range(-1.0..1.0));
        let objective = |out: &Tensor<f64>| -> f64 {
            out.data().iter().zip(proj.data()).map(|(y, r)| y * r).sum()
        };

        let mut g = Graph::new();
        let leaves: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = op(&mut g, &leaves)?;
        let grads = g.backward_with_seed(out, proj.clone())?;

        let mut report = GradReport {
            max_rel_error: 0.0,
            worst: None,
            checked: 0,
            tol: self.tol,
            passed: true,
        };
        let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
        for (k, leaf) in leaves.iter().enumerate() {
            let zeros = Tensor::zeros(inputs[k].shape().to_vec());
            let analytic = grads.wrt(*leaf).unwrap_or(&zeros);
            analytic.ensure_finite("analytic gradient")?;
            for i in 0..inputs[k].numel() {
                let orig = inputs[k].data()[i];
                probe[k].data_mut()[i] = orig + self.step;
                let plus = eval(&probe)?;
                probe[k].data_mut()[i] = orig - self.step;
                let minus = eval(&probe)?;
                probe[k].data_mut()[i] = orig;
                if !plus.all_finite() || !minus.all_finite() {
                    return Err(Error::NonFinite(format!(
                        "perturbing input {k} element {i} produced a non-finite output"
                    )));
                }
                let numeric = (objective(&plus) - objective(&minus)) / (2.0 * self.step);
                let a = analytic.data()[i] * self.analytic_scale;
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(self.floor);
                report.checked += 1;
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some((k, i));
                }
            }
        }
        report.passed = report.max_rel_error <= self.tol;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(g: &mut Graph<'_, f64>, v: &[Var]) -> Result<Var> {
        let sq = g.mul(v[0], v[0])?;
        Ok(g.sum(sq))
    }

    #[test]
    fn passes_on_correct_gradient_and_fails_when_corrupted() {
        let x = Tensor::new(vec![3], vec![0.3, -1.2, 2.0]).unwrap();
        let ok = GradCheck::new(1e-4).run(&[x.clone()], quad).unwrap();
        assert!(ok.passed, "{ok:?}");
        assert_eq!(ok.checked, 3);
        let bad = GradCheck::new(1e-4)
            .corrupt_analytic(1.1)
            .run(&[x], quad)
            .unwrap();
        assert!(!bad.passed);
        assert!(bad.max_rel_error > 0.05);
    }

    #[test]
    fn non_finite_output_aborts() {
        let x = Tensor::new(vec![1], vec![f64::NAN]).unwrap();
        let r = GradCheck::new(1e-4).run(&[x], |g, v| Ok(g.sum(v[0])));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
