use crate::error::{Error, Result};
use crate::nn::{Graph, Scalar, Tensor, Var};

use super::targets::{Label, RpnTargets};

/// Weight of the regression term.
pub const DEFAULT_LAMBDA: f64 = 10.0;

/// Batch-averaged loss components. `reg` is unweighted; the total is `cls + λ·reg`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RpnLoss {
    pub total: f64,
    pub cls: f64,
    pub reg: f64,
    pub lambda: f64,
}

impl RpnLoss {
    pub fn weighted_reg(&self) -> f64 {
        self.lambda * self.reg
    }
}

#[derive(Clone, Debug)]
pub struct RpnLossGrads<T> {
    pub logits: Tensor<T>,
    pub deltas: Tensor<T>,
}

/// `0.5·x²` for `|x| < 1`, `|x| − 0.5` otherwise.
pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// `−log σ(z)` for `p* = 1`, `−log(1 − σ(z))` for `p* = 0`.
pub fn log_loss(z: f64, p_star: f64) -> f64 {
    let softplus = |v: f64| v.max(0.0) + (-v.abs()).exp().ln_1p();
    p_star * softplus(-z) + (1.0 - p_star) * softplus(z)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Objectness log loss over sampled anchors (normalized by the minibatch size) plus `lambda`
/// times smooth-L1 over positives (normalized by the cell count), averaged over the batch.
///
/// `logits` is `B×A×h×w` and `deltas` is `B×4A×h×w`, with channel `a = s·R + r` and delta
/// channel `4a + k`.
pub fn rpn_loss<T: Scalar>(
    logits: &Tensor<T>,
    deltas: &Tensor<T>,
    targets: &[RpnTargets],
    lambda: f64,
) -> Result<(RpnLoss, RpnLossGrads<T>)> {
    let (b, a, h, w) = logits.dims4()?;
    if deltas.shape() != [b, 4 * a, h, w] {
        return Err(Error::config(format!(
            "deltas shape {:?} does not match logits {:?}",
            deltas.shape(),
            logits.shape()
        )));
    }
    if targets.len() != b {
        return Err(Error::config(format!("{} target sets for batch {b}", targets.len())));
    }
    logits.ensure_finite("objectness logits")?;
    deltas.ensure_finite("box deltas")?;
    let hw = h * w;
    let mut gl = vec![T::zero(); logits.numel()];
    let mut gd = vec![T::zero(); deltas.numel()];
    let (mut cls, mut reg) = (0.0, 0.0);
    let batch = b as f64;
    for (i, t) in targets.iter().enumerate() {
        if t.labels.len() != a * hw {
            return Err(Error::config(format!(
                "targets cover {} anchors, head emits {}",
                t.labels.len(),
                a * hw
            )));
        }
        let n_cls = t.minibatch.max(1) as f64;
        let n_reg = t.cells.max(1) as f64;
        for (j, label) in t.labels.iter().enumerate() {
            let Some(p) = t.p_star(j) else { continue };
            let cell = j / a;
            let ch = j % a;
            let li = (i * a + ch) * hw + cell;
            let z = logits.data()[li].as_f64();
            cls += log_loss(z, p) / n_cls / batch;
            gl[li] = T::from_f64((sigmoid(z) - p) / n_cls / batch);
            if *label == Label::Positive {
                for k in 0..4 {
                    let di = (i * 4 * a + 4 * ch + k) * hw + cell;
                    let e = deltas.data()[di].as_f64() - t.b_star[j][k];
                    reg += smooth_l1(e) / n_reg / batch;
                    gd[di] = T::from_f64(lambda * smooth_l1_grad(e) / n_reg / batch);
                }
            }
        }
    }
    let loss = RpnLoss {
        total: cls + lambda * reg,
        cls,
        reg,
        lambda,
    };
    let grads = RpnLossGrads {
        logits: Tensor::new(logits.shape().to_vec(), gl)?,
        deltas: Tensor::new(deltas.shape().to_vec(), gd)?,
    };
    Ok((loss, grads))
}

/// Records the loss as a scalar graph node so it backpropagates into the head.
pub fn rpn_loss_var<T: Scalar>(
    g: &mut Graph<'_, T>,
    logits: Var,
    deltas: Var,
    targets: &[RpnTargets],
    lambda: f64,
) -> Result<(Var, RpnLoss)> {
    let (loss, grads) = rpn_loss(g.value(logits), g.value(deltas), targets, lambda)?;
    let v = g.custom_scalar(
        &[logits, deltas],
        T::from_f64(loss.total),
        vec![grads.logits, grads.deltas],
    )?;
    Ok((v, loss))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn smooth_l1_spot_values() {
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1(-2.0), 1.5);
    }

    fn random_case(rng: &mut impl Rng, b: usize, a: usize, hw: (usize, usize)) -> (Tensor<f64>, Tensor<f64>, Vec<RpnTargets>) {
        let n = a * hw.0 * hw.1;
        let logits = Tensor::from_fn(vec![b, a, hw.0, hw.1], |_| rng.gen_range(-4.0..4.0));
        let deltas = Tensor::from_fn(vec![b, 4 * a, hw.0, hw.1], |_| rng.gen_range(-2.5..2.5));
        let targets = (0..b)
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
                    .map(|l| match l {
                        Label::Positive => [0; 4].map(|_| rng.gen_range(-1.5..1.5)),
                        _ => [0.0; 4],
                    })
                    .collect();
                RpnTargets {
                    labels,
                    b_star,
                    minibatch: 16,
                    cells: hw.0 * hw.1,
                }
            })
            .collect();
        (logits, deltas, targets)
    }

    /// Direct transcription: visit anchors in (y, x, s, r) order and index the head tensors.
    fn oracle(l: &Tensor<f64>, d: &Tensor<f64>, t: &[RpnTargets], lambda: f64) -> f64 {
        let (b, a, h, w) = l.dims4().unwrap();
        let mut total = 0.0;
        for i in 0..b {
            let mut cls = 0.0;
            let mut reg = 0.0;
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..a {
                        let j = (y * w + x) * a + ch;
                        let z = l.data()[((i * a + ch) * h + y) * w + x];
                        let p = 1.0 / (1.0 + (-z).exp());
                        match t[i].labels[j] {
                            Label::Positive => {
                                cls -= p.ln();
                                for k in 0..4 {
                                    let dv = d.data()[((i * 4 * a + 4 * ch + k) * h + y) * w + x];
                                    reg += smooth_l1(dv - t[i].b_star[j][k]);
                                }
                            }
                            Label::Negative => cls -= (1.0 - p).ln(),
                            Label::Ignore => {}
                        }
                    }
                }
            }
            total += cls / t[i].minibatch as f64 + lambda * reg / t[i].cells as f64;
        }
        total / b as f64
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (l, d, t) = random_case(&mut rng, 2, 3, (3, 4));
            let (loss, _) = rpn_loss(&l, &d, &t, DEFAULT_LAMBDA).unwrap();
            assert!((loss.total - oracle(&l, &d, &t, DEFAULT_LAMBDA)).abs() <= 1e-6);
            assert!(loss.total >= 0.0);
        }
    }

    #[test]
    fn lambda_scales_only_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (l, d, t) = random_case(&mut rng, 1, 2, (2, 2));
        let at = |lam| rpn_loss(&l, &d, &t, lam).unwrap().0.total;
        let lhs = at(20.0) - at(0.0);
        let rhs = 2.0 * (at(10.0) - at(0.0));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn ignored_anchors_get_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (l, d, t) = random_case(&mut rng, 1, 3, (2, 3));
        let (_, g) = rpn_loss(&l, &d, &t, 10.0).unwrap();
        for (j, label) in t[0].labels.iter().enumerate() {
            let idx = (j % 3) * 6 + j / 3;
            if *label == Label::Ignore {
                assert_eq!(g.logits.data()[idx], 0.0);
            } else {
                assert_ne!(g.logits.data()[idx], 0.0);
            }
        }
    }

    #[test]
    fn perfect_prediction_has_vanishing_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (_, _, t) = random_case(&mut rng, 1, 2, (2, 2));
        let mut l = Tensor::zeros(vec![1, 2, 2, 2]);
        let mut d = Tensor::zeros(vec![1, 8, 2, 2]);
        for (j, label) in t[0].labels.iter().enumerate() {
            let (cell, ch) = (j / 2, j % 2);
            l.data_mut()[ch * 4 + cell] = if *label == Label::Positive { 20.0 } else { -20.0 };
            for k in 0..4 {
                d.data_mut()[(4 * ch + k) * 4 + cell] = t[0].b_star[j][k];
            }
        }
        let (loss, _) = rpn_loss(&l, &d, &t, 10.0).unwrap();
        assert!(loss.total < 1e-6, "{loss:?}");
    }

    #[test]
    fn no_positives_means_no_regression_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (l, d, mut t) = random_case(&mut rng, 1, 2, (2, 2));
        for label in &mut t[0].labels {
            if *label == Label::Positive {
                *label = Label::Negative;
            }
        }
        assert_eq!(rpn_loss(&l, &d, &t, 10.0).unwrap().0.reg, 0.0);
        let bad = l.map(|_| f64::INFINITY);
        assert!(matches!(rpn_loss(&bad, &d, &t, 10.0), Err(Error::NonFinite(_))));
    }
}
