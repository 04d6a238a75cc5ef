use crate::error::{Error, Result};

use super::scalar::Scalar;
use super::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch statistics and the cached quantities needed by the reverse pass.
#[derive(Clone, Debug)]
pub struct BnBatch<T> {
    pub output: Tensor<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased (population) variance used for normalization.
    pub var: Vec<T>,
    /// Element count per channel.
    pub count: usize,
}

fn check_params<T: Scalar>(x: &Tensor<T>, gamma: &[T], beta: &[T]) -> Result<(usize, usize, usize)> {
    let (b, c, h, w) = x.dims4()?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::config(format!(
            "batch norm over {c} channels given {} / {} affine parameters",
            gamma.len(),
            beta.len()
        )));
    }
    Ok((b, c, h * w))
}

/// Training-mode normalization with batch statistics.
pub fn batch_norm_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<BnBatch<T>> {
    let (b, c, hw) = check_params(x, gamma, beta)?;
    let count = b * hw;
    if count <= 1 {
        return Err(Error::DegenerateVariance(format!(
            "training-mode batch norm needs more than one value per channel, got shape {:?}",
            x.shape()
        )));
    }
    let n = T::from_f64(count as f64);
    let data = x.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for bi in 0..b {
            s += data[(bi * c + ch) * hw..(bi * c + ch + 1) * hw].iter().copied().sum();
        }
        let m = s / n;
        let mut v = T::zero();
        for bi in 0..b {
            for &val in &data[(bi * c + ch) * hw..(bi * c + ch + 1) * hw] {
                v += (val - m) * (val - m);
            }
        }
        mean[ch] = m;
        var[ch] = v / n;
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); data.len()];
    let mut out = vec![T::zero(); data.len()];
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * hw;
            for i in base..base + hw {
                let xh = (data[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                out[i] = gamma[ch] * xh + beta[ch];
            }
        }
    }
    Ok(BnBatch {
        output: Tensor::new(x.shape().to_vec(), out)?,
        xhat,
        inv_std,
        mean,
        var,
        count,
    })
}

/// Evaluation-mode normalization with fixed running statistics.
pub fn batch_norm_eval<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    eps: T,
) -> Result<Tensor<T>> {
    let (b, c, hw) = check_params(x, gamma, beta)?;
    if running_mean.len() != c || running_var.len() != c {
        return Err(Error::config("running statistics length mismatch"));
    }
    let mut out = x.data().to_vec();
    for bi in 0..b {
        for ch in 0..c {
            let scale = gamma[ch] / (running_var[ch] + eps).sqrt();
            let shift = beta[ch] - running_mean[ch] * scale;
            for v in &mut out[(bi * c + ch) * hw..(bi * c + ch + 1) * hw] {
                *v = *v * scale + shift;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Gradients (input, gamma, beta) of training-mode batch norm.
pub fn batch_norm_train_backward<T: Scalar>(
    dy: &Tensor<T>,
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let (b, c, h, w) = dy.dims4()?;
    let hw = h * w;
    let n = T::from_f64((b * hw) as f64);
    let g = dy.data();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * hw;
            for i in base..base + hw {
                dgamma[ch] += g[i] * xhat[i];
                dbeta[ch] += g[i];
            }
        }
    }
    let mut dx = vec![T::zero(); g.len()];
    for bi in 0..b {
        for ch in 0..c {
            let k = gamma[ch] * inv_std[ch] / n;
            let base = (bi * c + ch) * hw;
            for i in base..base + hw {
                dx[i] = k * (n * g[i] - dbeta[ch] - xhat[i] * dgamma[ch]);
            }
        }
    }
    Ok((Tensor::new(dy.shape().to_vec(), dx)?, dgamma, dbeta))
}

/// Gradients (input, gamma, beta) of evaluation-mode batch norm.
pub fn batch_norm_eval_backward<T: Scalar>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    gamma: &[T],
    running_mean: &[T],
    running_var: &[T],
    eps: T,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let (b, c, h, w) = dy.dims4()?;
    let hw = h * w;
    let (g, xd) = (dy.data(), x.data());
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut dx = vec![T::zero(); g.len()];
    for bi in 0..b {
        for ch in 0..c {
            let inv = T::one() / (running_var[ch] + eps).sqrt();
            let base = (bi * c + ch) * hw;
            for i in base..base + hw {
                dx[i] = g[i] * gamma[ch] * inv;
                dgamma[ch] += g[i] * (xd[i] - running_mean[ch]) * inv;
                dbeta[ch] += g[i];
            }
        }
    }
    Ok((Tensor::new(dy.shape().to_vec(), dx)?, dgamma, dbeta))
}

/// Exponential update of running statistics; the running variance uses the unbiased batch
/// variance and stays strictly positive.
pub fn update_running<T: Scalar>(
    running_mean: &mut [T],
    running_var: &mut [T],
    batch_mean: &[T],
    batch_var: &[T],
    count: usize,
    momentum: T,
) {
    let unbias = T::from_f64(count as f64 / (count as f64 - 1.0));
    for c in 0..running_mean.len() {
        running_mean[c] = (T::one() - momentum) * running_mean[c] + momentum * batch_mean[c];
        running_var[c] =
            (T::one() - momentum) * running_var[c] + momentum * batch_var[c] * unbias;
        if !(running_var[c] > T::zero()) {
            running_var[c] = T::epsilon();
        }
    }
}

/// Self-contained batch-norm layer state for direct (graph-free) use.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    pub momentum: T,
    pub training: bool,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon: T::from_f64(BN_EPSILON),
            momentum: T::from_f64(BN_MOMENTUM),
            training: true,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if self.training {
            let batch = batch_norm_train(x, &self.gamma, &self.beta, self.epsilon)?;
            update_running(
                &mut self.running_mean,
                &mut self.running_var,
                &batch.mean,
                &batch.var,
                batch.count,
                self.momentum,
            );
            Ok(batch.output)
        } else {
            batch_norm_eval(
                x,
                &self.gamma,
                &self.beta,
                &self.running_mean,
                &self.running_var,
                self.epsilon,
            )
        }
    }
}

/// Functional entry point matching the layer contract.
pub fn batch_norm<T: Scalar>(input: &Tensor<T>, state: &mut BatchNormState<T>) -> Result<Tensor<T>> {
    state.forward(input)
}
