//! Element-wise activations, binary ops with channel broadcast, and channel concatenation.

use crate::error::{Error, Result};

use super::conv::{conv2d_forward, ConvSpec};
use super::scalar::Scalar;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Rectifier,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Mul,
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn activation<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Rectifier => input.map(|v| v.max(T::zero())),
        Activation::Sigmoid => input.map(sigmoid),
    }
}

/// Derivative given the forward output (both activations are expressible in terms of it).
/// The rectifier's subgradient at 0 is 0.
pub fn activation_backward<T: Scalar>(output: &Tensor<T>, dy: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let data = output
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&y, &g)| match kind {
            Activation::Rectifier => {
                if y > T::zero() {
                    g
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => g * y * (T::one() - y),
        })
        .collect();
    Tensor::new(output.shape().to_vec(), data).expect("same shape")
}

/// How the second operand of a binary op maps onto the first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Broadcast {
    Same,
    /// `b` is B×1×H×W, repeated across the channels of `a`.
    OverChannels { channels: usize, plane: usize },
}

pub(crate) fn broadcast_rule(a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        return Ok(Broadcast::Same);
    }
    if a.len() == 4 && b.len() == 4 && b[1] == 1 && a[0] == b[0] && a[2] == b[2] && a[3] == b[3] {
        return Ok(Broadcast::OverChannels {
            channels: a[1],
            plane: a[2] * a[3],
        });
    }
    Err(Error::config(format!(
        "shapes {a:?} and {b:?} are not broadcast-compatible"
    )))
}

fn b_index(rule: Broadcast, i: usize) -> usize {
    match rule {
        Broadcast::Same => i,
        Broadcast::OverChannels { channels, plane } => {
            let item = i / (channels * plane);
            item * plane + i % plane
        }
    }
}

pub fn elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, kind: Binary) -> Result<Tensor<T>> {
    let rule = broadcast_rule(a.shape(), b.shape())?;
    let bd = b.data();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &av)| {
            let bv = bd[b_index(rule, i)];
            match kind {
                Binary::Add => av + bv,
                Binary::Mul => av * bv,
            }
        })
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Gradients of `a ∘ b` for upstream `dy`; the broadcast operand's gradient is summed over channels.
pub(crate) fn elementwise_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    dy: &Tensor<T>,
    kind: Binary,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let rule = broadcast_rule(a.shape(), b.shape())?;
    let (ad, bd, g) = (a.data(), b.data(), dy.data());
    let mut da = vec![T::zero(); ad.len()];
    let mut db = vec![T::zero(); bd.len()];
    for i in 0..ad.len() {
        let j = b_index(rule, i);
        match kind {
            Binary::Add => {
                da[i] = g[i];
                db[j] += g[i];
            }
            Binary::Mul => {
                da[i] = g[i] * bd[j];
                db[j] += g[i] * ad[i];
            }
        }
    }
    Ok((
        Tensor::new(a.shape().to_vec(), da)?,
        Tensor::new(b.shape().to_vec(), db)?,
    ))
}

pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::config("concat of zero tensors"))?;
    let (b, _, h, w) = first.dims4()?;
    let mut total = 0;
    for p in parts {
        let (pb, pc, ph, pw) = p.dims4()?;
        if (pb, ph, pw) != (b, h, w) {
            return Err(Error::config(format!(
                "concat parts disagree: {:?} vs {:?}",
                first.shape(),
                p.shape()
            )));
        }
        total += pc;
    }
    let mut data = Vec::with_capacity(b * total * h * w);
    for bi in 0..b {
        for p in parts {
            let n = p.shape()[1] * h * w;
            data.extend_from_slice(&p.data()[bi * n..(bi + 1) * n]);
        }
    }
    Tensor::new(vec![b, total, h, w], data)
}

/// Splits a gradient of a channel concatenation back into per-part gradients.
pub(crate) fn split_channels<T: Scalar>(dy: &Tensor<T>, channels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let (b, c, h, w) = dy.dims4()?;
    if channels.iter().sum::<usize>() != c {
        return Err(Error::config("channel split does not cover the tensor"));
    }
    let mut out: Vec<Vec<T>> = channels
        .iter()
        .map(|&pc| Vec::with_capacity(b * pc * h * w))
        .collect();
    for bi in 0..b {
        let mut start = bi * c * h * w;
        for (k, &pc) in channels.iter().enumerate() {
            let n = pc * h * w;
            out[k].extend_from_slice(&dy.data()[start..start + n]);
            start += n;
        }
    }
    out.into_iter()
        .zip(channels)
        .map(|(d, &pc)| Tensor::new(vec![b, pc, h, w], d))
        .collect()
}

/// Forward-only convolution with the layer contract's argument order.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    conv2d_forward(input, weights, bias, spec)
}
