//! Reverse-mode tape over the operator set the detector needs.
//!
//! A [`Graph`] records every op as it is evaluated. Parameters are borrowed from a
//! [`ParamStore`]; the same parameter may enter the graph several times (the dilated fork
//! shares one kernel across three branches) and its gradients accumulate.

use std::borrow::Cow;
use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::conv::{conv2d_backward, conv2d_forward, ConvSpec};
use super::norm::{
    batch_norm_eval, batch_norm_eval_backward, batch_norm_train, batch_norm_train_backward,
};
use super::ops::{
    activation, activation_backward, concat_channels, elementwise, elementwise_backward,
    split_channels, Activation, Binary,
};
use super::params::{NormId, NormUpdate, ParamId, ParamStore};
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Batch-norm behaviour for one call.
#[derive(Clone, Debug)]
pub enum NormMode<T> {
    /// Batch statistics; `track` records them for a running-stat update.
    Train { eps: T, track: Option<NormId> },
    /// Fixed statistics.
    Eval { mean: Vec<T>, var: Vec<T>, eps: T },
}

enum Op<T> {
    Input,
    Param(ParamId),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    NormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    NormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        var: Vec<T>,
        eps: T,
    },
    Act(Var, Activation),
    Binary(Var, Var, Binary),
    Scale(Var, T),
    Concat(Vec<Var>),
    Sum(Var),
    /// Scalar-valued op whose input gradients were computed alongside its value.
    Custom { inputs: Vec<Var>, grads: Vec<Tensor<T>> },
}

struct Node<'a, T: Scalar> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
    norm_updates: Vec<NormUpdate<T>>,
}

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of a reverse pass.
#[derive(Debug)]
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
    params: BTreeMap<ParamId, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a recorded value, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id)
    }

    pub fn params(&self) -> &BTreeMap<ParamId, Tensor<T>> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<ParamId, Tensor<T>> {
        self.params
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            norm_updates: Vec::new(),
        }
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input (no gradient tracked).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(Cow::Owned(value), Op::Input, false)
    }

    /// Leaf whose gradient is wanted (used by gradient checks).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(Cow::Owned(value), Op::Input, true)
    }

    pub fn param(&mut self, store: &'a ParamStore<T>, id: ParamId) -> Var {
        self.push(Cow::Borrowed(store.get(id)), Op::Param(id), true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let out = conv2d_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            &spec,
        )?;
        let rg = self.needs(&[x, w]) || b.is_some_and(|b| self.needs(&[b]));
        Ok(self.push(Cow::Owned(out), Op::Conv { x, w, b, spec }, rg))
    }

    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, mode: NormMode<T>) -> Result<Var> {
        let rg = self.needs(&[x, gamma, beta]);
        match mode {
            NormMode::Train { eps, track } => {
                let r = batch_norm_train(
                    self.value(x),
                    self.value(gamma).data(),
                    self.value(beta).data(),
                    eps,
                )?;
                if let Some(norm) = track {
                    self.norm_updates.push(NormUpdate {
                        norm,
                        mean: r.mean,
                        var: r.var,
                        count: r.count,
                    });
                }
                let op = Op::NormTrain {
                    x,
                    gamma,
                    beta,
                    xhat: r.xhat,
                    inv_std: r.inv_std,
                };
                Ok(self.push(Cow::Owned(r.output), op, rg))
            }
            NormMode::Eval { mean, var, eps } => {
                let out = batch_norm_eval(
                    self.value(x),
                    self.value(gamma).data(),
                    self.value(beta).data(),
                    &mean,
                    &var,
                    eps,
                )?;
                let op = Op::NormEval {
                    x,
                    gamma,
                    beta,
                    mean,
                    var,
                    eps,
                };
                Ok(self.push(Cow::Owned(out), op, rg))
            }
        }
    }

    /// Batch norm over a stored layer: batch statistics (tracked) when `training`, running
    /// statistics otherwise.
    pub fn norm_layer(
        &mut self,
        store: &'a ParamStore<T>,
        id: NormId,
        x: Var,
        training: bool,
    ) -> Result<Var> {
        let layer = store.norm(id);
        let gamma = self.param(store, layer.gamma);
        let beta = self.param(store, layer.beta);
        let mode = if training {
            NormMode::Train {
                eps: layer.eps,
                track: Some(id),
            }
        } else {
            NormMode::Eval {
                mean: layer.running_mean.clone(),
                var: layer.running_var.clone(),
                eps: layer.eps,
            }
        };
        self.batch_norm(x, gamma, beta, mode)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = activation(self.value(x), kind);
        let rg = self.needs(&[x]);
        self.push(Cow::Owned(out), Op::Act(x, kind), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Rectifier)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn binary(&mut self, a: Var, b: Var, kind: Binary) -> Result<Var> {
        let out = elementwise(self.value(a), self.value(b), kind)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Cow::Owned(out), Op::Binary(a, b, kind), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let rg = self.needs(&[x]);
        self.push(Cow::Owned(out), Op::Scale(x, factor), rg)
    }

    /// Element-wise arithmetic mean of equally shaped values.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::config("mean of zero tensors"))?;
        let mut acc = first;
        for &p in rest {
            acc = self.add(acc, p)?;
        }
        Ok(self.scale(acc, T::from_f64(1.0 / parts.len() as f64)))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = concat_channels(&vals)?;
        let rg = self.needs(parts);
        Ok(self.push(Cow::Owned(out), Op::Concat(parts.to_vec()), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(Cow::Owned(out), Op::Sum(x), rg)
    }

    /// Records a scalar computed outside the tape together with its input gradients.
    pub fn custom_scalar(&mut self, inputs: &[Var], value: T, grads: Vec<Tensor<T>>) -> Result<Var> {
        if inputs.len() != grads.len() {
            return Err(Error::config("custom op needs one gradient per input"));
        }
        for (v, g) in inputs.iter().zip(&grads) {
            if self.value(*v).shape() != g.shape() {
                return Err(Error::config("custom op gradient shape mismatch"));
            }
        }
        let rg = self.needs(inputs);
        Ok(self.push(
            Cow::Owned(Tensor::scalar(value)),
            Op::Custom {
                inputs: inputs.to_vec(),
                grads,
            },
            rg,
        ))
    }

    /// Running-statistic updates observed by training-mode batch norms so far.
    pub fn take_norm_updates(&mut self) -> Vec<NormUpdate<T>> {
        std::mem::take(&mut self.norm_updates)
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        if self.value(output).numel() != 1 {
            return Err(Error::config(format!(
                "backward() needs a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        self.backward_with_seed(output, Tensor::full(self.value(output).shape().to_vec(), T::one()))
    }

    /// Reverse pass with an explicit upstream gradient for `output`.
    pub fn backward_with_seed(&self, output: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::config("seed gradient shape mismatch"));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params: BTreeMap<ParamId, Tensor<T>> = BTreeMap::new();
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let send = |v: Var, t: Tensor<T>, grads: &mut Vec<Option<Tensor<T>>>| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Input => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Param(id) => {
                    match params.get_mut(id) {
                        Some(acc) => acc.add_assign(&g),
                        None => {
                            params.insert(*id, g.clone());
                        }
                    }
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Conv { x, w, b, spec } => {
                    let cg = conv2d_backward(
                        self.value(*x),
                        self.value(*w),
                        b.is_some(),
                        spec,
                        &g,
                        self.nodes[x.0].requires_grad,
                    )?;
                    if let Some(dx) = cg.input {
                        send(*x, dx, &mut grads);
                    }
                    send(*w, cg.weight, &mut grads);
                    if let (Some(b), Some(db)) = (b, cg.bias) {
                        send(*b, db, &mut grads);
                    }
                }
                Op::NormTrain {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let (dx, dg, db) =
                        batch_norm_train_backward(&g, xhat, inv_std, self.value(*gamma).data())?;
                    send(*x, dx, &mut grads);
                    let c = dg.len();
                    send(*gamma, Tensor::new(vec![c], dg)?, &mut grads);
                    send(*beta, Tensor::new(vec![c], db)?, &mut grads);
                }
                Op::NormEval {
                    x,
                    gamma,
                    beta,
                    mean,
                    var,
                    eps,
                } => {
                    let (dx, dg, db) = batch_norm_eval_backward(
                        &g,
                        self.value(*x),
                        self.value(*gamma).data(),
                        mean,
                        var,
                        *eps,
                    )?;
                    send(*x, dx, &mut grads);
                    let c = dg.len();
                    send(*gamma, Tensor::new(vec![c], dg)?, &mut grads);
                    send(*beta, Tensor::new(vec![c], db)?, &mut grads);
                }
                Op::Act(x, kind) => {
                    let dx = activation_backward(&node.value, &g, *kind);
                    send(*x, dx, &mut grads);
                }
                Op::Binary(a, b, kind) => {
                    let (da, db) = elementwise_backward(self.value(*a), self.value(*b), &g, *kind)?;
                    send(*a, da, &mut grads);
                    send(*b, db, &mut grads);
                }
                Op::Scale(x, f) => {
                    let f = *f;
                    send(*x, g.map(|v| v * f), &mut grads);
                }
                Op::Concat(parts) => {
                    let chans: Vec<usize> = parts.iter().map(|p| self.value(*p).shape()[1]).collect();
                    for (p, t) in parts.iter().zip(split_channels(&g, &chans)?) {
                        send(*p, t, &mut grads);
                    }
                }
                Op::Sum(x) => {
                    let s = g.data()[0];
                    send(*x, Tensor::full(self.value(*x).shape().to_vec(), s), &mut grads);
                }
                Op::Custom { inputs, grads: local } => {
                    let s = g.data()[0];
                    for (v, lg) in inputs.iter().zip(local) {
                        send(*v, lg.map(|x| x * s), &mut grads);
                    }
                }
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_gradient_is_ones() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::full(vec![1, 2, 2, 2], 0.3));
        let b = g.leaf(Tensor::full(vec![1, 3, 2, 2], -0.7));
        let c = g.concat(&[a, b]).unwrap();
        let s = g.sum(c);
        let grads = g.backward(s).unwrap();
        assert!(grads.wrt(a).unwrap().data().iter().all(|&v| v == 1.0));
        assert_eq!(grads.wrt(b).unwrap().shape(), &[1, 3, 2, 2]);
        assert!(grads.wrt(b).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::full(vec![1, 1, 1, 1], 2.0));
        let mut g = Graph::new();
        let x = g.input(Tensor::full(vec![1, 1, 2, 2], 1.0));
        let w1 = g.param(&store, id);
        let w2 = g.param(&store, id);
        let spec = ConvSpec::pointwise(1, 1);
        let y1 = g.conv2d(x, w1, None, spec).unwrap();
        let y2 = g.conv2d(x, w2, None, spec).unwrap();
        let y = g.add(y1, y2).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        // d/dw of 2·Σ(w·x) over four ones
        assert_eq!(grads.param(id).unwrap().data(), &[8.0]);
        assert!(grads.wrt(x).is_none());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::<f32>::new();
        let a = g.leaf(Tensor::zeros(vec![2]));
        assert!(g.backward(a).is_err());
    }
}
