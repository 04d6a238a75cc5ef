use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::conv::ConvSpec;
use super::norm::{update_running, BN_EPSILON, BN_MOMENTUM};
use super::scalar::Scalar;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NormId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Batch-norm layer: affine parameters live in the store, running statistics alongside.
#[derive(Clone, Debug, PartialEq)]
pub struct NormLayer<T> {
    pub name: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: T,
    pub momentum: T,
}

/// Batch statistics observed during a training forward pass, applied after the step.
#[derive(Clone, Debug)]
pub struct NormUpdate<T> {
    pub norm: NormId,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    norms: Vec<NormLayer<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            norms: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Parameter { name, value });
        ParamId(self.params.len() - 1)
    }

    /// Conv weight drawn from N(0, gain²/fan_in), with an optional zero bias.
    pub fn add_conv(
        &mut self,
        prefix: &str,
        spec: &ConvSpec,
        bias: bool,
        gain: f64,
        rng: &mut impl Rng,
    ) -> (ParamId, Option<ParamId>) {
        let w = fan_in_normal(spec, gain, rng);
        let wid = self.add(format!("{prefix}.weight"), w);
        let bid = bias.then(|| self.add(format!("{prefix}.bias"), Tensor::zeros(vec![spec.out_channels])));
        (wid, bid)
    }

    /// Adds gamma = 1, beta = 0 and unit running statistics.
    pub fn add_norm(&mut self, prefix: &str, channels: usize) -> NormId {
        let gamma = self.add(format!("{prefix}.gamma"), Tensor::full(vec![channels], T::one()));
        let beta = self.add(format!("{prefix}.beta"), Tensor::zeros(vec![channels]));
        self.norms.push(NormLayer {
            name: prefix.to_string(),
            gamma,
            beta,
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: T::from_f64(BN_EPSILON),
            momentum: T::from_f64(BN_MOMENTUM),
        });
        NormId(self.norms.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn norm(&self, id: NormId) -> &NormLayer<T> {
        &self.norms[id.0]
    }

    pub fn norm_mut(&mut self, id: NormId) -> &mut NormLayer<T> {
        &mut self.norms[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn norms(&self) -> &[NormLayer<T>] {
        &self.norms
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn apply_norm_updates(&mut self, updates: &[NormUpdate<T>]) {
        for u in updates {
            let layer = &mut self.norms[u.norm.0];
            update_running(
                &mut layer.running_mean,
                &mut layer.running_var,
                &u.mean,
                &u.var,
                u.count,
                layer.momentum,
            );
        }
    }

    /// All tensors in checkpoint order: parameters, then running statistics.
    pub fn named_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out: Vec<(String, Tensor<T>)> = self
            .params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        for n in &self.norms {
            let c = n.running_mean.len();
            out.push((
                format!("{}.running_mean", n.name),
                Tensor::new(vec![c], n.running_mean.clone()).expect("shape"),
            ));
            out.push((
                format!("{}.running_var", n.name),
                Tensor::new(vec![c], n.running_var.clone()).expect("shape"),
            ));
        }
        out
    }

    /// Overwrites every parameter and running statistic from a named set; shapes must match
    /// and nothing may be missing.
    pub fn load_named(&mut self, tensors: Vec<(String, Tensor<T>)>) -> Result<()> {
        let mut map: HashMap<String, Tensor<T>> = tensors.into_iter().collect();
        let mut take = |name: &str, shape: &[usize]| -> Result<Tensor<T>> {
            let t = map
                .remove(name)
                .ok_or_else(|| Error::Input(format!("checkpoint lacks tensor {name}")))?;
            if t.shape() != shape {
                return Err(Error::Input(format!(
                    "checkpoint tensor {name} has shape {:?}, model expects {shape:?}",
                    t.shape()
                )));
            }
            Ok(t)
        };
        for p in &mut self.params {
            let shape = p.value.shape().to_vec();
            p.value = take(&p.name, &shape)?;
        }
        for n in &mut self.norms {
            let c = [n.running_mean.len()];
            n.running_mean = take(&format!("{}.running_mean", n.name), &c)?.into_data();
            n.running_var = take(&format!("{}.running_var", n.name), &c)?.into_data();
        }
        if let Some(extra) = map.keys().next() {
            return Err(Error::Input(format!("checkpoint has unknown tensor {extra}")));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            norms: self
                .norms
                .iter()
                .map(|n| NormLayer {
                    name: n.name.clone(),
                    gamma: n.gamma,
                    beta: n.beta,
                    running_mean: n.running_mean.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                    running_var: n.running_var.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                    eps: U::from_f64(n.eps.as_f64()),
                    momentum: U::from_f64(n.momentum.as_f64()),
                })
                .collect(),
        }
    }
}

/// Zero-mean normal weights with standard deviation `gain / sqrt(fan_in)`.
pub fn fan_in_normal<T: Scalar>(spec: &ConvSpec, gain: f64, rng: &mut impl Rng) -> Tensor<T> {
    let shape = spec.weight_shape();
    let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
    let normal = Normal::new(0.0, gain / fan_in.sqrt()).expect("positive std");
    Tensor::from_fn(shape.to_vec(), |_| T::from_f64(normal.sample(rng)))
}
