use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore, Scalar, Tensor};

use super::config::TrainConfig;

/// Classical momentum SGD: `v ← μ·v + (g + λ·p)`, `p ← p − lr·v`.
#[derive(Clone, Debug, Default)]
pub struct Sgd<T> {
    velocity: BTreeMap<ParamId, Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new() -> Self {
        Self {
            velocity: BTreeMap::new(),
        }
    }

    /// Applies one update; a missing gradient counts as zero. Returns the learning rate used.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &BTreeMap<ParamId, Tensor<T>>,
        cfg: &TrainConfig,
        iter: usize,
    ) -> Result<f64> {
        for (&id, g) in grads {
            if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "iteration {iter}: gradient of {} element {i} is {}",
                    store.name(id),
                    g.data()[i]
                )));
            }
        }
        let lr = cfg.lr_at(iter);
        let (lr_t, mu, wd) = (T::from_f64(lr), T::from_f64(cfg.momentum), T::from_f64(cfg.weight_decay));
        let ids: Vec<ParamId> = store.ids().collect();
        for id in ids {
            let p = store.get_mut(id).data_mut();
            let v = self.velocity.entry(id).or_insert_with(|| vec![T::zero(); p.len()]);
            let g = grads.get(&id).map(|t| t.data());
            for k in 0..p.len() {
                let gk = g.map_or(T::zero(), |g| g[k]);
                v[k] = mu * v[k] + gk + wd * p[k];
                p[k] -= lr_t * v[k];
            }
        }
        Ok(lr)
    }
}
