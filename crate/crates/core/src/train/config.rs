use crate::error::{Error, Result};
use crate::head::DEFAULT_LAMBDA;

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub hflip_p: f64,
    /// Crop side as a fraction of the image side, sampled uniformly.
    pub crop_scale_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            hflip_p: 0.5,
            crop_scale_range: (0.8, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_drop_iter: usize,
    pub lr_drop_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Anchors sampled per image for the loss.
    pub minibatch: usize,
    pub lambda: f64,
    /// Loss above this (or non-finite) aborts training.
    pub divergence_bound: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            iterations: 100_000,
            batch_size: 4,
            lr: 0.02,
            lr_drop_iter: 1000,
            lr_drop_factor: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
            augment: AugmentConfig::default(),
            minibatch: 128,
            lambda: DEFAULT_LAMBDA,
            divergence_bound: 1e4,
        }
    }

    pub fn desk() -> Self {
        Self {
            iterations: 2000,
            ..Self::paper()
        }
    }

    /// Learning rate in effect at `iter`: one step drop at `lr_drop_iter`.
    pub fn lr_at(&self, iter: usize) -> f64 {
        if iter < self.lr_drop_iter {
            self.lr
        } else {
            self.lr * self.lr_drop_factor
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 || self.lr_drop_factor <= 0.0 || self.lambda < 0.0 {
            return Err(Error::config("weight_decay, lr_drop_factor and lambda must be non-negative"));
        }
        let (lo, hi) = self.augment.crop_scale_range;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) || !(0.0..=1.0).contains(&self.augment.hflip_p) {
            return Err(Error::config("crop scales must satisfy 0 < min ≤ max ≤ 1; hflip_p in [0, 1]"));
        }
        if self.minibatch == 0 {
            return Err(Error::config("minibatch must be positive"));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "iterations" => self.iterations = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_drop_iter" => self.lr_drop_iter = parse(key, value)?,
            "lr_drop_factor" => self.lr_drop_factor = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "augment" => self.augment.enabled = parse(key, value)?,
            "hflip_p" => self.augment.hflip_p = parse(key, value)?,
            "crop_scale_min" => self.augment.crop_scale_range.0 = parse(key, value)?,
            "crop_scale_max" => self.augment.crop_scale_range.1 = parse(key, value)?,
            "minibatch" => self.minibatch = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "divergence_bound" => self.divergence_bound = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown train key {other:?}"))),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let a = &self.augment;
        [
            ("iterations", self.iterations.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("lr_drop_iter", self.lr_drop_iter.to_string()),
            ("lr_drop_factor", self.lr_drop_factor.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("seed", self.seed.to_string()),
            ("augment", a.enabled.to_string()),
            ("hflip_p", a.hflip_p.to_string()),
            ("crop_scale_min", a.crop_scale_range.0.to_string()),
            ("crop_scale_max", a.crop_scale_range.1.to_string()),
            ("minibatch", self.minibatch.to_string()),
            ("lambda", self.lambda.to_string()),
            ("divergence_bound", self.divergence_bound.to_string()),
        ]
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
    }
}
