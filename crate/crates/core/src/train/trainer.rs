use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::head::{assign_and_sample, rpn_loss_var, AssignConfig, DetectConfig, Detection, RpnTargets};
use crate::model::Detector;
use crate::nn::{Graph, Tensor};
use crate::synth::{scene_seed, Sample};

use super::augment::augment_pair;
use super::config::TrainConfig;
use super::eval::{average_precision, EvalResult};
use super::sgd::Sgd;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    pub total: f64,
    pub cls: f64,
    /// Regression term including its weight.
    pub reg: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LossRecord>,
}

impl TrainLog {
    /// `iter,total,cls,reg,lr` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,total,cls,reg,lr\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.iter, r.total, r.cls, r.reg, r.lr);
        }
        out
    }

    /// Mean total loss over the first (or last) `n` records.
    pub fn mean_total(&self, n: usize, from_end: bool) -> f64 {
        let n = n.min(self.records.len()).max(1);
        let slice = if from_end {
            &self.records[self.records.len().saturating_sub(n)..]
        } else {
            &self.records[..n.min(self.records.len())]
        };
        slice.iter().map(|r| r.total).sum::<f64>() / slice.len().max(1) as f64
    }
}

const SHUFFLE_TAG: u64 = 0x5348_5546;
const SAMPLE_TAG: u64 = 0x5341_4d50;

fn keyed_rng(seed: u64, tag: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(scene_seed(seed ^ tag, key))
}

/// Index of the sample feeding batch slot `pos` (global position over all iterations);
/// each epoch visits every sample once in a seeded order.
struct EpochOrder {
    n: usize,
    seed: u64,
    epoch: usize,
    perm: Vec<usize>,
}

impl EpochOrder {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            epoch: usize::MAX,
            perm: Vec::new(),
        }
    }

    fn at(&mut self, pos: usize) -> usize {
        let epoch = pos / self.n;
        if epoch != self.epoch {
            self.perm = (0..self.n).collect();
            self.perm.shuffle(&mut keyed_rng(self.seed, SHUFFLE_TAG, epoch as u64));
            self.epoch = epoch;
        }
        self.perm[pos % self.n]
    }
}

/// Runs `cfg.iterations` SGD steps on `data`. `on_step` sees every logged record.
///
/// On divergence the model is restored to the parameters of the last finite step and
/// [`Error::Diverged`] is returned.
pub fn train(
    model: &mut Detector<f32>,
    data: &[Sample],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let mut log = TrainLog::default();
    let mut opt = Sgd::new();
    let mut order = EpochOrder::new(data.len(), cfg.seed);
    let assign = AssignConfig::default();
    let mut last_good = model.store.clone();
    for iter in 0..cfg.iterations {
        let mut radars = Vec::with_capacity(cfg.batch_size);
        let mut lidars = Vec::with_capacity(cfg.batch_size);
        let mut targets: Vec<RpnTargets> = Vec::with_capacity(cfg.batch_size);
        for slot in 0..cfg.batch_size {
            let s = &data[order.at(iter * cfg.batch_size + slot)];
            let mut rng = keyed_rng(cfg.seed, SAMPLE_TAG, (iter * cfg.batch_size + slot) as u64);
            let (r, l, gts) = augment_pair(&s.radar, &s.lidar, &s.gts, &cfg.augment, &mut rng);
            targets.push(assign_and_sample(&model.anchors, &gts, cfg.minibatch, &assign, &mut rng)?);
            radars.push(r);
            lidars.push(l);
        }
        let radar = Tensor::stack(&radars.iter().collect::<Vec<_>>())?;
        let lidar = Tensor::stack(&lidars.iter().collect::<Vec<_>>())?;

        let step = {
            let mut g = Graph::new();
            let r = g.input(radar);
            let l = g.input(lidar);
            let out = model.forward(&mut g, r, Some(l), true)?;
            let loss = rpn_loss_var(&mut g, out.logits, out.deltas, &targets, cfg.lambda);
            match loss {
                Ok((v, loss)) if loss.total.is_finite() && loss.total <= cfg.divergence_bound => {
                    let grads = g.backward(v)?;
                    Ok((grads.into_params(), loss, g.take_norm_updates()))
                }
                Ok((_, loss)) => Err(loss.total),
                Err(Error::NonFinite(_)) => Err(f64::NAN),
                Err(e) => return Err(e),
            }
        };
        let (grads, loss, updates) = match step {
            Ok(s) => s,
            Err(bad) => {
                model.store = last_good;
                return Err(Error::Diverged { iteration: iter, loss: bad });
            }
        };
        last_good = model.store.clone();
        let lr = match opt.step(&mut model.store, &grads, cfg, iter) {
            Ok(lr) => lr,
            Err(e) => {
                model.store = last_good;
                return Err(e);
            }
        };
        model.store.apply_norm_updates(&updates);
        let rec = LossRecord {
            iter,
            total: loss.total,
            cls: loss.cls,
            reg: loss.weighted_reg(),
            lr,
        };
        on_step(&rec);
        log.records.push(rec);
    }
    Ok(log)
}

/// Eval-mode detections for every sample, in order.
pub fn detect_all(model: &Detector<f32>, data: &[Sample], det: &DetectConfig) -> Result<Vec<Vec<Detection>>> {
    const CHUNK: usize = 4;
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(CHUNK) {
        let radar = Tensor::stack(&chunk.iter().map(|s| &s.radar).collect::<Vec<_>>())?;
        let lidar = Tensor::stack(&chunk.iter().map(|s| &s.lidar).collect::<Vec<_>>())?;
        out.extend(model.predict(&radar, Some(&lidar), det)?);
    }
    Ok(out)
}

/// AP@0.5 of the model over a set of samples.
pub fn evaluate(model: &Detector<f32>, data: &[Sample], det: &DetectConfig) -> Result<EvalResult> {
    let dets = detect_all(model, data, det)?;
    let gts: Vec<_> = data.iter().map(|s| s.gts.clone()).collect();
    Ok(average_precision(&dets, &gts, 0.5))
}
