//! The complete detector: backbone, region-proposal head and its anchor grid.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{Backbone, BranchOutputs, ModelConfig};
use crate::error::{Error, Result};
use crate::head::{decode_and_nms, generate_anchors, AnchorSet, DetectConfig, Detection, RpnHead};
use crate::nn::{checkpoint, Graph, ParamStore, Scalar, Tensor, Var};

#[derive(Clone, Debug)]
pub struct Detector<T: Scalar = f32> {
    pub cfg: ModelConfig,
    pub store: ParamStore<T>,
    pub backbone: Backbone,
    pub head: RpnHead,
    pub anchors: AnchorSet,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutputs {
    pub branches: BranchOutputs,
    /// `B×A×h×w` objectness logits.
    pub logits: Var,
    /// `B×4A×h×w` box deltas.
    pub deltas: Var,
}

/// Path of the model-config file written next to a checkpoint.
pub fn config_sidecar(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

impl<T: Scalar> Detector<T> {
    /// Builds a freshly initialized model; weights depend only on `cfg` and `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let backbone = Backbone::build(&cfg, &mut store, &mut rng)?;
        let head_channels = cfg.channels(cfg.head_channels)?;
        let head = RpnHead::build(head_channels, cfg.anchors_per_cell(), &mut store, &mut rng)?;
        let anchors = generate_anchors(
            cfg.feature_hw(),
            cfg.patch,
            &cfg.anchor_scales,
            &cfg.anchor_ratios,
        )?;
        Ok(Self {
            cfg,
            store,
            backbone,
            head,
            anchors,
        })
    }

    pub fn forward<'a>(
        &'a self,
        g: &mut Graph<'a, T>,
        radar: Var,
        lidar: Option<Var>,
        training: bool,
    ) -> Result<ForwardOutputs> {
        let branches = self.backbone.forward(g, &self.store, radar, lidar, training)?;
        let (logits, deltas) = self.head.forward(g, &self.store, branches.fused_feat)?;
        Ok(ForwardOutputs {
            branches,
            logits,
            deltas,
        })
    }

    /// Eval-mode head outputs `(logits, deltas)` for a batch.
    pub fn infer(&self, radar: &Tensor<T>, lidar: Option<&Tensor<T>>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut g = Graph::new();
        let r = g.input(radar.clone());
        let l = lidar.map(|t| g.input(t.clone()));
        let out = self.forward(&mut g, r, l, false)?;
        Ok((g.value(out.logits).clone(), g.value(out.deltas).clone()))
    }

    /// Detections for every image of a batch.
    pub fn predict(
        &self,
        radar: &Tensor<T>,
        lidar: Option<&Tensor<T>>,
        det: &DetectConfig,
    ) -> Result<Vec<Vec<Detection>>> {
        let (logits, deltas) = self.infer(radar, lidar)?;
        let b = logits.dims4()?.0;
        (0..b)
            .map(|i| {
                decode_and_nms(&logits.batch_item(i)?, &deltas.batch_item(i)?, &self.anchors, det)
            })
            .collect()
    }

    pub fn detect_config(&self) -> DetectConfig {
        DetectConfig::desk(self.cfg.input_hw)
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Writes the checkpoint and a `.cfg` sidecar holding the model config.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        checkpoint::save(path, &self.store.named_tensors())?;
        let side = config_sidecar(path);
        std::fs::write(&side, self.cfg.to_kv()).map_err(|e| Error::io(side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = config_sidecar(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let cfg = ModelConfig::from_kv(&text)?;
        let mut model = Self::new(cfg, 0)?;
        model.store.load_named(checkpoint::load(path)?)?;
        Ok(model)
    }

    pub fn cast<U: Scalar>(&self) -> Detector<U> {
        Detector {
            cfg: self.cfg.clone(),
            store: self.store.cast(),
            backbone: self.backbone.clone(),
            head: self.head.clone(),
            anchors: self.anchors.clone(),
        }
    }
}
