//! Dual-branch feature extractor: patch embedding, two depth-wise convolution stages,
//! attention gates between the branches and the weight-shared dilated fork.

mod config;
mod gate;
mod layers;

pub use config::{
    FusionMode, GateStage, HeadKind, ModelConfig, PfsCombine, WidthMult, BASE_BLOCK_I,
    BASE_BLOCK_II, BASE_HEAD, BASE_INPUT, BASE_PFS,
};
pub use gate::{additive_attention_gate, gate_forward, AttentionGate, GateOutput};
pub use layers::{Branch, ConvBlock, ConvLayer, InputBlock, PfsBlock, Stage};

pub(crate) use layers::{Namer, RELU_GAIN};

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{ConvSpec, Graph, ParamStore, Scalar, Var};

/// Feature maps at stride P.
#[derive(Clone, Copy, Debug)]
pub struct BranchOutputs {
    pub radar_feat: Var,
    pub lidar_feat: Option<Var>,
    pub fused_feat: Var,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub cfg: ModelConfig,
    pub primary: Branch,
    pub auxiliary: Option<Branch>,
    pub gates: Vec<(GateStage, AttentionGate)>,
    pub fuse: ConvLayer,
}

impl Backbone {
    pub fn build<T: Scalar>(
        cfg: &ModelConfig,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let primary = Branch::build(cfg, "radar", cfg.primary_in_channels(), store, rng)?;
        let auxiliary = if cfg.branch_count() == 2 {
            Some(Branch::build(cfg, "lidar", cfg.in_channels, store, rng)?)
        } else {
            None
        };
        let mut gates = Vec::new();
        if cfg.uses_gates() {
            let mut stages = cfg.gates.clone();
            stages.sort();
            stages.dedup();
            let mut names = Namer::new("gate");
            for stage in stages {
                let c = cfg.channels(match stage {
                    GateStage::AfterBlockI => BASE_BLOCK_I,
                    GateStage::AfterBlockII => BASE_BLOCK_II,
                })?;
                let mid = cfg.attention_mid_channels.unwrap_or(c / 2).max(1);
                gates.push((stage, AttentionGate::build(c, mid, store, &mut names, rng)?));
            }
        }
        let pfs_out = cfg.channels(BASE_PFS)?;
        let fuse_in = pfs_out * cfg.branch_count();
        let fuse = ConvLayer::build(
            store,
            &Namer::new("fuse").layer(),
            ConvSpec::pointwise(fuse_in, cfg.channels(cfg.head_channels)?),
            true,
            RELU_GAIN,
            rng,
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            primary,
            auxiliary,
            gates,
            fuse,
        })
    }

    fn gate(&self, stage: GateStage) -> Option<&AttentionGate> {
        self.gates.iter().find(|(s, _)| *s == stage).map(|(_, g)| g)
    }

    fn check_input<T: Scalar>(&self, g: &Graph<'_, T>, x: Var, what: &str) -> Result<()> {
        let (_, c, h, w) = g.value(x).dims4().map_err(|e| Error::Input(e.to_string()))?;
        if c != self.cfg.in_channels || (h, w) != self.cfg.input_hw {
            return Err(Error::Input(format!(
                "{what} input is {c}×{h}×{w}, model expects {}×{}×{}",
                self.cfg.in_channels, self.cfg.input_hw.0, self.cfg.input_hw.1
            )));
        }
        Ok(())
    }

    /// Runs the configured fusion mode. `lidar` is required unless the model is radar-only,
    /// in which case it is ignored.
    pub fn forward<'a, T: Scalar>(
        &self,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        radar: Var,
        lidar: Option<Var>,
        training: bool,
    ) -> Result<BranchOutputs> {
        self.check_input(g, radar, "radar")?;
        if self.cfg.radar_only {
            let r = self.branch_forward(&self.primary, g, store, radar, training)?;
            let fused = self.fuse_forward(g, store, &[r])?;
            return Ok(BranchOutputs {
                radar_feat: r,
                lidar_feat: None,
                fused_feat: fused,
            });
        }
        let lidar = lidar.ok_or_else(|| {
            Error::Input(format!("{} fusion needs a lidar input", self.cfg.fusion_mode))
        })?;
        self.check_input(g, lidar, "lidar")?;
        match &self.auxiliary {
            None => {
                let stacked = g.concat(&[radar, lidar])?;
                let f = self.branch_forward(&self.primary, g, store, stacked, training)?;
                let fused = self.fuse_forward(g, store, &[f])?;
                Ok(BranchOutputs {
                    radar_feat: f,
                    lidar_feat: None,
                    fused_feat: fused,
                })
            }
            Some(aux) => {
                let p = &self.primary;
                let mut r = p.input.forward(g, store, radar, training)?;
                let mut l = aux.input.forward(g, store, lidar, training)?;
                r = Branch::stage_forward(&p.block1, g, store, r, training)?;
                l = Branch::stage_forward(&aux.block1, g, store, l, training)?;
                if let Some(gate) = self.gate(GateStage::AfterBlockI) {
                    r = gate.forward(g, store, r, l)?.output;
                }
                r = Branch::stage_forward(&p.block2, g, store, r, training)?;
                l = Branch::stage_forward(&aux.block2, g, store, l, training)?;
                if let Some(gate) = self.gate(GateStage::AfterBlockII) {
                    r = gate.forward(g, store, r, l)?.output;
                }
                r = p.pfs_forward(g, store, r, training)?;
                l = aux.pfs_forward(g, store, l, training)?;
                let fused = self.fuse_forward(g, store, &[r, l])?;
                Ok(BranchOutputs {
                    radar_feat: r,
                    lidar_feat: Some(l),
                    fused_feat: fused,
                })
            }
        }
    }

    fn branch_forward<'a, T: Scalar>(
        &self,
        branch: &Branch,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        x: Var,
        training: bool,
    ) -> Result<Var> {
        let x = branch.input.forward(g, store, x, training)?;
        let x = Branch::stage_forward(&branch.block1, g, store, x, training)?;
        let x = Branch::stage_forward(&branch.block2, g, store, x, training)?;
        branch.pfs_forward(g, store, x, training)
    }

    fn fuse_forward<'a, T: Scalar>(
        &self,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        parts: &[Var],
    ) -> Result<Var> {
        let x = g.concat(parts)?;
        let y = self.fuse.forward(g, store, x)?;
        Ok(g.relu(y))
    }
}
