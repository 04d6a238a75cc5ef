use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{ConvSpec, Graph, NormId, ParamId, ParamStore, Scalar, Var};

use super::config::{PfsCombine, BASE_BLOCK_I, BASE_BLOCK_II, BASE_INPUT, BASE_PFS};
use super::config::ModelConfig;

/// Init gain for weights feeding a rectifier.
pub(crate) const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

/// Hands out `module.block{i}.layer{j}` prefixes in build order.
#[derive(Debug)]
pub(crate) struct Namer {
    module: String,
    block: usize,
    layer: usize,
}

impl Namer {
    pub fn new(module: &str) -> Self {
        Self {
            module: module.to_string(),
            block: 0,
            layer: 0,
        }
    }

    pub fn layer(&mut self) -> String {
        let name = format!("{}.block{}.layer{}", self.module, self.block, self.layer);
        self.layer += 1;
        name
    }

    pub fn next_block(&mut self) {
        self.block += 1;
        self.layer = 0;
    }
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl ConvLayer {
    pub(crate) fn build<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        spec: ConvSpec,
        bias: bool,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let (weight, bias) = store.add_conv(name, &spec, bias, gain, rng);
        Ok(Self { spec, weight, bias })
    }

    pub fn forward<'a, T: Scalar>(
        &self,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        x: Var,
    ) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.conv2d(x, w, b, self.spec)
    }
}

pub(crate) fn expect_channels<T: Scalar>(g: &Graph<'_, T>, x: Var, want: usize, what: &str) -> Result<()> {
    let (_, c, _, _) = g.value(x).dims4()?;
    if c != want {
        return Err(Error::config(format!("{what} expects {want} channels, got {c}")));
    }
    Ok(())
}

/// Patch embedding: conv(k = s = P) → rectifier → batch norm.
#[derive(Clone, Debug)]
pub struct InputBlock {
    pub conv: ConvLayer,
    pub norm: NormId,
}

impl InputBlock {
    fn build<T: Scalar>(
        cfg: &ModelConfig,
        in_channels: usize,
        store: &mut ParamStore<T>,
        names: &mut Namer,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let out = cfg.channels(BASE_INPUT)?;
        let spec = ConvSpec::new(in_channels, out, cfg.patch).with_stride(cfg.patch);
        let conv = ConvLayer::build(store, &names.layer(), spec, true, RELU_GAIN, rng)?;
        let norm = store.add_norm(&names.layer(), out);
        names.next_block();
        Ok(Self { conv, norm })
    }

    pub fn forward<'a, T: Scalar>(
        &self,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        x: Var,
        training: bool,
    ) -> Result<Var> {
        let (_, _, h, w) = g.value(x).dims4()?;
        let p = self.conv.spec.kernel;
        if h % p != 0 || w % p != 0 {
            return Err(Error::config(format!("input {h}×{w} is not divisible by patch {p}")));
        }
        expect_channels(g, x, self.conv.spec.in_channels, "input block")?;
        let y = self.conv.forward(g, store, x)?;
        let y = g.relu(y);
        g.norm_layer(store, self.norm, y, training)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    I,
    II,
}

/// One repeat of convolution block I (`1×1 → BN → dw → ReLU`) or II
/// (`1×1 → BN → dw → 1×1 → ReLU`).
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub stage: Stage,
    pub reduce: ConvLayer,
    pub norm: NormId,
    pub depthwise: ConvLayer,
    pub project: Option<ConvLayer>,
}

impl ConvBlock {
    fn build<T: Scalar>(
        cfg: &ModelConfig,
        stage: Stage,
        in_channels: usize,
        store: &mut ParamStore<T>,
        names: &mut Namer,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let out = cfg.channels(match stage {
            Stage::I => BASE_BLOCK_I,
            Stage::II => BASE_BLOCK_II,
        })?;
        let reduce = ConvLayer::build(
            store,
            &names.layer(),
            ConvSpec::pointwise(in_channels, out),
            false,
            1.0,
            rng,
        )?;
        let norm = store.add_norm(&names.layer(), out);
        let dw_spec = ConvSpec::depthwise(out, cfg.dw_kernel, 1);
        let (depthwise, project) = match stage {
            Stage::I => (
                ConvLayer::build(store, &names.layer(), dw_spec, true, RELU_GAIN, rng)?,
                None,
            ),
            Stage::II => {
                let dw = ConvLayer::build(store, &names.layer(), dw_spec, false, 1.0, rng)?;
                let pw = ConvSpec::pointwise(out, out);
                (dw, Some(ConvLayer::build(store, &names.layer(), pw, true, RELU_GAIN, rng)?))
            }
        };
        names.next_block();
        Ok(Self {
            stage,
            reduce,
            norm,
            depthwise,
            project,
        })
    }

    pub fn forward<'a, T: Scalar>(
        &self,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        x: Var,
        training: bool,
    ) -> Result<Var> {
        let what = match self.stage {
            Stage::I => "convolution block I",
            Stage::II => "convolution block II",
        };
        expect_channels(g, x, self.reduce.spec.in_channels, what)?;
        let y = self.reduce.forward(g, store, x)?;
        let y = g.norm_layer(store, self.norm, y, training)?;
        let mut y = self.depthwise.forward(g, store, y)?;
        if let Some(p) = &self.project {
            y = p.forward(g, store, y)?;
        }
        Ok(g.relu(y))
    }
}

/// One repeat of the parallel forked structure: a single depth-wise kernel applied at every
/// dilation rate.
#[derive(Clone, Debug)]
pub struct PfsBlock {
    pub reduce: ConvLayer,
    pub norm_in: NormId,
    pub shared_weight: ParamId,
    pub forks: Vec<ConvSpec>,
    pub combine: PfsCombine,
    pub norm_out: NormId,
    pub expand: ConvLayer,
}

impl PfsBlock {
    fn build<T: Scalar>(
        cfg: &ModelConfig,
        in_channels: usize,
        store: &mut ParamStore<T>,
        names: &mut Namer,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mid = cfg.channels(BASE_BLOCK_II)?;
        let out = cfg.channels(BASE_PFS)?;
        let reduce = ConvLayer::build(
            store,
            &names.layer(),
            ConvSpec::pointwise(in_channels, mid),
            false,
            1.0,
            rng,
        )?;
        let norm_in = store.add_norm(&names.layer(), mid);
        let forks: Vec<ConvSpec> = cfg
            .dilations
            .iter()
            .map(|&d| ConvSpec::depthwise(mid, cfg.dw_kernel, d))
            .collect();
        let shared = ConvLayer::build(store, &names.layer(), forks[0], false, 1.0, rng)?;
        let combined = match cfg.pfs_combine {
            PfsCombine::Average => mid,
            PfsCombine::Concat => mid * forks.len(),
        };
        let norm_out = store.add_norm(&names.layer(), combined);
        let expand = ConvLayer::build(
            store,
            &names.layer(),
            ConvSpec::pointwise(combined, out),
            true,
            RELU_GAIN,
            rng,
        )?;
        names.next_block();
        Ok(Self {
            reduce,
            norm_in,
            shared_weight: shared.weight,
            forks,
            combine: cfg.pfs_combine,
            norm_out,
            expand,
        })
    }

    pub fn effective_kernels(&self) -> Vec<usize> {
        self.forks.iter().map(ConvSpec::effective_kernel).collect()
    }

    /// The individual fork outputs before combination.
    pub fn forks_forward<'a, T: Scalar>(
        &self,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        reduced: Var,
    ) -> Result<Vec<Var>> {
        let w = g.param(store, self.shared_weight);
        self.forks.iter().map(|s| g.conv2d(reduced, w, None, *s)).collect()
    }

    pub fn forward<'a, T: Scalar>(
        &self,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        x: Var,
        training: bool,
    ) -> Result<Var> {
        expect_channels(g, x, self.reduce.spec.in_channels, "parallel forked structure")?;
        let y = self.reduce.forward(g, store, x)?;
        let y = g.norm_layer(store, self.norm_in, y, training)?;
        let forks = self.forks_forward(g, store, y)?;
        let y = match self.combine {
            PfsCombine::Average => g.mean(&forks)?,
            PfsCombine::Concat => g.concat(&forks)?,
        };
        let y = g.norm_layer(store, self.norm_out, y, training)?;
        let y = self.expand.forward(g, store, y)?;
        Ok(g.relu(y))
    }
}

/// One modality's feature extractor.
#[derive(Clone, Debug)]
pub struct Branch {
    pub input: InputBlock,
    pub block1: Vec<ConvBlock>,
    pub block2: Vec<ConvBlock>,
    pub pfs: Vec<PfsBlock>,
}

impl Branch {
    pub(crate) fn build<T: Scalar>(
        cfg: &ModelConfig,
        module: &str,
        in_channels: usize,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut names = Namer::new(module);
        let input = InputBlock::build(cfg, in_channels, store, &mut names, rng)?;
        let mut c = cfg.channels(BASE_INPUT)?;
        let mut block1 = Vec::new();
        for _ in 0..cfg.block1_repeats {
            block1.push(ConvBlock::build(cfg, Stage::I, c, store, &mut names, rng)?);
            c = cfg.channels(BASE_BLOCK_I)?;
        }
        let mut block2 = Vec::new();
        for _ in 0..cfg.block2_repeats {
            block2.push(ConvBlock::build(cfg, Stage::II, c, store, &mut names, rng)?);
            c = cfg.channels(BASE_BLOCK_II)?;
        }
        let mut pfs = Vec::new();
        for _ in 0..cfg.pfs_repeats {
            pfs.push(PfsBlock::build(cfg, c, store, &mut names, rng)?);
            c = cfg.channels(BASE_PFS)?;
        }
        Ok(Self {
            input,
            block1,
            block2,
            pfs,
        })
    }

    /// `(stage, channels, (h, w))` after the input block, each stage and the fork, derived
    /// from the layer specs alone.
    pub fn shape_trace(&self, in_channels: usize, input_hw: (usize, usize)) -> Result<Vec<(&'static str, usize, (usize, usize))>> {
        fn through(spec: &ConvSpec, (c, hw): (usize, (usize, usize))) -> Result<(usize, (usize, usize))> {
            if c != spec.in_channels {
                return Err(Error::config(format!("layer expects {} channels, trace has {c}", spec.in_channels)));
            }
            Ok((spec.out_channels, spec.output_hw(hw.0, hw.1)?))
        }
        let mut s = through(&self.input.conv.spec, (in_channels, input_hw))?;
        let mut out = vec![("input", s.0, s.1)];
        for (name, blocks) in [("block1", &self.block1), ("block2", &self.block2)] {
            for b in blocks.iter() {
                s = through(&b.reduce.spec, s)?;
                s = through(&b.depthwise.spec, s)?;
                if let Some(p) = &b.project {
                    s = through(&p.spec, s)?;
                }
            }
            out.push((name, s.0, s.1));
        }
        for p in &self.pfs {
            s = through(&p.reduce.spec, s)?;
            let forks = p.forks.iter().map(|f| through(f, s)).collect::<Result<Vec<_>>>()?;
            if forks.iter().any(|f| *f != forks[0]) {
                return Err(Error::config("fork outputs disagree in shape"));
            }
            s = forks[0];
            if p.combine == PfsCombine::Concat {
                s.0 *= forks.len();
            }
            s = through(&p.expand.spec, s)?;
        }
        if !self.pfs.is_empty() {
            out.push(("pfs", s.0, s.1));
        }
        Ok(out)
    }

    pub fn stage_forward<'a, T: Scalar>(
        blocks: &[ConvBlock],
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        mut x: Var,
        training: bool,
    ) -> Result<Var> {
        for b in blocks {
            x = b.forward(g, store, x, training)?;
        }
        Ok(x)
    }

    pub fn pfs_forward<'a, T: Scalar>(
        &self,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        mut x: Var,
        training: bool,
    ) -> Result<Var> {
        for b in &self.pfs {
            x = b.forward(g, store, x, training)?;
        }
        Ok(x)
    }
}
