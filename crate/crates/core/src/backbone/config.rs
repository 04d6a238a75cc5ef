use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// Radar and Lidar stacked channel-wise into one branch.
    Early,
    /// Two branches exchanging features through attention gates.
    Mid,
    /// Two independent branches joined after the fork.
    Late,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PfsCombine {
    Average,
    Concat,
}

/// Where an attention gate sits in the primary branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum GateStage {
    AfterBlockI,
    AfterBlockII,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    RpnOnly,
}

/// Rational channel multiplier, e.g. `1/4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WidthMult {
    pub num: usize,
    pub den: usize,
}

impl WidthMult {
    pub const ONE: WidthMult = WidthMult { num: 1, den: 1 };

    pub fn new(num: usize, den: usize) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::config("width multiplier must be positive"));
        }
        Ok(Self { num, den })
    }

    pub fn apply(&self, base: usize) -> Result<usize> {
        let scaled = base * self.num;
        if scaled % self.den != 0 {
            return Err(Error::config(format!(
                "width {self} does not scale {base} channels to an integer"
            )));
        }
        Ok(scaled / self.den)
    }
}

impl fmt::Display for WidthMult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for WidthMult {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("bad width multiplier {s:?}")))
        };
        match s.split_once('/') {
            Some((n, d)) => WidthMult::new(parse(n)?, parse(d)?),
            None => WidthMult::new(parse(s)?, 1),
        }
    }
}

macro_rules! keyword_enum {
    ($t:ty { $($v:ident => $s:literal),+ $(,)? }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),+ })
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($s => Ok(Self::$v),)+
                    other => Err(Error::config(format!(
                        concat!("unknown ", stringify!($t), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

keyword_enum!(FusionMode { Early => "early", Mid => "mid", Late => "late" });
keyword_enum!(PfsCombine { Average => "average", Concat => "concat" });
keyword_enum!(HeadKind { RpnOnly => "rpn_only" });
keyword_enum!(GateStage { AfterBlockI => "1", AfterBlockII => "2" });

/// Channel widths of the base (unscaled) architecture.
pub const BASE_INPUT: usize = 64;
pub const BASE_BLOCK_I: usize = 256;
pub const BASE_BLOCK_II: usize = 512;
pub const BASE_PFS: usize = 1024;
pub const BASE_HEAD: usize = 256;

/// Full architecture description.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_hw: (usize, usize),
    /// Channels per modality image.
    pub in_channels: usize,
    pub patch: usize,
    pub width_mult: WidthMult,
    pub dw_kernel: usize,
    pub dilations: Vec<usize>,
    pub block1_repeats: usize,
    pub block2_repeats: usize,
    pub pfs_repeats: usize,
    pub fusion_mode: FusionMode,
    pub radar_only: bool,
    /// Gate bottleneck width; `None` means half the gated feature width.
    pub attention_mid_channels: Option<usize>,
    pub gates: Vec<GateStage>,
    pub pfs_combine: PfsCombine,
    /// Unscaled width of the fused projection feeding the head.
    pub head_channels: usize,
    pub anchor_scales: Vec<f64>,
    pub anchor_ratios: Vec<f64>,
    pub head: HeadKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ModelConfig {
    /// Full-size layer schedule at 1152×1152.
    pub fn paper() -> Self {
        Self {
            input_hw: (1152, 1152),
            in_channels: 3,
            patch: 16,
            width_mult: WidthMult::ONE,
            dw_kernel: 11,
            dilations: vec![2, 4, 8],
            block1_repeats: 3,
            block2_repeats: 4,
            pfs_repeats: 5,
            fusion_mode: FusionMode::Mid,
            radar_only: false,
            attention_mid_channels: None,
            gates: vec![GateStage::AfterBlockI, GateStage::AfterBlockII],
            pfs_combine: PfsCombine::Average,
            head_channels: BASE_HEAD,
            anchor_scales: vec![32.0, 64.0, 128.0],
            anchor_ratios: vec![0.5, 1.0, 2.0],
            head: HeadKind::RpnOnly,
        }
    }

    /// CPU-sized preset: 192×192 inputs at quarter width, same depth.
    pub fn desk() -> Self {
        Self {
            input_hw: (192, 192),
            width_mult: WidthMult { num: 1, den: 4 },
            ..Self::paper()
        }
    }

    pub fn channels(&self, base: usize) -> Result<usize> {
        self.width_mult.apply(base)
    }

    pub fn feature_hw(&self) -> (usize, usize) {
        (self.input_hw.0 / self.patch, self.input_hw.1 / self.patch)
    }

    pub fn is_dual(&self) -> bool {
        !self.radar_only
    }

    /// Channels entering the primary branch's input block.
    pub fn primary_in_channels(&self) -> usize {
        if self.fusion_mode == FusionMode::Early && !self.radar_only {
            2 * self.in_channels
        } else {
            self.in_channels
        }
    }

    /// Number of feature branches actually built.
    pub fn branch_count(&self) -> usize {
        if self.radar_only || self.fusion_mode == FusionMode::Early {
            1
        } else {
            2
        }
    }

    pub fn uses_gates(&self) -> bool {
        !self.radar_only && self.fusion_mode == FusionMode::Mid && !self.gates.is_empty()
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.anchor_scales.len() * self.anchor_ratios.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_hw;
        if self.patch == 0 || h % self.patch != 0 || w % self.patch != 0 {
            return Err(Error::config(format!(
                "input {h}×{w} is not divisible by patch {}",
                self.patch
            )));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::config("dilations must be nonempty and ≥ 1"));
        }
        if self.dw_kernel == 0 || self.dw_kernel % 2 == 0 {
            return Err(Error::config("depth-wise kernel must be odd"));
        }
        if self.in_channels == 0 {
            return Err(Error::config("in_channels must be positive"));
        }
        if self.pfs_repeats == 0 {
            return Err(Error::config("at least one fork repeat is required"));
        }
        if self.anchor_scales.is_empty() || self.anchor_ratios.is_empty() {
            return Err(Error::config("anchor scales and ratios must be nonempty"));
        }
        for base in [BASE_INPUT, BASE_BLOCK_I, BASE_BLOCK_II, BASE_PFS, self.head_channels] {
            self.channels(base)?;
        }
        if let Some(f) = self.attention_mid_channels {
            if f == 0 {
                return Err(Error::config("attention_mid_channels must be positive"));
            }
        }
        Ok(())
    }

    /// Flat `key = value` text, one entry per line.
    pub fn to_kv(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
        let flist = |v: &[f64]| v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
        let gates = self.gates.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        for (k, v) in [
            ("input_h", self.input_hw.0.to_string()),
            ("input_w", self.input_hw.1.to_string()),
            ("in_channels", self.in_channels.to_string()),
            ("patch", self.patch.to_string()),
            ("width_mult", self.width_mult.to_string()),
            ("dw_kernel", self.dw_kernel.to_string()),
            ("dilations", list(&self.dilations)),
            ("block1_repeats", self.block1_repeats.to_string()),
            ("block2_repeats", self.block2_repeats.to_string()),
            ("pfs_repeats", self.pfs_repeats.to_string()),
            ("fusion_mode", self.fusion_mode.to_string()),
            ("radar_only", self.radar_only.to_string()),
            (
                "attention_mid_channels",
                self.attention_mid_channels
                    .map_or_else(|| "auto".to_string(), |v| v.to_string()),
            ),
            ("gates", gates),
            ("pfs_combine", self.pfs_combine.to_string()),
            ("head_channels", self.head_channels.to_string()),
            ("anchor_scales", flist(&self.anchor_scales)),
            ("anchor_ratios", flist(&self.anchor_ratios)),
            ("head", self.head.to_string()),
        ] {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Parses `key = value` lines over the paper defaults; unknown keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut cfg = Self::paper();
        cfg.apply_kv(&map)?;
        Ok(cfg)
    }

    /// Applies overrides; every key must be known.
    pub fn apply_kv(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in map {
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::config(format!("{key}: {v:?} is not a non-negative integer")))
        };
        let list = |v: &str| -> Result<Vec<usize>> {
            v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(s.trim())).collect()
        };
        let flist = |v: &str| -> Result<Vec<f64>> {
            v.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::config(format!("{key}: bad number {s:?}")))
                })
                .collect()
        };
        match key {
            "input_h" => self.input_hw.0 = num(value)?,
            "input_w" => self.input_hw.1 = num(value)?,
            "in_channels" => self.in_channels = num(value)?,
            "patch" => self.patch = num(value)?,
            "width_mult" => self.width_mult = value.parse()?,
            "dw_kernel" => self.dw_kernel = num(value)?,
            "dilations" => self.dilations = list(value)?,
            "block1_repeats" => self.block1_repeats = num(value)?,
            "block2_repeats" => self.block2_repeats = num(value)?,
            "pfs_repeats" => self.pfs_repeats = num(value)?,
            "fusion_mode" => self.fusion_mode = value.parse()?,
            "radar_only" => {
                self.radar_only = value
                    .parse()
                    .map_err(|_| Error::config(format!("radar_only: {value:?} is not a bool")))?
            }
            "attention_mid_channels" => {
                self.attention_mid_channels = if value == "auto" {
                    None
                } else {
                    Some(num(value)?)
                }
            }
            "gates" => {
                self.gates = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "pfs_combine" => self.pfs_combine = value.parse()?,
            "head_channels" => self.head_channels = num(value)?,
            "anchor_scales" => self.anchor_scales = flist(value)?,
            "anchor_ratios" => self.anchor_ratios = flist(value)?,
            "head" => self.head = value.parse()?,
            other => return Err(Error::config(format!("unknown model key {other:?}"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_widths() {
        let cfg = ModelConfig::paper();
        let widths: Vec<usize> = [BASE_INPUT, BASE_BLOCK_I, BASE_BLOCK_II, BASE_PFS]
            .iter()
            .map(|&b| cfg.channels(b).unwrap())
            .collect();
        assert_eq!(widths, [64, 256, 512, 1024]);
        assert_eq!(cfg.feature_hw(), (72, 72));
        let desk = ModelConfig::desk();
        assert_eq!(desk.channels(BASE_PFS).unwrap(), 256);
        assert_eq!(desk.feature_hw(), (12, 12));
    }

    #[test]
    fn kv_round_trip_and_unknown_key() {
        let mut cfg = ModelConfig::desk();
        cfg.fusion_mode = FusionMode::Late;
        cfg.gates = vec![GateStage::AfterBlockII];
        cfg.attention_mid_channels = Some(8);
        let back = ModelConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
        assert!(ModelConfig::from_kv("colour = red").is_err());
        assert!(ModelConfig::from_kv("input_h = 100").is_err());
        assert!(ModelConfig::from_kv("dilations = ").is_err());
    }

    #[test]
    fn width_must_scale_to_integers() {
        let mut cfg = ModelConfig::desk();
        cfg.width_mult = WidthMult::new(1, 3).unwrap();
        assert!(cfg.validate().is_err());
        assert_eq!("3/8".parse::<WidthMult>().unwrap(), WidthMult { num: 3, den: 8 });
    }
}
