use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bev::{obb_corners, obb_to_aabb, rasterize_bev, upsample_bev, BevConfig, OrientedBox, PointCloud};
use crate::error::{Error, Result};
use crate::head::AxisBox;
use crate::nn::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OcclusionMode {
    None,
    /// Some vehicles are missing from the radar image but present in the Lidar scan.
    RadarBlind,
    /// Some vehicles are missing from the Lidar scan but present in the radar image.
    LidarBlind,
}

impl std::fmt::Display for OcclusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::RadarBlind => "radar_blind",
            Self::LidarBlind => "lidar_blind",
        })
    }
}

impl std::str::FromStr for OcclusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "radar_blind" => Ok(Self::RadarBlind),
            "lidar_blind" => Ok(Self::LidarBlind),
            _ => Err(Error::Config(format!("unknown occlusion mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorNoiseConfig {
    pub radar_speckle_sigma: f64,
    /// Fractional radar attenuation at the image corner relative to the center.
    pub radar_ring_gain: f64,
    pub lidar_dropout_p: f64,
    /// Probability that a 16×16 patch spawns a clutter blob (radar) or point cluster (Lidar).
    pub background_clutter_rate: f64,
}

impl Default for SensorNoiseConfig {
    fn default() -> Self {
        Self {
            radar_speckle_sigma: 0.05,
            radar_ring_gain: 0.3,
            lidar_dropout_p: 0.3,
            background_clutter_rate: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub image_hw: (usize, usize),
    pub n_vehicles: usize,
    /// Side length range in pixels.
    pub size_range: (f64, f64),
    pub seed: u64,
    pub occlusion_mode: OcclusionMode,
    /// Expected share of vehicles hidden from the occluded sensor.
    pub occlusion_fraction: f64,
    /// Largest absolute vehicle rotation in degrees; 0 keeps boxes axis-aligned.
    pub max_rotation: f64,
    pub noise: SensorNoiseConfig,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            image_hw: (192, 192),
            n_vehicles: 4,
            size_range: (24.0, 56.0),
            seed: 0,
            occlusion_mode: OcclusionMode::None,
            occlusion_fraction: 0.5,
            max_rotation: 0.0,
            noise: SensorNoiseConfig::default(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        let probs = [n.lidar_dropout_p, n.background_clutter_rate, self.occlusion_fraction, n.radar_ring_gain];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config("probabilities and gains must lie in [0, 1]"));
        }
        if !(n.radar_speckle_sigma >= 0.0) {
            return Err(Error::config("speckle sigma must be non-negative"));
        }
        let (lo, hi) = self.size_range;
        let (h, w) = self.image_hw;
        if !(lo > 0.0 && lo <= hi) || hi >= h.min(w) as f64 {
            return Err(Error::config(format!("bad size range {:?}", self.size_range)));
        }
        if h % 2 != 0 || w != h {
            return Err(Error::config("scenes must be square with an even side"));
        }
        Ok(())
    }

    /// Sets one field by key; `image_size` sets both sides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        let n = &mut self.noise;
        match key {
            "image_size" => {
                let s = parse(key, value)?;
                self.image_hw = (s, s);
            }
            "n_vehicles" => self.n_vehicles = parse(key, value)?,
            "size_min" => self.size_range.0 = parse(key, value)?,
            "size_max" => self.size_range.1 = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "occlusion_mode" => self.occlusion_mode = value.parse()?,
            "occlusion_fraction" => self.occlusion_fraction = parse(key, value)?,
            "max_rotation" => self.max_rotation = parse(key, value)?,
            "radar_speckle_sigma" => n.radar_speckle_sigma = parse(key, value)?,
            "radar_ring_gain" => n.radar_ring_gain = parse(key, value)?,
            "lidar_dropout_p" => n.lidar_dropout_p = parse(key, value)?,
            "background_clutter_rate" => n.background_clutter_rate = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown scene key {other:?}"))),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let n = &self.noise;
        [
            ("image_size", self.image_hw.0.to_string()),
            ("n_vehicles", self.n_vehicles.to_string()),
            ("size_min", self.size_range.0.to_string()),
            ("size_max", self.size_range.1.to_string()),
            ("seed", self.seed.to_string()),
            ("occlusion_mode", self.occlusion_mode.to_string()),
            ("occlusion_fraction", self.occlusion_fraction.to_string()),
            ("max_rotation", self.max_rotation.to_string()),
            ("radar_speckle_sigma", n.radar_speckle_sigma.to_string()),
            ("radar_ring_gain", n.radar_ring_gain.to_string()),
            ("lidar_dropout_p", n.lidar_dropout_p.to_string()),
            ("background_clutter_rate", n.background_clutter_rate.to_string()),
        ]
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
    }

    /// Lidar grid that upsamples to exactly `image_hw`, covering the standard 100 m extent.
    pub fn bev_config(&self) -> BevConfig {
        let cells = self.image_hw.0 / 2;
        let paper = BevConfig::paper();
        BevConfig {
            cells,
            meters_per_cell: paper.meters_per_cell * paper.cells as f64 / cells as f64,
            ..paper
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenePair {
    /// `3×H×W` radar image, gray replicated.
    pub radar: Tensor<f32>,
    /// `3×H×W` upsampled Lidar BEV.
    pub lidar: Tensor<f32>,
    pub cloud: PointCloud,
    pub vehicles: Vec<OrientedBox>,
    pub gts: Vec<AxisBox>,
    pub hidden_radar: Vec<usize>,
    pub hidden_lidar: Vec<usize>,
}

/// Per-scene RNG seed; independent of generation order.
pub fn scene_seed(base: u64, scene_id: u64) -> u64 {
    let mut z = base ^ scene_id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const PLACEMENT_RETRIES: usize = 200;
const RADAR_BACKGROUND: f64 = 0.08;
const RADAR_TARGET: f64 = 0.8;

fn place_vehicles(spec: &SceneSpec, rng: &mut impl Rng) -> Result<Vec<(OrientedBox, AxisBox)>> {
    let (h, w) = (spec.image_hw.0 as f64, spec.image_hw.1 as f64);
    let mut out: Vec<(OrientedBox, AxisBox)> = Vec::new();
    for v in 0..spec.n_vehicles {
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let bw = rng.gen_range(spec.size_range.0..=spec.size_range.1);
            let bh = rng.gen_range(spec.size_range.0..=spec.size_range.1);
            let angle = if spec.max_rotation > 0.0 {
                rng.gen_range(-spec.max_rotation..=spec.max_rotation)
            } else {
                0.0
            };
            let cx = rng.gen_range(0.0..w);
            let cy = rng.gen_range(0.0..h);
            let obb = OrientedBox { cx, cy, w: bw, h: bh, angle };
            let aabb = obb_to_aabb(&obb);
            let inside = aabb.x1 >= 1.0 && aabb.y1 >= 1.0 && aabb.x2 <= w - 1.0 && aabb.y2 <= h - 1.0;
            if inside && out.iter().all(|(_, o)| o.intersection(&aabb) == 0.0) {
                out.push((obb, aabb));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place vehicle {} of {} after {PLACEMENT_RETRIES} attempts",
                v + 1,
                spec.n_vehicles
            )));
        }
    }
    Ok(out)
}

fn inside_obb(b: &OrientedBox, x: f64, y: f64) -> bool {
    let (s, c) = b.angle.to_radians().sin_cos();
    let (dx, dy) = (x - b.cx, y - b.cy);
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    u.abs() <= b.w / 2.0 && v.abs() <= b.h / 2.0
}

/// Picks `round_stochastic(fraction · n)` distinct indices.
fn hidden_subset(n: usize, fraction: f64, rng: &mut impl Rng) -> Vec<usize> {
    let expected = fraction * n as f64;
    let mut k = expected.floor() as usize;
    if rng.gen::<f64>() < expected - k as f64 {
        k += 1;
    }
    let mut picked = sample(rng, n, k.min(n)).into_vec();
    picked.sort_unstable();
    picked
}

fn render_radar(
    spec: &SceneSpec,
    vehicles: &[OrientedBox],
    hidden: &[usize],
    rng: &mut impl Rng,
) -> Tensor<f32> {
    let (h, w) = spec.image_hw;
    let n = &spec.noise;
    let speckle = Normal::new(0.0, n.radar_speckle_sigma.max(1e-12)).expect("sigma");
    let mut plane = vec![RADAR_BACKGROUND; h * w];
    // clutter blobs: bright, small, unlabelled
    for py in (0..h).step_by(16) {
        for px in (0..w).step_by(16) {
            if rng.gen::<f64>() < n.background_clutter_rate {
                let (bw, bh) = (rng.gen_range(3..9), rng.gen_range(3..9));
                let (x0, y0) = (px + rng.gen_range(0..16usize), py + rng.gen_range(0..16usize));
                let level = rng.gen_range(0.4..0.9);
                for y in y0..(y0 + bh).min(h) {
                    for x in x0..(x0 + bw).min(w) {
                        plane[y * w + x] = level;
                    }
                }
            }
        }
    }
    for (i, v) in vehicles.iter().enumerate() {
        if hidden.contains(&i) {
            continue;
        }
        let bb = obb_to_aabb(v);
        for y in bb.y1.floor().max(0.0) as usize..(bb.y2.ceil() as usize).min(h) {
            for x in bb.x1.floor().max(0.0) as usize..(bb.x2.ceil() as usize).min(w) {
                if inside_obb(v, x as f64 + 0.5, y as f64 + 0.5) {
                    plane[y * w + x] = RADAR_TARGET;
                }
            }
        }
    }
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    let r_max = (cx * cx + cy * cy).sqrt();
    for y in 0..h {
        for x in 0..w {
            let r = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
            let gain = 1.0 - n.radar_ring_gain * r / r_max;
            let v = &mut plane[y * w + x];
            *v = (*v * gain + speckle.sample(rng)).clamp(0.0, 1.0);
        }
    }
    let mut data = Vec::with_capacity(3 * h * w);
    for _ in 0..3 {
        data.extend(plane.iter().map(|&v| v as f32));
    }
    Tensor::new(vec![3, h, w], data).expect("radar shape")
}

fn lidar_cloud(
    spec: &SceneSpec,
    bev: &BevConfig,
    vehicles: &[OrientedBox],
    hidden: &[usize],
    rng: &mut impl Rng,
) -> PointCloud {
    let n = &spec.noise;
    let (h, w) = spec.image_hw;
    // pixel → meters: column 2c..2c+2 is grid cell c
    let half = (bev.cells / 2) as f64;
    let to_m = |p: f64| (p / 2.0 - half) * bev.meters_per_cell;
    let mut points: Vec<[f32; 4]> = Vec::new();
    for (i, v) in vehicles.iter().enumerate() {
        if hidden.contains(&i) {
            continue;
        }
        let corners = obb_corners(v);
        let height = rng.gen_range(0.8..2.0);
        let reflect = rng.gen_range(60.0..220.0);
        for k in 0..4 {
            let (a, b) = (corners[k], corners[(k + 1) % 4]);
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            let steps = (len * 2.0).ceil() as usize;
            for s in 0..steps {
                if rng.gen::<f64>() < n.lidar_dropout_p {
                    continue;
                }
                let t = s as f64 / steps as f64;
                let px = a.0 + t * (b.0 - a.0);
                let py = a.1 + t * (b.1 - a.1);
                let z = rng.gen_range(-0.5..height);
                points.push([to_m(px) as f32, to_m(py) as f32, z as f32, reflect as f32]);
            }
        }
    }
    for py in (0..h).step_by(16) {
        for px in (0..w).step_by(16) {
            if rng.gen::<f64>() < n.background_clutter_rate {
                let (x0, y0) = (px as f64 + rng.gen_range(0.0..16.0), py as f64 + rng.gen_range(0.0..16.0));
                for _ in 0..rng.gen_range(2..8) {
                    let x = x0 + rng.gen_range(-3.0..3.0);
                    let y = y0 + rng.gen_range(-3.0..3.0);
                    let z = rng.gen_range(-1.5..3.0);
                    let i = rng.gen_range(5.0..120.0);
                    points.push([to_m(x) as f32, to_m(y) as f32, z as f32, i as f32]);
                }
            }
        }
    }
    // sparse ground returns
    for _ in 0..(h * w) / 64 {
        let x = rng.gen_range(0.0..w as f64);
        let y = rng.gen_range(0.0..h as f64);
        points.push([to_m(x) as f32, to_m(y) as f32, rng.gen_range(-2.0..-1.6) as f32, rng.gen_range(0.0..20.0) as f32]);
    }
    PointCloud { points }
}

/// Renders a paired radar image and Lidar BEV with ground truth. Output depends only on `spec`.
pub fn render_scene_pair(spec: &SceneSpec) -> Result<ScenePair> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let placed = place_vehicles(spec, &mut rng)?;
    let vehicles: Vec<OrientedBox> = placed.iter().map(|p| p.0).collect();
    let gts: Vec<AxisBox> = placed.iter().map(|p| p.1).collect();
    let hidden = hidden_subset(vehicles.len(), spec.occlusion_fraction, &mut rng);
    let (hidden_radar, hidden_lidar) = match spec.occlusion_mode {
        OcclusionMode::None => (vec![], vec![]),
        OcclusionMode::RadarBlind => (hidden, vec![]),
        OcclusionMode::LidarBlind => (vec![], hidden),
    };
    let radar = render_radar(spec, &vehicles, &hidden_radar, &mut rng);
    let bev = spec.bev_config();
    let cloud = lidar_cloud(spec, &bev, &vehicles, &hidden_lidar, &mut rng);
    let lidar = upsample_bev(&rasterize_bev(&cloud, &bev))?.grid;
    Ok(ScenePair {
        radar,
        lidar,
        cloud,
        vehicles,
        gts,
        hidden_radar,
        hidden_lidar,
    })
}

/// Mean of channel 0 inside a box (pixel centers).
pub fn mean_in_box(img: &Tensor<f32>, b: &AxisBox) -> f64 {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if b.contains_point(x as f64 + 0.5, y as f64 + 0.5) {
                sum += img.data()[y * w + x] as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
