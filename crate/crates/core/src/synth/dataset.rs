use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bev::{format_annotations, load_annotations, obb_to_aabb, save_pointcloud};
use crate::error::{Error, Result};
use crate::head::AxisBox;
use crate::nn::{checkpoint, Tensor};

use super::scene::{render_scene_pair, scene_seed, ScenePair, SceneSpec};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const ANNOTATION_FILE: &str = "annotations.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: u64,
    pub split: Split,
    pub seed: u64,
    /// Scene tensors, relative to the dataset root.
    pub tensors: PathBuf,
    /// Raw point cloud, relative to the dataset root.
    pub cloud: PathBuf,
}

impl ManifestEntry {
    pub fn name(&self) -> String {
        scene_name(self.id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// One training/evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub name: String,
    pub radar: Tensor<f32>,
    pub lidar: Tensor<f32>,
    pub gts: Vec<AxisBox>,
}

impl Sample {
    pub fn from_pair(name: impl Into<String>, pair: &ScenePair) -> Self {
        Self {
            name: name.into(),
            radar: pair.radar.clone(),
            lidar: pair.lidar.clone(),
            gts: pair.gts.clone(),
        }
    }
}

pub fn scene_name(id: u64) -> String {
    format!("scene_{id:04}")
}

fn id_hash(id: u64) -> [u8; 32] {
    Sha256::digest(id.to_string().as_bytes()).into()
}

/// Assigns the `round(0.8·n)` ids with the smallest hashes to training.
pub fn split_ids(ids: &[u64]) -> HashMap<u64, Split> {
    let mut order: Vec<u64> = ids.to_vec();
    order.sort_by_key(|&id| (id_hash(id), id));
    let n_train = (ids.len() * 4 + 2) / 5;
    order
        .into_iter()
        .enumerate()
        .map(|(rank, id)| (id, if rank < n_train { Split::Train } else { Split::Test }))
        .collect()
}

/// Renders scenes `0..n` from a template in memory; scene `i` uses `scene_seed(template.seed, i)`.
pub fn generate_samples(n_scenes: usize, template: &SceneSpec) -> Result<Vec<(u64, ScenePair)>> {
    (0..n_scenes as u64)
        .into_par_iter()
        .map(|id| {
            let spec = SceneSpec {
                seed: scene_seed(template.seed, id),
                ..template.clone()
            };
            render_scene_pair(&spec).map(|p| (id, p))
        })
        .collect()
}

/// Writes scene tensors, point clouds, annotations and the manifest under `out_dir`.
pub fn generate_dataset(n_scenes: usize, template: &SceneSpec, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let root = out_dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let scenes = generate_samples(n_scenes, template)?;
    let ids: Vec<u64> = scenes.iter().map(|s| s.0).collect();
    let splits = split_ids(&ids);
    let mut entries = Vec::new();
    let mut ann = String::new();
    for (id, pair) in &scenes {
        let name = scene_name(*id);
        let entry = ManifestEntry {
            id: *id,
            split: splits[id],
            seed: scene_seed(template.seed, *id),
            tensors: PathBuf::from(format!("{name}.ffck")),
            cloud: PathBuf::from(format!("{name}.bin")),
        };
        checkpoint::save(
            root.join(&entry.tensors),
            &[("radar".to_string(), pair.radar.clone()), ("lidar".to_string(), pair.lidar.clone())],
        )?;
        save_pointcloud(root.join(&entry.cloud), &pair.cloud)?;
        ann.push_str(&format_annotations(pair.vehicles.iter().map(|v| (name.as_str(), v))));
        entries.push(entry);
    }
    let ann_path = root.join(ANNOTATION_FILE);
    std::fs::write(&ann_path, ann).map_err(|e| Error::io(&ann_path, e))?;
    let manifest = Manifest { root, entries };
    let path = manifest.root.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

impl Manifest {
    /// `id split seed tensors cloud`, one scene per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# id split seed tensors cloud\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                e.id,
                e.split.as_str(),
                e.seed,
                e.tensors.display(),
                e.cloud.display()
            );
        }
        out
    }

    /// SHA-256 of the manifest text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                context: MANIFEST_FILE.into(),
                record: format!("line {}", n + 1),
                message: m.into(),
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad("expected `id split seed tensors cloud`"));
            }
            entries.push(ManifestEntry {
                id: f[0].parse().map_err(|_| bad("bad scene id"))?,
                split: match f[1] {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    _ => return Err(bad("split must be train or test")),
                },
                seed: f[2].parse().map_err(|_| bad("bad seed"))?,
                tensors: PathBuf::from(f[3]),
                cloud: PathBuf::from(f[4]),
            });
        }
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    /// Reads `manifest.txt` from a dataset directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text, dir)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Loads the scenes of one split (or all, for `None`) with their ground truth.
    pub fn load_samples(&self, split: Option<Split>) -> Result<Vec<Sample>> {
        let ann = load_annotations(self.root.join(ANNOTATION_FILE))?;
        let mut gts: HashMap<String, Vec<AxisBox>> = HashMap::new();
        for (frame, obb) in &ann {
            gts.entry(frame.clone()).or_default().push(obb_to_aabb(obb));
        }
        self.entries
            .iter()
            .filter(|e| split.map_or(true, |s| e.split == s))
            .map(|e| {
                let mut tensors: HashMap<String, Tensor<f32>> =
                    checkpoint::load(self.root.join(&e.tensors))?.into_iter().collect();
                let mut take = |k: &str| {
                    tensors.remove(k).ok_or_else(|| {
                        Error::Input(format!("{} lacks a {k} tensor", e.tensors.display()))
                    })
                };
                Ok(Sample {
                    name: e.name(),
                    radar: take("radar")?,
                    lidar: take("lidar")?,
                    gts: gts.get(&e.name()).cloned().unwrap_or_default(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_arithmetic() {
        let ids: Vec<u64> = (0..20).collect();
        let s = split_ids(&ids);
        assert_eq!(s.values().filter(|&&v| v == Split::Train).count(), 16);
        assert_eq!(split_ids(&(0..5).collect::<Vec<_>>()).values().filter(|&&v| v == Split::Test).count(), 1);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let template = SceneSpec { image_hw: (64, 64), size_range: (10.0, 16.0), n_vehicles: 2, seed: 5, ..Default::default() };
        let m = generate_dataset(5, &template, dir.path()).unwrap();
        let back = Manifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        let again = generate_dataset(5, &template, dir.path().join("again")).unwrap();
        assert_eq!(again.hash(), m.hash());
        let all = back.load_samples(None).unwrap();
        assert_eq!(all.len(), 5);
        assert!(all.iter().all(|s| s.gts.len() == 2 && s.radar.shape() == [3, 64, 64]));
        assert_eq!(back.load_samples(Some(Split::Train)).unwrap().len(), 4);
    }
}
