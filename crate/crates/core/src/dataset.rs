//! Rendering of world trajectories to grayscale frames, dataset assembly and
//! the on-disk dataset format.
//!
//! On disk a dataset is a directory:
//!
//! ```text
//! manifest.json            kind, generator parameters, split sizes, T, resolution, seed, ...
//! <split>/frames.bin       b"O2VD" ++ [1u8] ++ u8 pixels, layout [num_seq][T][res][res]
//! <split>/events.json      [[event frame indices], ...] one array per sequence
//! <split>/meta.json        per-sequence generating parameters
//! ```
//!
//! for `<split>` in `train`, `val`, `test`. Pixels are quantized with
//! `round(255 * v)` and loaded back as `byte / 255`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DatasetError, SimError};
use crate::sim::{
    self, BallWorldConfig, PendulumConfig, PendulumParams, ProjectileConfig, ProjectileParams, Vec2, WorldTrajectory,
};

pub const FORMAT_VERSION: u32 = 1;
pub const FRAMES_MAGIC: &[u8; 4] = b"O2VD";
pub const DEFAULT_RESOLUTION: usize = 32;
pub const SUPERSAMPLING: usize = 4;
pub const RENDERING: &str = "coverage_4x4";
pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

/// One grayscale frame, row-major with row 0 at the top of the box.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub resolution: usize,
    pub pixels: Vec<f32>,
}

impl Frame {
    pub fn zeros(resolution: usize) -> Self {
        Self { resolution, pixels: vec![0.0; resolution * resolution] }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.resolution + col]
    }
}

/// Rasterizes filled disks by 4x4 supersampled area coverage.
pub fn rasterize(centers: &[Vec2], radii: &[f64], box_side: f64, resolution: usize) -> Frame {
    let mut frame = Frame::zeros(resolution);
    if centers.is_empty() {
        return frame;
    }
    let pitch = box_side / resolution as f64;
    let sub = SUPERSAMPLING;
    let weight = 1.0 / (sub * sub) as f32;
    for row in 0..resolution {
        for col in 0..resolution {
            let mut covered = 0usize;
            for sy in 0..sub {
                // Row 0 is the top of the box.
                let y = box_side - (row as f64 + (sy as f64 + 0.5) / sub as f64) * pitch;
                for sx in 0..sub {
                    let x = (col as f64 + (sx as f64 + 0.5) / sub as f64) * pitch;
                    let inside = centers.iter().zip(radii).any(|(c, &r)| {
                        let dx = x - c[0];
                        let dy = y - c[1];
                        dx * dx + dy * dy <= r * r
                    });
                    covered += inside as usize;
                }
            }
            frame.pixels[row * resolution + col] = (covered as f32 * weight).min(1.0);
        }
    }
    frame
}

/// Generator family and its physical parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetKind {
    Bouncing(BallWorldConfig),
    Pendulum(PendulumConfig),
    Projectile(ProjectileConfig),
}

impl DatasetKind {
    /// Short name used in file names, e.g. `bouncing2`.
    pub fn name(&self) -> String {
        match self {
            DatasetKind::Bouncing(c) => format!("bouncing{}", c.n_balls),
            DatasetKind::Pendulum(_) => "pendulum".into(),
            DatasetKind::Projectile(_) => "projectile".into(),
        }
    }

    pub fn seq_len(&self) -> usize {
        match self {
            DatasetKind::Bouncing(c) => c.seq_len,
            DatasetKind::Pendulum(c) => c.seq_len,
            DatasetKind::Projectile(c) => c.seq_len,
        }
    }

    pub fn box_side(&self) -> f64 {
        match self {
            DatasetKind::Bouncing(c) => c.box_side,
            DatasetKind::Pendulum(c) => c.box_side,
            DatasetKind::Projectile(c) => c.box_side,
        }
    }

    pub fn frame_dt(&self) -> f64 {
        match self {
            DatasetKind::Bouncing(c) => c.frame_dt,
            DatasetKind::Pendulum(c) => c.frame_dt,
            DatasetKind::Projectile(c) => c.frame_dt,
        }
    }

    /// Latent dimension used for this family when none is given.
    pub fn default_latent_dim(&self) -> usize {
        match self {
            DatasetKind::Bouncing(c) => match c.n_balls {
                1 => 3,
                2 => 5,
                _ => 8,
            },
            DatasetKind::Pendulum(_) => 2,
            DatasetKind::Projectile(_) => 9,
        }
    }
}

/// Parameters that generated one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceMeta {
    Bouncing { seed: u64, centers: Vec<Vec2>, velocities: Vec<Vec2> },
    Pendulum { seed: u64, params: PendulumParams },
    Projectile { seed: u64, params: ProjectileParams },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    pub events: Vec<usize>,
    pub meta: Option<SequenceMeta>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self { train: 10_000, val: 500, test: 500 }
    }
}

impl SplitCounts {
    pub fn as_array(&self) -> [usize; 3] {
        [self.train, self.val, self.test]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    pub name: String,
    pub splits: SplitCounts,
    pub seq_len: usize,
    pub resolution: usize,
    pub base_seed: u64,
    pub frame_dt: f64,
    pub rendering: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub manifest: DatasetManifest,
    pub train: Vec<Sequence>,
    pub val: Vec<Sequence>,
    pub test: Vec<Sequence>,
}

impl DatasetBundle {
    pub fn split(&self, name: &str) -> Option<&[Sequence]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    fn splits(&self) -> [&[Sequence]; 3] {
        [&self.train, &self.val, &self.test]
    }
}

/// Simulates and renders the sequence with the given seed.
pub fn generate_sequence(kind: &DatasetKind, seed: u64, resolution: usize) -> Result<Sequence, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (traj, meta): (WorldTrajectory, SequenceMeta) = match kind {
        DatasetKind::Bouncing(cfg) => {
            let (centers, velocities) = sim::sample_ball_initial_state(cfg, &mut rng)?;
            let traj = sim::simulate_balls_from(cfg, centers.clone(), velocities.clone())?;
            (traj, SequenceMeta::Bouncing { seed, centers, velocities })
        }
        DatasetKind::Pendulum(cfg) => {
            let (traj, params) = sim::simulate_pendulum(cfg, &mut rng)?;
            (traj, SequenceMeta::Pendulum { seed, params })
        }
        DatasetKind::Projectile(cfg) => {
            let (traj, params) = sim::simulate_projectile(cfg, &mut rng)?;
            (traj, SequenceMeta::Projectile { seed, params })
        }
    };
    let box_side = kind.box_side();
    let frames = traj
        .centers
        .iter()
        .map(|c| rasterize(c, &traj.radii, box_side, resolution))
        .collect();
    Ok(Sequence { frames, events: traj.events, meta: Some(meta) })
}

/// Builds all three splits. Sequence `i` of the concatenated train/val/test
/// order uses seed `base_seed + i`, so splits draw from disjoint seed ranges.
pub fn build_dataset(
    kind: DatasetKind,
    counts: SplitCounts,
    base_seed: u64,
    resolution: usize,
) -> Result<DatasetBundle, DatasetError> {
    if counts.train == 0 || counts.val == 0 || counts.test == 0 {
        return Err(DatasetError::Invalid("split counts must be positive".into()));
    }
    if resolution < 8 {
        return Err(DatasetError::Invalid("resolution must be at least 8".into()));
    }
    let mut offset = 0u64;
    let mut splits: Vec<Vec<Sequence>> = Vec::with_capacity(3);
    for (name, n) in SPLIT_NAMES.iter().zip(counts.as_array()) {
        let mut seqs = Vec::with_capacity(n);
        for i in 0..n {
            let seed = base_seed.wrapping_add(offset + i as u64);
            let seq = generate_sequence(&kind, seed, resolution).map_err(|source| DatasetError::Simulation {
                split: name.to_string(),
                index: i,
                source,
            })?;
            seqs.push(seq);
        }
        offset += n as u64;
        splits.push(seqs);
    }
    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        name: kind.name(),
        seq_len: kind.seq_len(),
        frame_dt: kind.frame_dt(),
        kind,
        splits: counts,
        resolution,
        base_seed,
        rendering: RENDERING.into(),
    };
    Ok(DatasetBundle { manifest, train, val, test })
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    let manifest = serde_json::to_string_pretty(&bundle.manifest)?;
    fs::write(dir.join("manifest.json"), manifest)?;
    let res = bundle.manifest.resolution;
    for (name, seqs) in SPLIT_NAMES.iter().zip(bundle.splits()) {
        let split_dir = dir.join(name);
        fs::create_dir_all(&split_dir)?;
        let mut bytes = Vec::with_capacity(5 + seqs.len() * bundle.manifest.seq_len * res * res);
        bytes.extend_from_slice(FRAMES_MAGIC);
        bytes.push(FORMAT_VERSION as u8);
        for seq in seqs {
            for frame in &seq.frames {
                bytes.extend(frame.pixels.iter().map(|&p| quantize(p)));
            }
        }
        let mut f = fs::File::create(split_dir.join("frames.bin"))?;
        f.write_all(&bytes)?;
        let events: Vec<&Vec<usize>> = seqs.iter().map(|s| &s.events).collect();
        fs::write(split_dir.join("events.json"), serde_json::to_string(&events)?)?;
        let meta: Vec<&Option<SequenceMeta>> = seqs.iter().map(|s| &s.meta).collect();
        fs::write(split_dir.join("meta.json"), serde_json::to_string(&meta)?)?;
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let version = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    Ok(serde_json::from_value(value)?)
}

pub fn read_dataset(dir: &Path) -> Result<DatasetBundle, DatasetError> {
    let manifest = read_manifest(dir)?;
    let mut splits = Vec::with_capacity(3);
    for (name, n) in SPLIT_NAMES.iter().zip(manifest.splits.as_array()) {
        splits.push(read_split(&dir.join(name), n, manifest.seq_len, manifest.resolution)?);
    }
    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(DatasetBundle { manifest, train, val, test })
}

fn read_split(dir: &Path, n: usize, seq_len: usize, res: usize) -> Result<Vec<Sequence>, DatasetError> {
    let frames_path: PathBuf = dir.join("frames.bin");
    let bytes = fs::read(&frames_path)?;
    if bytes.len() < 5 || &bytes[..4] != FRAMES_MAGIC {
        return Err(DatasetError::UnrecognizedFormat(frames_path));
    }
    if bytes[4] as u32 != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch { found: bytes[4] as u32, expected: FORMAT_VERSION });
    }
    let payload = &bytes[5..];
    let frame_len = res * res;
    let expected = n * seq_len * frame_len;
    if payload.len() != expected {
        let per_seq = n * frame_len;
        if per_seq > 0 && payload.len() % per_seq == 0 {
            return Err(DatasetError::ShapeMismatch {
                path: frames_path,
                detail: format!(
                    "manifest declares T={} but the tensor holds T={} frames per sequence",
                    seq_len,
                    payload.len() / per_seq
                ),
            });
        }
        if payload.len() < expected {
            return Err(DatasetError::Truncated {
                path: frames_path,
                expected: (expected + 5) as u64,
                found: bytes.len() as u64,
            });
        }
        return Err(DatasetError::ShapeMismatch {
            path: frames_path,
            detail: format!("{} trailing bytes", payload.len() - expected),
        });
    }

    let events_path = dir.join("events.json");
    let events: Vec<Vec<usize>> = serde_json::from_str(&fs::read_to_string(&events_path)?)?;
    if events.len() != n {
        return Err(DatasetError::ShapeMismatch {
            path: events_path,
            detail: format!("{} event lists for {} sequences", events.len(), n),
        });
    }
    if let Some(bad) = events.iter().flatten().find(|&&e| e >= seq_len) {
        return Err(DatasetError::ShapeMismatch {
            path: events_path,
            detail: format!("event index {bad} outside 0..{seq_len}"),
        });
    }
    let meta_path = dir.join("meta.json");
    let meta: Vec<Option<SequenceMeta>> = if meta_path.exists() {
        let m: Vec<Option<SequenceMeta>> = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
        if m.len() != n {
            return Err(DatasetError::ShapeMismatch {
                path: meta_path,
                detail: format!("{} meta records for {} sequences", m.len(), n),
            });
        }
        m
    } else {
        vec![None; n]
    };

    let seqs = events
        .into_iter()
        .zip(meta)
        .enumerate()
        .map(|(i, (events, meta))| {
            let frames = (0..seq_len)
                .map(|t| {
                    let start = (i * seq_len + t) * frame_len;
                    Frame {
                        resolution: res,
                        pixels: payload[start..start + frame_len].iter().map(|&b| b as f32 / 255.0).collect(),
                    }
                })
                .collect();
            Sequence { frames, events, meta }
        })
        .collect();
    Ok(seqs)
}
