//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `O2VC`, `u32` format version, `u32` manifest
//! length, manifest JSON, then per parameter a `u16` name length, the UTF-8
//! name, a `u64` element count and that many `f32` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CheckpointError;
use crate::scalar::Scalar;
use crate::vae::{ModelConfig, ParamTensor, VariationalModel};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"O2VC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub latent_dim: usize,
    pub amortized_len: usize,
    pub params: Vec<ParamEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

pub fn encode_checkpoint<T: Scalar>(model: &VariationalModel<T>) -> Vec<u8> {
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        latent_dim: model.config.latent_dim,
        amortized_len: model.config.amortized_len,
        params: model
            .params
            .iter()
            .map(|p| ParamEntry { name: p.name.clone(), shape: p.shape.clone() })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * model.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &model.params {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.data.len() as u64).to_le_bytes());
        for &x in &p.data {
            out.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Corrupt(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<VariationalModel<T>, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let len = r.u32("manifest length")? as usize;
    let manifest: CheckpointManifest = serde_json::from_slice(r.take(len, "manifest")?)
        .map_err(|e| CheckpointError::Corrupt(format!("manifest: {e}")))?;
    if manifest.format_version != version {
        return Err(CheckpointError::Corrupt("manifest version disagrees with header".into()));
    }
    let config = manifest.config.clone();
    config
        .validate()
        .map_err(|e| CheckpointError::Corrupt(format!("manifest config: {e}")))?;
    let expected = config.param_shapes();
    let listed: Vec<(String, Vec<usize>)> = manifest.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect();
    if listed != expected {
        return Err(CheckpointError::Corrupt("parameter table does not match the stored config".into()));
    }
    let mut params = Vec::with_capacity(expected.len());
    for (name, shape) in expected {
        let name_len = r.u16("name length")? as usize;
        let stored = r.take(name_len, "name")?;
        if stored != name.as_bytes() {
            return Err(CheckpointError::Corrupt(format!("expected parameter {name}")));
        }
        let count = r.u64("element count")?;
        let want: usize = shape.iter().product();
        if count != want as u64 {
            return Err(CheckpointError::Corrupt(format!("{name}: {count} elements, shape needs {want}")));
        }
        let raw = r.take(4 * want, "parameter data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        params.push(ParamTensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(VariationalModel { config, params })
}

pub fn save_checkpoint<T: Scalar>(model: &VariationalModel<T>, path: &Path) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, encode_checkpoint(model))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<VariationalModel<T>, CheckpointError> {
    decode_checkpoint(&fs::read(path)?)
}

/// Loads and checks that the stored architecture equals `expected`.
pub fn load_checkpoint_for<T: Scalar>(path: &Path, expected: &ModelConfig) -> Result<VariationalModel<T>, CheckpointError> {
    let model = load_checkpoint(path)?;
    check_architecture(&model.config, expected)?;
    Ok(model)
}

pub fn check_architecture(found: &ModelConfig, expected: &ModelConfig) -> Result<(), CheckpointError> {
    if found != expected {
        return Err(CheckpointError::Architecture(format!(
            "checkpoint has latent_dim {}, m {}, channels {:?}, hidden {}, resolution {}; run expects latent_dim {}, m {}, channels {:?}, hidden {}, resolution {}",
            found.latent_dim,
            found.amortized_len,
            found.channels,
            found.field_hidden,
            found.resolution,
            expected.latent_dim,
            expected.amortized_len,
            expected.channels,
            expected.field_hidden,
            expected.resolution
        )));
    }
    Ok(())
}
