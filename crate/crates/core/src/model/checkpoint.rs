//! Checkpoint directory: `manifest.json` plus one raw little-endian f32
//! file per tensor for parameters and both Adam moments.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{OptimConfig, OptimizerState};
use super::params::{Layout, Model, ModelConfig};
use crate::error::{Error, IoContext, Result};
use crate::util::{sha256_hex, RngState};

pub const CHECKPOINT_VERSION: u32 = 1;
const GROUPS: [&str; 3] = ["params", "adam_m", "adam_v"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// sha256 of each group's file, in `GROUPS` order.
    sha256: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: ModelConfig,
    optim: OptimConfig,
    step: u64,
    vocab_hash: String,
    rng: Option<RngState>,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to resume training exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub opt: OptimizerState,
    pub rng: Option<RngState>,
    pub vocab_hash: String,
}

fn to_bytes(xs: &[f32]) -> Vec<u8> {
    xs.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn file_name(name: &str) -> String {
    format!("{name}.f32")
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let layout = &self.model.layout;
        for g in GROUPS {
            fs::create_dir_all(dir.join(g)).at(dir.join(g))?;
        }
        let mut tensors = Vec::with_capacity(layout.tensors.len());
        for t in &layout.tensors {
            let mut hashes = Vec::with_capacity(3);
            for (g, buf) in GROUPS.iter().zip([&self.model.params, &self.opt.m, &self.opt.v]) {
                let bytes = to_bytes(&buf[t.range()]);
                hashes.push(sha256_hex(&bytes));
                let path = dir.join(g).join(file_name(&t.name));
                fs::write(&path, bytes).at(&path)?;
            }
            tensors.push(TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                sha256: hashes,
            });
        }
        let manifest = Manifest {
            format: "mtlab-checkpoint".into(),
            version: CHECKPOINT_VERSION,
            config: self.model.config.clone(),
            optim: self.opt.config.clone(),
            step: self.opt.step,
            vocab_hash: self.vocab_hash.clone(),
            rng: self.rng.clone(),
            tensors,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let path = dir.join("manifest.json");
        fs::write(&path, text + "\n").at(&path)
    }

    /// Load and verify a checkpoint. With `expected_vocab_hash`, a mismatch
    /// fails before any tensor is read.
    pub fn load(dir: &Path, expected_vocab_hash: Option<&str>) -> Result<Checkpoint> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).at(&path)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if manifest.format != "mtlab-checkpoint" || manifest.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                manifest.format, manifest.version
            )));
        }
        if let Some(expected) = expected_vocab_hash {
            if expected != manifest.vocab_hash {
                return Err(Error::VocabMismatch {
                    expected: expected.to_string(),
                    found: manifest.vocab_hash,
                });
            }
        }
        manifest.config.validate()?;
        let layout = Layout::new(&manifest.config);
        if layout.tensors.len() != manifest.tensors.len() {
            return Err(Error::Checkpoint("tensor index does not match the configuration".into()));
        }
        let mut bufs = [vec![0f32; layout.total], vec![0f32; layout.total], vec![0f32; layout.total]];
        for (t, entry) in layout.tensors.iter().zip(&manifest.tensors) {
            if t.name != entry.name || t.shape != entry.shape || entry.sha256.len() != GROUPS.len() {
                return Err(Error::Checkpoint(format!("tensor {} does not match the configuration", entry.name)));
            }
            for (gi, g) in GROUPS.iter().enumerate() {
                let p = dir.join(g).join(file_name(&t.name));
                let bytes = fs::read(&p).at(&p)?;
                if bytes.len() != t.len() * 4 || sha256_hex(&bytes) != entry.sha256[gi] {
                    return Err(Error::Checkpoint(format!("{} is corrupt", p.display())));
                }
                for (dst, chunk) in bufs[gi][t.range()].iter_mut().zip(bytes.chunks_exact(4)) {
                    *dst = f32::from_le_bytes(chunk.try_into().unwrap());
                }
            }
        }
        let [params, m, v] = bufs;
        Ok(Checkpoint {
            model: Model::from_params(manifest.config, params),
            opt: OptimizerState {
                config: manifest.optim,
                step: manifest.step,
                m,
                v,
            },
            rng: manifest.rng,
            vocab_hash: manifest.vocab_hash,
        })
    }
}
