//! Binary checkpoints.
//!
//! Layout (little endian): magic `VPTCKPT\0`, format version `u32`, a JSON
//! metadata block (`u32` length + UTF-8), the two normalised adjacencies, the
//! named parameter tensors, then the optimiser state. Every tensor is stored as
//! `u32` rows, `u32` cols and raw `f64` values, so a save/load round trip is
//! bit-exact.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adam::Adam;
use super::network::{ActorCritic, Architecture};
use super::ppo::PpoConfig;
use super::tensor::Tensor;
use crate::reward::RewardWeights;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"VPTCKPT\0";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint does not match the network: {0}")]
    Incompatible(String),
}

/// Human-readable facts stored alongside the tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: Architecture,
    pub episodes_done: u64,
    pub seed: u64,
    pub ppo: PpoConfig,
    pub weights: RewardWeights,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub net: ActorCritic,
    pub adam: Adam,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u32(out, t.rows());
    put_u32(out, t.cols());
    for x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }

    fn tensor(&mut self) -> Result<Tensor, CheckpointError> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let bytes = self.take(rows * cols * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::from_vec(rows, cols, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let meta = serde_json::to_string(&self.meta).expect("metadata serializes");
        put_u32(&mut out, meta.len());
        out.extend_from_slice(meta.as_bytes());
        put_tensor(&mut out, self.net.vertiport_adjacency());
        put_tensor(&mut out, self.net.vehicle_adjacency());
        put_u32(&mut out, self.net.store.len());
        for p in &self.net.store.params {
            put_u32(&mut out, p.name.len());
            out.extend_from_slice(p.name.as_bytes());
            put_tensor(&mut out, &p.value);
        }
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        for t in self.adam.m.iter().chain(&self.adam.v) {
            put_tensor(&mut out, t);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let meta: CheckpointMeta =
            serde_json::from_str(&r.string()?).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let vp = r.tensor()?;
        let ev = r.tensor()?;
        let mut net = ActorCritic::new(meta.architecture, vp, ev, 0);
        let count = r.u32()? as usize;
        if count != net.store.len() {
            return Err(CheckpointError::Incompatible(format!(
                "{count} tensors stored, {} expected",
                net.store.len()
            )));
        }
        for p in &mut net.store.params {
            let name = r.string()?;
            let value = r.tensor()?;
            if name != p.name || value.shape() != p.value.shape() {
                return Err(CheckpointError::Incompatible(format!(
                    "found {name} {:?}, expected {} {:?}",
                    value.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = value;
        }
        let mut adam = Adam::new(&net.store, meta.ppo.learning_rate);
        adam.step = r.u64()?;
        for i in 0..2 * net.store.len() {
            let t = r.tensor()?;
            let k = i % net.store.len();
            if t.shape() != net.store.params[k].value.shape() {
                return Err(CheckpointError::Incompatible(format!("optimiser state {i} has shape {:?}", t.shape())));
            }
            if i < net.store.len() {
                adam.m[k] = t;
            } else {
                adam.v[k] = t;
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { meta, net, adam })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}
