//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic            4 bytes  "GAG1"
//! format version   u32      1
//! embed_dim        u64
//! num_layers       u64
//! learning_rate    f64
//! batch_size       u64
//! rng_seed         u64
//! flags            u64      bit 0: edge_out_uses_receiver
//! num_items        u64
//! num_users        u64
//! weights          f64[]    tensors in declaration order
//! adam step        u64
//! adam first       f64[]    same layout as weights
//! adam second      f64[]    same layout as weights
//! ```
//!
//! Declaration order is items, users, then per layer edge_in weight/bias,
//! edge_out weight/bias, node weight/bias, att weight/bias. A JSON sidecar
//! (`<path>.json`) lists tensor names and shapes plus the seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::{AdamState, GagModel, ModelConfig, Weights};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GAG1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub rng_seed: u64,
    pub num_items: usize,
    pub num_users: usize,
    pub adam_step: u64,
    pub tensors: Vec<TensorInfo>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn put_u64(buf: &mut Vec<u8>, x: u64) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn put_tensors(buf: &mut Vec<u8>, w: &Weights) {
    for t in w.tensors() {
        for x in t {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub fn encode(model: &GagModel) -> Vec<u8> {
    let c = &model.config;
    let mut buf = Vec::with_capacity(64 + 24 * model.weights.num_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u64(&mut buf, c.embed_dim as u64);
    put_u64(&mut buf, c.num_layers as u64);
    buf.extend_from_slice(&c.learning_rate.to_le_bytes());
    put_u64(&mut buf, c.batch_size as u64);
    put_u64(&mut buf, c.rng_seed);
    put_u64(&mut buf, u64::from(c.edge_out_uses_receiver));
    put_u64(&mut buf, model.num_items() as u64);
    put_u64(&mut buf, model.num_users() as u64);
    put_tensors(&mut buf, &model.weights);
    put_u64(&mut buf, model.adam.step);
    put_tensors(&mut buf, &model.adam.first);
    put_tensors(&mut buf, &model.adam.second);
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let out = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Data(format!("checkpoint truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fill(&mut self, w: &mut Weights) -> Result<()> {
        for t in w.tensors_mut() {
            for x in t.iter_mut() {
                *x = self.f64()?;
            }
        }
        Ok(())
    }
}

pub fn decode(buf: &[u8]) -> Result<GagModel> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Data("not a GAG1 checkpoint".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config = ModelConfig {
        embed_dim: r.u64()? as usize,
        num_layers: r.u64()? as usize,
        learning_rate: r.f64()?,
        batch_size: r.u64()? as usize,
        rng_seed: r.u64()?,
        edge_out_uses_receiver: r.u64()? & 1 == 1,
    };
    config.validate()?;
    let num_items = r.u64()? as usize;
    let num_users = r.u64()? as usize;
    let mut weights = Weights::zeros(config.embed_dim, num_items, num_users, config.num_layers);
    r.fill(&mut weights)?;
    let step = r.u64()?;
    let mut first = weights.zeros_like();
    let mut second = weights.zeros_like();
    r.fill(&mut first)?;
    r.fill(&mut second)?;
    if r.pos != buf.len() {
        return Err(Error::Data(format!(
            "{} trailing bytes in checkpoint",
            buf.len() - r.pos
        )));
    }
    Ok(GagModel {
        config,
        weights,
        adam: AdamState {
            first,
            second,
            step,
        },
        version: 0,
    })
}

pub fn sidecar(model: &GagModel) -> CheckpointSidecar {
    CheckpointSidecar {
        format: String::from_utf8_lossy(MAGIC).into_owned(),
        version: FORMAT_VERSION,
        config: model.config.clone(),
        rng_seed: model.config.rng_seed,
        num_items: model.num_items(),
        num_users: model.num_users(),
        adam_step: model.adam.step,
        tensors: model
            .weights
            .shapes()
            .into_iter()
            .map(|(name, shape)| TensorInfo { name, shape })
            .collect(),
    }
}

/// Writes the binary checkpoint and its JSON sidecar.
pub fn save(model: &GagModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model))?;
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&sidecar(model))?,
    )?;
    Ok(())
}

pub fn load(path: &Path) -> Result<GagModel> {
    decode(&fs::read(path)?)
}
