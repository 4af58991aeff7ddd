//! Model checkpoints.
//!
//! ```text
//! "SBRCKPT1"  u32 header length  JSON header  f32 blobs (registry order)
//! ```
//!
//! All numbers little-endian. The header carries the model config, the
//! name and shape of every parameter, the epoch, the run seed, the edge
//! weighting and the hash of the training data.

use std::fs;
use std::path::Path;

use sbr_core::graph::EdgeWeighting;
use sbr_core::{Model, ModelConfig, ParamStore, Real, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SBRCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub model: ModelConfig,
    pub params: Vec<ParamInfo>,
    pub epoch: usize,
    pub seed: u64,
    pub edge_weighting: EdgeWeighting,
    pub data_hash: String,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: Header,
    pub model: Model<f32>,
}

pub fn encode<T: Real>(
    model: &Model<T>,
    epoch: usize,
    seed: u64,
    edge_weighting: EdgeWeighting,
    data_hash: &str,
) -> Result<Vec<u8>> {
    let header = Header {
        format_version: FORMAT_VERSION,
        model: model.config().clone(),
        params: model
            .params()
            .iter()
            .map(|(name, t)| ParamInfo {
                name: name.to_owned(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        epoch,
        seed,
        edge_weighting,
        data_hash: data_hash.to_owned(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * model.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.params().tensors() {
        for &v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<Checkpoint> {
    let bad = |msg: String| Error::format(origin, msg);
    if bytes.get(..8) != Some(MAGIC.as_slice()) {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let len = bytes
        .get(8..12)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
        .ok_or_else(|| bad("truncated header".into()))?;
    let json = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", header.format_version)));
    }
    let mut blobs = &bytes[12 + len..];
    let mut store = ParamStore::new();
    for p in &header.params {
        let n: usize = p.shape.iter().product();
        let (head, rest) = blobs
            .split_at_checked(4 * n)
            .ok_or_else(|| bad(format!("truncated blob for {}", p.name)))?;
        let data = head
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.register(p.name.clone(), Tensor::new(&p.shape, data)?)?;
        blobs = rest;
    }
    if !blobs.is_empty() {
        return Err(bad("trailing bytes after the last parameter".into()));
    }
    let model = Model::from_params(header.model.clone(), store).map_err(|e| bad(e.to_string()))?;
    Ok(Checkpoint { header, model })
}

pub fn write<T: Real>(
    path: &Path,
    model: &Model<T>,
    epoch: usize,
    seed: u64,
    edge_weighting: EdgeWeighting,
    data_hash: &str,
) -> Result<()> {
    let bytes = encode(model, epoch, seed, edge_weighting, data_hash)?;
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn read(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(&bytes, path)
}

pub fn file_name(epoch: usize) -> String {
    format!("ckpt-epoch{epoch}.bin")
}

#[cfg(test)]
mod tests {
    use super::*;
    use sbr_core::Rng;

    fn model() -> Model<f32> {
        Model::new(ModelConfig::new(9, 4, 2), &mut Rng::new(3)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = encode(&m, 2, 17, EdgeWeighting::Counted, "abc").unwrap();
        let c = decode(&bytes, Path::new("c")).unwrap();
        assert_eq!(c.header.epoch, 2);
        assert_eq!(c.header.seed, 17);
        assert_eq!(c.header.edge_weighting, EdgeWeighting::Counted);
        assert_eq!(c.model.params().tensors(), m.params().tensors());
        assert_eq!(encode(&c.model, 2, 17, EdgeWeighting::Counted, "abc").unwrap(), bytes);
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = encode(&model(), 1, 1, EdgeWeighting::Binary, "").unwrap();
        for n in [0, 7, 11, 40, bytes.len() - 1] {
            assert!(decode(&bytes[..n], Path::new("c")).is_err());
        }
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 4]);
        assert!(decode(&extra, Path::new("c")).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(decode(&magic, Path::new("c")).is_err());
    }
}
