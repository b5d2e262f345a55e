//! Weight container: `DKCKPT01`, a u64 LE header length, a JSON header
//! (config echo plus tensor table), then little-endian f32 tensor data.
//! Offsets in the table are byte offsets into the data section.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, ModelConfig};
use super::model::ModelState;
use super::tensor::Tensor;

const MAGIC: &[u8; 8] = b"DKCKPT01";
const MAX_HEADER: u64 = 64 << 20;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("checkpoint config differs from the expected config")]
    ConfigMismatch,
    #[error("tensor {0} missing from checkpoint")]
    MissingTensor(String),
    #[error("unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("tensor {name}: shape {got:?}, expected {want:?}")]
    Shape {
        name: String,
        got: Vec<usize>,
        want: Vec<usize>,
    },
    #[error("tensor table is inconsistent: {0}")]
    Layout(String),
    #[error("data section is truncated")]
    Truncated,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    length: u64,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    cfg: &ModelConfig,
    state: &ModelState,
) -> Result<(), CheckpointError> {
    cfg.validate()?;
    let params = state.params();
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0u64;
    for (name, t) in &params {
        let length = (t.len() * 4) as u64;
        tensors.push(Entry {
            name: name.clone(),
            shape: t.shape.clone(),
            offset,
            length,
        });
        offset += length;
    }
    let header = serde_json::to_vec(&Header {
        config: cfg.clone(),
        tensors,
    })?;
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for (_, t) in &params {
        for &v in &t.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint and checks every tensor against the shapes implied by
/// its config. With `expected`, the echoed config must also match it.
pub fn read_checkpoint<R: Read>(
    mut r: R,
    expected: Option<&ModelConfig>,
) -> Result<(ModelConfig, ModelState), CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(CheckpointError::Layout(format!("header length {len}")));
    }
    let mut header = vec![0u8; len as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    let cfg = header.config;
    cfg.validate()?;
    if let Some(e) = expected {
        if *e != cfg {
            return Err(CheckpointError::ConfigMismatch);
        }
    }

    let mut data = Vec::new();
    r.read_to_end(&mut data)?;

    let mut table: BTreeMap<String, Entry> = BTreeMap::new();
    for e in header.tensors {
        if table.contains_key(&e.name) {
            return Err(CheckpointError::Layout(format!(
                "duplicate tensor {}",
                e.name
            )));
        }
        table.insert(e.name.clone(), e);
    }

    let mut state = ModelState::zeros(&cfg);
    for (name, t) in state.params_mut() {
        let e = table
            .remove(&name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
        if e.shape != t.shape {
            return Err(CheckpointError::Shape {
                name,
                got: e.shape,
                want: t.shape.clone(),
            });
        }
        if e.length != (t.len() * 4) as u64 {
            return Err(CheckpointError::Layout(format!(
                "{name}: length {}",
                e.length
            )));
        }
        let end = e
            .offset
            .checked_add(e.length)
            .ok_or(CheckpointError::Truncated)?;
        if end > data.len() as u64 {
            return Err(CheckpointError::Truncated);
        }
        let bytes = &data[e.offset as usize..end as usize];
        fill(t, bytes);
    }
    if let Some(name) = table.into_keys().next() {
        return Err(CheckpointError::UnexpectedTensor(name));
    }
    Ok((cfg, state))
}

fn fill(t: &mut Tensor, bytes: &[u8]) {
    for (v, c) in t.data.iter_mut().zip(bytes.chunks_exact(4)) {
        *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
    }
}

pub fn save_checkpoint(
    path: &Path,
    cfg: &ModelConfig,
    state: &ModelState,
) -> Result<(), CheckpointError> {
    write_checkpoint(BufWriter::new(File::create(path)?), cfg, state)
}

pub fn load_checkpoint(
    path: &Path,
    expected: Option<&ModelConfig>,
) -> Result<(ModelConfig, ModelState), CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?), expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(cfg: &ModelConfig, state: &ModelState) -> Vec<u8> {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, cfg, state).unwrap();
        buf
    }

    #[test]
    fn roundtrip_is_exact() {
        let cfg = ModelConfig::toy();
        let state = ModelState::init(&cfg, 3).unwrap();
        let buf = bytes(&cfg, &state);
        let (cfg2, state2) = read_checkpoint(&buf[..], Some(&cfg)).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(state2, state);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let cfg = ModelConfig::toy();
        let state = ModelState::init(&cfg, 3).unwrap();
        let mut buf = bytes(&cfg, &state);
        assert!(matches!(
            read_checkpoint(&buf[..buf.len() - 4], None),
            Err(CheckpointError::Truncated)
        ));
        buf[0] = b'X';
        assert!(matches!(
            read_checkpoint(&buf[..], None),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn rejects_config_mismatch() {
        let cfg = ModelConfig::toy();
        let state = ModelState::init(&cfg, 3).unwrap();
        let buf = bytes(&cfg, &state);
        let mut other = cfg.clone();
        other.layers = 1;
        assert!(matches!(
            read_checkpoint(&buf[..], Some(&other)),
            Err(CheckpointError::ConfigMismatch)
        ));
    }

    #[test]
    fn rejects_shape_that_disagrees_with_config() {
        // Weights from a 1-layer model under a header claiming 2 layers.
        let mut small = ModelConfig::toy();
        small.layers = 1;
        let state = ModelState::init(&small, 3).unwrap();
        let buf = bytes(&small, &state);
        let hlen = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&buf[16..16 + hlen]).unwrap();
        header["config"]["layers"] = 2.into();
        let h = serde_json::to_vec(&header).unwrap();
        let mut forged = MAGIC.to_vec();
        forged.extend((h.len() as u64).to_le_bytes());
        forged.extend(h);
        forged.extend(&buf[16 + hlen..]);
        assert!(matches!(
            read_checkpoint(&forged[..], None),
            Err(CheckpointError::MissingTensor(_))
        ));
    }
}
