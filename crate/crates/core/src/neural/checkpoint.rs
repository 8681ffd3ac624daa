//! `WICM` checkpoints.
//!
//! ```text
//! magic "WICM" | u16 version | u32 n | n bytes JSON header
//! u32 tensor count
//! per tensor: u16 name len | name (UTF-8) | u32 rows | u32 cols | rows*cols f32
//! ```
//!
//! All integers and floats little-endian. The JSON header echoes the network
//! spec and the training configuration.

use std::collections::HashMap;
use std::io::{Cursor, Read};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::layers::NetRng;
use super::model::{Network, NetworkSpec, TrainConfig};
use crate::data::Task;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"WICM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub task: Task,
    pub spec: NetworkSpec,
    pub train: TrainConfig,
}

pub fn encode_checkpoint(header: &CheckpointHeader, network: &Network) -> Result<Vec<u8>> {
    if &header.spec != network.spec() {
        return Err(Error::InvalidInput("checkpoint header does not match network".into()));
    }
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let params = network.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(p.value.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.ncols() as u32).to_le_bytes());
        for &v in p.value.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, network: &Network) -> Result<()> {
    std::fs::write(path, encode_checkpoint(header, network)?)?;
    Ok(())
}

fn take<const N: usize>(cur: &mut Cursor<&[u8]>, what: &str) -> Result<[u8; N]> {
    let at = cur.position();
    let mut buf = [0u8; N];
    cur.read_exact(&mut buf)
        .map_err(|_| Error::format(at, format!("truncated {what}")))?;
    Ok(buf)
}

fn take_vec(cur: &mut Cursor<&[u8]>, len: usize, what: &str) -> Result<Vec<u8>> {
    let at = cur.position();
    let remaining = cur.get_ref().len() as u64 - at;
    if len as u64 > remaining {
        return Err(Error::format(at, format!("truncated {what}")));
    }
    let mut buf = vec![0u8; len];
    cur.read_exact(&mut buf).expect("length checked");
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, Network)> {
    let mut cur = Cursor::new(bytes);
    if &take::<4>(&mut cur, "magic")? != MAGIC {
        return Err(Error::format(0, "not a WICM checkpoint"));
    }
    let version = u16::from_le_bytes(take(&mut cur, "version")?);
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let json_len = u32::from_le_bytes(take(&mut cur, "header length")?) as usize;
    let json_at = cur.position();
    let json = take_vec(&mut cur, json_len, "header")?;
    let header: CheckpointHeader = serde_json::from_slice(&json)
        .map_err(|e| Error::format(json_at, format!("bad header: {e}")))?;

    let count = u32::from_le_bytes(take(&mut cur, "tensor count")?) as usize;
    let mut tensors: HashMap<String, (u64, Array2<f64>)> = HashMap::new();
    for _ in 0..count {
        let at = cur.position();
        let name_len = u16::from_le_bytes(take(&mut cur, "tensor name length")?) as usize;
        let name = String::from_utf8(take_vec(&mut cur, name_len, "tensor name")?)
            .map_err(|_| Error::format(at, "tensor name is not UTF-8"))?;
        let rows = u32::from_le_bytes(take(&mut cur, "tensor rows")?) as usize;
        let cols = u32::from_le_bytes(take(&mut cur, "tensor cols")?) as usize;
        let data = take_vec(&mut cur, rows.saturating_mul(cols).saturating_mul(4), "tensor data")?;
        let values: Vec<f64> = data
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))))
            .collect();
        let value = Array2::from_shape_vec((rows, cols), values).expect("length checked");
        if tensors.insert(name.clone(), (at, value)).is_some() {
            return Err(Error::format(at, format!("duplicate tensor {name}")));
        }
    }
    if cur.position() != bytes.len() as u64 {
        return Err(Error::format(cur.position(), "trailing bytes after last tensor"));
    }

    let mut network = Network::new(header.spec.clone(), &mut NetRng::seed_from_u64(0))?;
    for p in network.params_mut() {
        let (at, value) = tensors
            .remove(&p.name)
            .ok_or_else(|| Error::invalid_data("checkpoint", format!("missing tensor {}", p.name)))?;
        if value.dim() != p.value.dim() {
            return Err(Error::format(
                at,
                format!("tensor {} has shape {:?}, expected {:?}", p.name, value.dim(), p.value.dim()),
            ));
        }
        p.value = value;
    }
    if let Some(name) = tensors.keys().min() {
        return Err(Error::invalid_data("checkpoint", format!("unexpected tensor {name}")));
    }
    Ok((header, network))
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Network)> {
    decode_checkpoint(&std::fs::read(path)?)
}

/// Rounds every parameter to f32 precision, so an in-memory network behaves
/// exactly like its reloaded checkpoint.
pub fn round_to_f32(network: &mut Network) {
    for p in network.params_mut() {
        p.value.mapv_inplace(|v| f64::from(v as f32));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::Architecture;

    fn header(arch: Architecture) -> CheckpointHeader {
        let train = TrainConfig {
            hidden: vec![5, 3],
            bottleneck: 2,
            ..Default::default()
        };
        CheckpointHeader {
            task: Task::Ogwic,
            spec: NetworkSpec::for_task(arch, Task::Ogwic, 4, &train),
            train,
        }
    }

    #[test]
    fn round_trip() {
        for arch in [Architecture::LinearHead, Architecture::Adapter] {
            let h = header(arch);
            let mut net = Network::seeded(h.spec.clone(), 9).unwrap();
            round_to_f32(&mut net);
            let bytes = encode_checkpoint(&h, &net).unwrap();
            assert_eq!(&bytes[..4], b"WICM");
            let (h2, net2) = decode_checkpoint(&bytes).unwrap();
            assert_eq!(h, h2);
            for (a, b) in net.params().iter().zip(net2.params()) {
                assert_eq!(a.name, b.name);
                assert_eq!(a.value, b.value);
            }
            assert_eq!(encode_checkpoint(&h2, &net2).unwrap(), bytes);
        }
    }

    #[test]
    fn corrupt_inputs() {
        let h = header(Architecture::LinearHead);
        let net = Network::seeded(h.spec.clone(), 1).unwrap();
        let bytes = encode_checkpoint(&h, &net).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_checkpoint(&extra), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 2;
        assert!(decode_checkpoint(&bad).is_err());
    }
}
