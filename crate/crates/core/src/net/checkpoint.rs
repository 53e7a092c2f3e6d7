//! Checkpoint persistence.
//!
//! Little-endian layout: magic `SMNN`, u32 version (= 1), u32 record count,
//! then one record per parameter tensor in layer order (weights before bias):
//! u16 name length, UTF-8 name, u8 role (0 = weights, 1 = bias), u8 rank,
//! rank x u64 dims, raw f32 data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Network;

pub const MAGIC: &[u8; 4] = b"SMNN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Weights,
    Bias,
}

impl TensorRole {
    fn code(self) -> u8 {
        match self {
            TensorRole::Weights => 0,
            TensorRole::Bias => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TensorRole::Weights),
            1 => Some(TensorRole::Bias),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckpointRecord {
    pub name: String,
    pub role: TensorRole,
    pub dims: Vec<u64>,
    pub data: Vec<f32>,
}

fn write_record(w: &mut impl Write, name: &str, role: TensorRole, tensor: &Tensor) -> std::io::Result<()> {
    let name_bytes = name.as_bytes();
    w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
    w.write_all(name_bytes)?;
    w.write_all(&[role.code(), tensor.shape().len() as u8])?;
    for &d in tensor.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in tensor.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Writes the network's parameter store to `path`.
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    let count = (net.params().len() * 2) as u32;
    w.write_all(&count.to_le_bytes()).map_err(io_err)?;
    for p in net.params() {
        write_record(&mut w, &p.name, TensorRole::Weights, &p.weights).map_err(io_err)?;
        write_record(&mut w, &p.name, TensorRole::Bias, &p.bias).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

struct RecordReader<'a> {
    r: BufReader<File>,
    path: &'a Path,
}

impl RecordReader<'_> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| Error::TruncatedCheckpoint {
                path: self.path.to_path_buf(),
                detail: format!("file ended while reading {what}"),
            })?;
        Ok(buf)
    }

    fn u16_le(&mut self, what: &str) -> Result<u16> {
        let b = self.bytes(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32_le(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64_le(&mut self, what: &str) -> Result<u64> {
        let b = self.bytes(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

/// Reads all records from a checkpoint file.
pub fn read_checkpoint(path: &Path) -> Result<Vec<CheckpointRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = RecordReader {
        r: BufReader::new(file),
        path,
    };
    let magic = rd.bytes(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = rd.u32_le("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: VERSION,
        });
    }
    let count = rd.u32_le("record count")?;
    let mut records = Vec::with_capacity(count as usize);
    for i in 0..count {
        let ctx = format!("record {i}");
        let name_len = rd.u16_le(&ctx)? as usize;
        let name_bytes = rd.bytes(name_len, &ctx)?;
        let name = String::from_utf8(name_bytes).map_err(|_| Error::TruncatedCheckpoint {
            path: path.to_path_buf(),
            detail: format!("record {i} has a non-UTF-8 name"),
        })?;
        let head = rd.bytes(2, &ctx)?;
        let role = TensorRole::from_code(head[0]).ok_or_else(|| Error::TruncatedCheckpoint {
            path: path.to_path_buf(),
            detail: format!("record {i} ({name}) has unknown tensor role {}", head[0]),
        })?;
        let rank = head[1] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(rd.u64_le(&ctx)?);
        }
        let len: u64 = dims.iter().product();
        let raw = rd.bytes(len as usize * 4, &format!("record {i} ({name}) data"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        records.push(CheckpointRecord {
            name,
            role,
            dims,
            data,
        });
    }
    Ok(records)
}

/// Loads checkpoint data into an already-built network of the expected
/// topology. Every record must match a layer by name and shape, and every
/// parameter tensor must be covered. Trainable flags are not stored in
/// checkpoints and are left untouched.
pub fn load_checkpoint_into(net: &mut Network, path: &Path) -> Result<()> {
    let records = read_checkpoint(path)?;
    let mut filled = vec![(false, false); net.params().len()];
    for rec in &records {
        let Some(idx) = net.param_index(&rec.name) else {
            return Err(Error::CheckpointMismatch {
                layer: rec.name.clone(),
                detail: "layer not present in the expected topology".into(),
            });
        };
        let param = &mut net.params_mut()[idx];
        let target = match rec.role {
            TensorRole::Weights => &mut param.weights,
            TensorRole::Bias => &mut param.bias,
        };
        let expected: Vec<u64> = target.shape().iter().map(|&d| d as u64).collect();
        if rec.dims != expected {
            return Err(Error::CheckpointMismatch {
                layer: rec.name.clone(),
                detail: format!(
                    "shape mismatch: expected {:?}, checkpoint has {:?}",
                    expected, rec.dims
                ),
            });
        }
        target.data_mut().copy_from_slice(&rec.data);
        match rec.role {
            TensorRole::Weights => filled[idx].0 = true,
            TensorRole::Bias => filled[idx].1 = true,
        }
    }
    for (idx, (w, b)) in filled.iter().enumerate() {
        if !w || !b {
            return Err(Error::CheckpointMismatch {
                layer: net.params()[idx].name.clone(),
                detail: "checkpoint does not cover this layer's parameters".into(),
            });
        }
    }
    Ok(())
}
