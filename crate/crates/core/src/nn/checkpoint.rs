//! Checkpoint file format "HNM1", little-endian throughout:
//!
//! ```text
//! magic   4 bytes  "HNM1"
//! version u32      1
//! json    u32 length prefix, then UTF-8 architecture config JSON
//! params  each layer's weight then bias tensor, in layer order,
//!         as f32 values, flat row-major
//! ```
//!
//! Parameter sizes follow from the architecture, so the payload carries no
//! per-tensor headers; a size mismatch in either direction is a format
//! error. Parameters are stored as f32 regardless of the precision the
//! model runs at.

use crate::error::{Error, Result};
use crate::nn::{ArchConfig, Model};
use crate::tensor::Real;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"HNM1";
pub const VERSION: u32 = 1;

pub fn write<T: Real>(path: &Path, model: &Model<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let json = model.arch().to_json();
    let json_bytes = json.as_bytes();
    w.write_all(&(json_bytes.len() as u32).to_le_bytes())?;
    w.write_all(json_bytes)?;
    for tensor in model.params() {
        for &v in tensor.data() {
            w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read<T: Real>(path: &Path) -> Result<Model<T>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("checkpoint truncated before magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?} (expected {:?})",
            magic, MAGIC
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let json_len = read_u32(&mut r)? as usize;
    let mut json_bytes = vec![0u8; json_len];
    r.read_exact(&mut json_bytes)
        .map_err(|_| Error::Format("checkpoint truncated inside config".into()))?;
    let json = String::from_utf8(json_bytes)
        .map_err(|_| Error::Format("checkpoint config is not UTF-8".into()))?;
    let arch = ArchConfig::from_json(&json)?;
    let mut model = Model::<T>::zeroed(arch)?;
    let mut buf = [0u8; 4];
    for tensor in model.params_mut() {
        for v in tensor.data_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("checkpoint truncated inside parameters".into()))?;
            *v = T::from_f64(f32::from_le_bytes(buf) as f64);
        }
    }
    if r.read(&mut buf[..1])? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    Ok(model)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("checkpoint truncated inside header".into()))?;
    Ok(u32::from_le_bytes(buf))
}
