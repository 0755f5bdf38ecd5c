//! Flat binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"GMNC"
//! version     u32
//! param_count u32
//! meta_len    u32       caller-supplied metadata block (may be empty)
//! meta        [u8; meta_len]
//! records     param_count x {
//!     name_len u32, name utf-8,
//!     rank     u32, extents [u64; rank],
//!     values   [f64-le; prod(extents)]
//! }
//! ```
//!
//! Values are always stored at 64 bits; an `f32` registry is widened on save
//! and narrowed on load, so checkpoints are interchangeable across precisions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamRegistry;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GMNC";
pub const VERSION: u32 = 1;

pub fn save<F: Scalar>(path: &Path, meta: &[u8], registry: &ParamRegistry<F>) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(registry.len() as u32).to_le_bytes())?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta)?;
    for (_, p) in registry.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.value.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &ext in shape {
            w.write_all(&(ext as u64).to_le_bytes())?;
        }
        for &v in p.value.data() {
            w.write_all(&v.to_f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct LoadedCheckpoint<F> {
    pub meta: Vec<u8>,
    pub params: Vec<(String, Tensor<F>)>,
}

pub fn load<F: Scalar>(path: &Path) -> Result<LoadedCheckpoint<F>> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("bad checkpoint header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad checkpoint header".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)
        .map_err(|_| Error::Checkpoint("truncated metadata block".into()))?;

    let mut params = Vec::with_capacity(count);
    for i in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)
            .map_err(|_| Error::Checkpoint(format!("truncated name in record {i}")))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Checkpoint(format!("record {i}: name is not UTF-8")))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)
                .map_err(|_| Error::Checkpoint(format!("truncated extents in record {i}")))?;
            shape.push(u64::from_le_bytes(buf) as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Checkpoint(format!("truncated values in record {i}")))?;
            data.push(F::from_f64(f64::from_le_bytes(buf)));
        }
        params.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(LoadedCheckpoint { meta, params })
}

/// Overwrite the registry's values with the checkpoint's, matched by name.
/// Every registry parameter must be present with an identical shape.
pub fn restore_into<F: Scalar>(
    loaded: &LoadedCheckpoint<F>,
    registry: &mut ParamRegistry<F>,
) -> Result<()> {
    if loaded.params.len() != registry.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count mismatch: checkpoint has {}, model expects {}",
            loaded.params.len(),
            registry.len()
        )));
    }
    for (name, tensor) in &loaded.params {
        let id = registry.id_by_name(name).ok_or_else(|| {
            Error::Checkpoint(format!("checkpoint parameter {name:?} unknown to model"))
        })?;
        let p = registry.get_mut(id);
        if p.value.shape() != tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for {name:?}: checkpoint {:?}, model {:?}",
                tensor.shape(),
                p.value.shape()
            )));
        }
        p.value = tensor.clone();
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("bad checkpoint header".into()))?;
    Ok(u32::from_le_bytes(buf))
}
