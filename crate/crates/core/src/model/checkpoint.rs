//! Checkpoint format.
//!
//! ```text
//! "CSSLCKPT" | u32 version | u64 descriptor length | descriptor JSON
//! then per parameter, in name order:
//!   u32 name length | name | u32 ndim | ndim × u64 dims | numel × f64
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelState, Params};
use crate::dataio::ClassId;
use crate::numerics::{Parameter, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CSSLCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Descriptor {
    config: ModelConfig,
    classes: Vec<ClassId>,
    frozen: bool,
    n_params: usize,
}

pub fn write_checkpoint<W: Write>(model: &ModelState, mut w: W) -> Result<()> {
    let desc = serde_json::to_vec(&Descriptor {
        config: model.config.clone(),
        classes: model.classes.clone(),
        frozen: model.frozen,
        n_params: model.params.len(),
    })?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(desc.len() as u64).to_le_bytes())?;
    w.write_all(&desc)?;
    for (name, p) in &model.params {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let shape = p.value.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelState> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u64(&mut r)? as usize;
    let mut desc = vec![0u8; len];
    r.read_exact(&mut desc)?;
    let desc: Descriptor = serde_json::from_slice(&desc)?;
    desc.config.validate()?;
    let mut params = Params::new();
    for _ in 0..desc.n_params {
        let mut name = vec![0u8; read_u32(&mut r)? as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let ndim = read_u32(&mut r)? as usize;
        let shape = (0..ndim)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let value = Tensor::new(shape, data)?;
        let p = if desc.frozen {
            Parameter::frozen(value)
        } else {
            Parameter::new(value)
        };
        params.insert(name, p);
    }
    let fresh = ModelState::new(desc.config.clone(), &mut crate::rng::stream(0, 0))?;
    let expected: Vec<_> = fresh
        .params
        .keys()
        .filter(|k| !k.starts_with("classifier."))
        .collect();
    let got: Vec<_> = params.keys().filter(|k| !k.starts_with("classifier.")).collect();
    if expected != got {
        return Err(Error::Format("checkpoint parameters do not match its architecture".into()));
    }
    Ok(ModelState::from_parts(desc.config, params, desc.classes, desc.frozen))
}

pub fn save_checkpoint(model: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
