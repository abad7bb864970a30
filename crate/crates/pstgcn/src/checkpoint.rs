//! Binary checkpoint container.
//!
//! Layout: magic `PSTG`, format version, the model descriptor as an
//! embedded TOML string, then per-tensor records (name, dtype code,
//! shape, raw little-endian values). Optimizer velocity tensors are
//! stored under a `velocity.` name prefix, batch-norm running statistics
//! under their buffer names.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{ModelDescriptor, STGCNModel};
use crate::optim::SgdOptimizer;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PSTG";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F64 => 0,
            Dtype::F32 => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Dtype::F64),
            1 => Ok(Dtype::F32),
            other => Err(Error::BadFormat(format!("unknown dtype code {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub struct Checkpoint {
    pub descriptor: ModelDescriptor,
    pub topology_name: String,
    pub records: Vec<Record>,
}

fn write_u32<W: Write>(w: &mut W, x: u32) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, x: u64) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
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

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::BadFormat(format!("bad utf8: {e}")))
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint, dtype: Dtype) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    let desc = toml::to_string(&ckpt.descriptor)
        .map_err(|e| Error::BadFormat(format!("descriptor serialize: {e}")))?;
    write_str(w, &desc)?;
    write_str(w, &ckpt.topology_name)?;
    write_u32(w, ckpt.records.len() as u32)?;
    for rec in &ckpt.records {
        write_str(w, &rec.name)?;
        w.write_all(&[dtype.code()])?;
        write_u32(w, rec.shape.len() as u32)?;
        for &d in &rec.shape {
            write_u64(w, d as u64)?;
        }
        match dtype {
            Dtype::F64 => {
                for &v in &rec.values {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            Dtype::F32 => {
                for &v in &rec.values {
                    w.write_all(&(v as f32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadFormat(format!("bad magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::BadFormat(format!("unsupported version {version}")));
    }
    let desc_text = read_str(r)?;
    let descriptor: ModelDescriptor = toml::from_str(&desc_text)
        .map_err(|e| Error::BadFormat(format!("embedded descriptor: {e}")))?;
    let topology_name = read_str(r)?;
    let count = read_u32(r)? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let name = read_str(r)?;
        let mut code = [0u8; 1];
        r.read_exact(&mut code)?;
        let dtype = Dtype::from_code(code[0])?;
        let ndim = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        match dtype {
            Dtype::F64 => {
                let mut b = [0u8; 8];
                for _ in 0..n {
                    r.read_exact(&mut b)?;
                    values.push(f64::from_le_bytes(b));
                }
            }
            Dtype::F32 => {
                let mut b = [0u8; 4];
                for _ in 0..n {
                    r.read_exact(&mut b)?;
                    values.push(f32::from_le_bytes(b) as f64);
                }
            }
        }
        records.push(Record {
            name,
            shape,
            values,
        });
    }
    Ok(Checkpoint {
        descriptor,
        topology_name,
        records,
    })
}

fn model_records(model: &mut STGCNModel, optimizer: Option<&SgdOptimizer>) -> Vec<Record> {
    let mut records = Vec::new();
    for (name, p) in model.named_parameters_mut() {
        records.push(Record {
            name,
            shape: p.value.shape().to_vec(),
            values: p.value.data().to_vec(),
        });
    }
    for (name, buf) in model.named_buffers_mut() {
        records.push(Record {
            name,
            shape: buf.shape().to_vec(),
            values: buf.data().to_vec(),
        });
    }
    if let Some(opt) = optimizer {
        let mut names: Vec<&String> = opt.velocity().keys().collect();
        names.sort();
        for name in names {
            let v = &opt.velocity()[name];
            records.push(Record {
                name: format!("velocity.{name}"),
                shape: v.shape().to_vec(),
                values: v.data().to_vec(),
            });
        }
    }
    records
}

/// Serialize model (plus optional optimizer state) to bytes.
pub fn model_to_bytes(model: &mut STGCNModel, optimizer: Option<&SgdOptimizer>) -> Result<Vec<u8>> {
    let ckpt = Checkpoint {
        descriptor: model.descriptor(),
        topology_name: model.topology_name.clone(),
        records: model_records(model, optimizer),
    };
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &ckpt, Dtype::F64)?;
    Ok(buf)
}

pub fn save_model(
    path: &Path,
    model: &mut STGCNModel,
    optimizer: Option<&SgdOptimizer>,
) -> Result<()> {
    let bytes = model_to_bytes(model, optimizer)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Restore parameters, buffers and (optionally) optimizer velocity into an
/// existing model of the same topology. Restoration is bit-exact for f64
/// checkpoints.
pub fn load_into_model(
    ckpt: &Checkpoint,
    model: &mut STGCNModel,
    optimizer: Option<&mut SgdOptimizer>,
) -> Result<()> {
    let by_name: std::collections::HashMap<&str, &Record> =
        ckpt.records.iter().map(|r| (r.name.as_str(), r)).collect();
    for (name, p) in model.named_parameters_mut() {
        let rec = by_name
            .get(name.as_str())
            .ok_or_else(|| Error::BadFormat(format!("checkpoint missing parameter {name}")))?;
        if rec.shape != p.value.shape() {
            return Err(Error::shape(
                format!("{name}: {:?}", p.value.shape()),
                format!("{:?}", rec.shape),
            ));
        }
        p.value = Tensor::from_vec(&rec.shape, rec.values.clone())?;
        p.zero_grad();
    }
    for (name, buf) in model.named_buffers_mut() {
        let rec = by_name
            .get(name.as_str())
            .ok_or_else(|| Error::BadFormat(format!("checkpoint missing buffer {name}")))?;
        *buf = Tensor::from_vec(&rec.shape, rec.values.clone())?;
    }
    if let Some(opt) = optimizer {
        opt.velocity_mut().clear();
        for rec in &ckpt.records {
            if let Some(name) = rec.name.strip_prefix("velocity.") {
                opt.velocity_mut()
                    .insert(name.to_string(), Tensor::from_vec(&rec.shape, rec.values.clone())?);
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint_file(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

pub fn read_checkpoint_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    read_checkpoint(&mut &bytes[..])
}
