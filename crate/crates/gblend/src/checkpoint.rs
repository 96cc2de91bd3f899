//! Model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"GBCKPT\0\0"  u32 version (1)
//! u32 len, model config as `key = value` lines
//! u32 n_tensors, then per tensor:
//!   u32 len, name (UTF-8)  u32 rank  rank × u64 dims  f64 values
//! ```

use std::fs;
use std::path::Path;

use gblend_core::model::Model;
use gblend_core::tensor::Tensor;

use crate::config::{parse_model, render_model};
use crate::error::{format_err, io_err, Result};

pub const MAGIC: &[u8; 8] = b"GBCKPT\0\0";
pub const VERSION: u32 = 1;

const WHAT: &str = "checkpoint";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("length fits in u32").to_le_bytes());
}

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = render_model(model.config());
    put_u32(&mut out, cfg.len());
    out.extend_from_slice(cfg.as_bytes());
    put_u32(&mut out, model.params().len());
    for (name, t) in model.params().iter() {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| format_err(WHAT, "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| format_err(WHAT, "dimension overflows"))
    }

    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?).map_err(|_| format_err(WHAT, "string is not UTF-8"))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(format_err(WHAT, "bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(format_err(WHAT, format!("unsupported version {version}")));
    }
    let config = parse_model(c.str()?)?;
    let mut model = Model::new(config, 0)?;
    let n = c.u32()?;
    if n != model.params().len() {
        return Err(format_err(WHAT, format!("{n} tensors, the configured model has {}", model.params().len())));
    }
    for i in 0..n {
        let name = c.str()?;
        let expected = &model.params().names()[i];
        if name != expected {
            return Err(format_err(WHAT, format!("tensor {i} is {name:?}, expected {expected:?}")));
        }
        let rank = c.u32()?;
        let shape = (0..rank).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| format_err(WHAT, "shape overflows"))?;
        let data = c
            .take(len.checked_mul(8).ok_or_else(|| format_err(WHAT, "shape overflows"))?)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let slot = &mut model.params_mut().tensors_mut()[i];
        if slot.shape() != shape.as_slice() {
            return Err(format_err(WHAT, format!("{name}: shape {shape:?}, expected {:?}", slot.shape())));
        }
        *slot = Tensor::new(shape, data)?;
    }
    if c.pos != bytes.len() {
        return Err(format_err(WHAT, format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, encode_checkpoint(model)).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    decode_checkpoint(&fs::read(path).map_err(io_err(path))?)
}
