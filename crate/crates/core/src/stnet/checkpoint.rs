//! Binary checkpoint container.
//!
//! All integers little-endian:
//!
//! ```text
//! magic      8 bytes  "KFIDNET\0"
//! version    u32      1
//! cfg_len    u32      byte length of the config text
//! cfg        utf-8    `net.key = value` lines
//! count      u32      number of tensors (18)
//! per tensor:
//!   name_len u16, name utf-8, ndim u8, dims u32 x ndim, data f64 x prod(dims)
//! ```

use std::path::Path;

use super::params::ModelParams;
use super::tensor::Tensor;
use super::NetConfig;
use crate::config::{apply_net, render_net};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KFIDNET\0";
const VERSION: u32 = 1;

pub fn encode(cfg: &NetConfig, params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let text = render_net(cfg);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let names = ModelParams::names();
    out.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for (name, t) in names.iter().zip(params.tensors()) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn utf8(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(NetConfig, ModelParams)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let cfg_len = r.u32()? as usize;
    let text = r.utf8(cfg_len)?;
    let mut cfg = NetConfig::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("bad config line `{line}`")))?;
        let key = k.trim();
        let key = key.strip_prefix("net.").unwrap_or(key);
        apply_net(&mut cfg, key, v.trim()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    cfg.validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut params = ModelParams::zeros(&cfg);
    let count = r.u32()? as usize;
    let names = ModelParams::names();
    if count != names.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {count}",
            names.len()
        )));
    }
    for (name, slot) in names.iter().zip(params.tensors_mut()) {
        let len = u16::from_le_bytes(r.array()?) as usize;
        let found = r.utf8(len)?;
        if found != *name {
            return Err(Error::Checkpoint(format!("expected tensor {name}, found {found}")));
        }
        let ndim = r.array::<1>()?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        if shape != slot.shape {
            return Err(Error::Shape(format!(
                "checkpoint tensor {name} has shape {shape:?}, config implies {:?}",
                slot.shape
            )));
        }
        let mut t = Tensor::zeros(&shape);
        for v in t.data.iter_mut() {
            *v = f64::from_le_bytes(r.array()?);
        }
        *slot = t;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((cfg, params))
}

pub fn write_checkpoint(path: &Path, cfg: &NetConfig, params: &ModelParams) -> Result<()> {
    std::fs::write(path, encode(cfg, params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(NetConfig, ModelParams)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
