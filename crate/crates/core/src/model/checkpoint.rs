//! Self-describing checkpoint container.
//!
//! Layout (little-endian):
//! ```text
//! magic    8 bytes  "LVADCKPT"
//! version  u32      major << 16 | minor
//! header   u64 length + JSON {"config": ModelConfig, "meta": {...}, "background_frames": n?}
//! count    u32      number of tensors
//! tensor*  u32 name length, name (UTF-8), u32 rank, u64 dims[rank], f64 data[..]
//! ```
//! Readers accept any minor version of the same major version and ignore
//! unknown header fields.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::data::{BackgroundModel, FloatImage};
use crate::error::{Error, Result};
use crate::nn::{Parameterized, Tensor};

const MAGIC: &[u8; 8] = b"LVADCKPT";
const MAJOR: u32 = 1;
const MINOR: u32 = 0;
const BACKGROUND: &str = "background.mean_frame";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    #[serde(default)]
    meta: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    background_frames: Option<usize>,
}

/// A model together with the background it was trained against.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub background: Option<BackgroundModel>,
    pub meta: BTreeMap<String, serde_json::Value>,
}

fn write_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    background: Option<&BackgroundModel>,
    meta: &BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    let header = Header {
        config: model.config().clone(),
        meta: meta.clone(),
        background_frames: background.map(|b| b.frame_count),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&((MAJOR << 16) | MINOR).to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    model.visit("", &mut |name, p| tensors.push((name.to_string(), p.value.clone())));
    if let Some(bg) = background {
        tensors.push((BACKGROUND.to_string(), bg.mean_frame.tensor().clone()));
    }
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        write_tensor(&mut out, name, t);
    }
    // write-then-rename so a crash never leaves a truncated checkpoint behind
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&out).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = cur.u32()?;
    if version >> 16 != MAJOR {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}.{}",
            version >> 16,
            version & 0xffff
        )));
    }
    let hlen = cur.u64()? as usize;
    let header: Header =
        serde_json::from_slice(cur.take(hlen)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let count = cur.u32()? as usize;
    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..count {
        let nlen = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(nlen)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u32()? as usize;
        let dims: Vec<usize> = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let n: usize = dims.iter().product();
        let bytes = cur.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.insert(name, Tensor::from_vec(&dims, data));
    }

    let mut model = Model::new(header.config, 0)?;
    let mut problem: Option<String> = None;
    model.visit_mut("", &mut |name, p| {
        if problem.is_some() {
            return;
        }
        match tensors.remove(name) {
            Some(t) if t.shape() == p.value.shape() => p.value = t,
            Some(t) => {
                problem = Some(format!(
                    "tensor {name} has shape {:?}, model expects {:?}",
                    t.shape(),
                    p.value.shape()
                ))
            }
            None => problem = Some(format!("missing tensor {name}")),
        }
    });
    if let Some(msg) = problem {
        return Err(Error::Checkpoint(msg));
    }
    let background = match (tensors.remove(BACKGROUND), header.background_frames) {
        (Some(t), Some(n)) => Some(BackgroundModel {
            mean_frame: FloatImage::from_tensor(t)?,
            frame_count: n,
        }),
        _ => None,
    };
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
    }
    let mut invalid = false;
    model.visit("", &mut |_, p| invalid |= !p.value.all_finite());
    if invalid {
        return Err(Error::Checkpoint("non-finite parameter values".into()));
    }
    Ok(Checkpoint {
        model,
        background,
        meta: header.meta,
    })
}
