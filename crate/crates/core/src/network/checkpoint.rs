//! Versioned binary checkpoints.
//!
//! Layout (little endian): `PMCK`, u32 version, u32 header length, header
//! text of `key=value` lines (architecture and augmentation), u32 tensor
//! count, then per tensor: u32 name length, name, u32 rows, u32 cols and
//! rows·cols f32 values. Batch-norm running statistics are stored as 1×c
//! tensors next to the parameters.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use super::model::{build_model, ArchitectureSpec, Augmentation, Model};
use crate::error::{Error, Result};
use crate::pointset::io::write_atomic;

const MAGIC: &[u8; 4] = b"PMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn header(model: &Model) -> String {
    let mut text = String::new();
    for (k, v) in model.spec.to_pairs() {
        text.push_str(&format!("{k}={v}\n"));
    }
    text.push_str(&format!("augmentation={}\n", model.augmentation));
    text
}

fn tensors(model: &mut Model) -> Vec<(String, Array2<f64>)> {
    let mut out = Vec::new();
    model.visit_params(&mut |name, p| out.push((name.to_string(), p.value.clone())));
    model.visit_buffers(&mut |name, b| {
        out.push((name.to_string(), b.clone().insert_axis(ndarray::Axis(0))))
    });
    out
}

pub fn encode_checkpoint(model: &mut Model) -> Vec<u8> {
    let header = header(model);
    let tensors = tensors(model);
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    bytes.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, value) in tensors {
        bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
        bytes.extend_from_slice(name.as_bytes());
        bytes.extend_from_slice(&(value.nrows() as u32).to_le_bytes());
        bytes.extend_from_slice(&(value.ncols() as u32).to_le_bytes());
        for v in value.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    bytes
}

pub fn save_checkpoint(model: &mut Model, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn text(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?)
            .map_err(|_| Error::Format("checkpoint text is not UTF-8".into()))
    }
}

/// Parses a checkpoint and rebuilds the model it describes.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version(format!(
            "checkpoint version {version}, this build reads version {CHECKPOINT_VERSION}"
        )));
    }
    let header_len = r.u32()? as usize;
    let header = r.text(header_len)?;

    let mut spec = ArchitectureSpec::toy(2);
    let mut augmentation = None;
    for line in header.lines().filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad checkpoint header line '{line}'")))?;
        if key == "augmentation" {
            augmentation = Some(value.parse::<Augmentation>()?);
        } else if !spec.set(key, value)? {
            return Err(Error::Version(format!(
                "unknown checkpoint header key '{key}'"
            )));
        }
    }
    let augmentation =
        augmentation.ok_or_else(|| Error::Format("checkpoint header lacks augmentation".into()))?;
    let mut model = build_model(&spec, augmentation, 0)?;

    let count = r.u32()? as usize;
    let mut stored = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = r.text(name_len)?.to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let len = rows
            .checked_mul(cols)
            .and_then(|l| l.checked_mul(4))
            .ok_or_else(|| Error::Format(format!("tensor '{name}' too large")))?;
        let data: Vec<f64> = r
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let value = Array2::from_shape_vec((rows, cols), data).expect("length checked");
        if stored.insert(name.clone(), value).is_some() {
            return Err(Error::Format(format!("duplicate tensor '{name}'")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }

    let mut failure = None;
    let mut assign = |name: &str, target: &mut Array2<f64>| match stored.remove(name) {
        Some(v) if v.dim() == target.dim() => *target = v,
        Some(v) => {
            failure.get_or_insert(Error::Format(format!(
                "tensor '{name}' has shape {:?}, model expects {:?}",
                v.dim(),
                target.dim()
            )));
        }
        None => {
            failure.get_or_insert(Error::Format(format!("checkpoint lacks tensor '{name}'")));
        }
    };
    model.visit_params(&mut |name, p| assign(name, &mut p.value));
    model.visit_buffers(&mut |name, b| {
        let mut row = b.clone().insert_axis(ndarray::Axis(0));
        assign(name, &mut row);
        *b = row.row(0).to_owned();
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(name) = stored.keys().next() {
        return Err(Error::Format(format!(
            "checkpoint has unexpected tensor '{name}'"
        )));
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and requires it to match the expected architecture.
pub fn load_checkpoint_for(
    path: &Path,
    spec: &ArchitectureSpec,
    augmentation: Augmentation,
) -> Result<Model> {
    let model = load_checkpoint(path)?;
    if &model.spec != spec || model.augmentation != augmentation {
        return Err(Error::Version(format!(
            "checkpoint {} was written for {:?} with augmentation {}, expected {:?} with augmentation {}",
            path.display(),
            model.spec,
            model.augmentation,
            spec,
            augmentation
        )));
    }
    Ok(model)
}
