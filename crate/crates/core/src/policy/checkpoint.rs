//! Binary checkpoint format.
//!
//! Layout: magic `VAPCKPT1`, `u32` format version, `u32` header length, JSON
//! header, `u32` tensor count, then per tensor a `u16` name length, the UTF-8
//! name, `u32` rows, `u32` cols and row-major `f64` values. Integers and
//! floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{ModelParams, Tensor};
use crate::autodiff::Matrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"VAPCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub epoch: usize,
    pub step: u64,
    pub best_validation: Option<f64>,
    pub epochs_without_improvement: usize,
    pub has_optimizer: bool,
}

/// First and second moment estimates, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub t: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl OptimizerState {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let z: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.value.rows(), t.value.cols()))
            .collect();
        Self {
            t: 0,
            m: z.clone(),
            v: z,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Self {
            meta: CheckpointMeta {
                model: params.config().clone(),
                epoch: 0,
                step: 0,
                best_validation: None,
                epochs_without_improvement: 0,
                has_optimizer: false,
            },
            params,
            optimizer: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = self.meta.clone();
        meta.model = self.params.config().clone();
        meta.has_optimizer = self.optimizer.is_some();
        let header = serde_json::to_vec(&meta).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);

        let mut count = self.params.tensors().len() as u32;
        if self.optimizer.is_some() {
            count = 3 * count + 1;
        }
        out.extend_from_slice(&count.to_le_bytes());
        for t in self.params.tensors() {
            write_tensor(&mut out, &t.name, &t.value);
        }
        if let Some(opt) = &self.optimizer {
            for (t, (m, v)) in self.params.tensors().iter().zip(opt.m.iter().zip(&opt.v)) {
                write_tensor(&mut out, &format!("adam.m.{}", t.name), m);
                write_tensor(&mut out, &format!("adam.v.{}", t.name), v);
            }
            write_tensor(&mut out, "adam.t", &Matrix::from_vec(1, 1, vec![opt.t as f64]));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let hlen = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| Error::Checkpoint(format!("bad checkpoint header: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is truncated")))?;
            let data: Vec<f64> = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor {
                name,
                value: Matrix::from_vec(rows, cols, data),
            });
        }
        if r.remaining() != 0 {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }

        let n_params = ModelParams::init(&meta.model)?.tensors().len();
        let expected = if meta.has_optimizer { 3 * n_params + 1 } else { n_params };
        if tensors.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} tensors, found {}",
                tensors.len()
            )));
        }
        let rest = tensors.split_off(n_params);
        let params = ModelParams::from_tensors(&meta.model, tensors)?;
        let optimizer = if meta.has_optimizer {
            let mut m = Vec::with_capacity(n_params);
            let mut v = Vec::with_capacity(n_params);
            let mut it = rest.into_iter();
            for p in params.tensors() {
                for (prefix, dst) in [("adam.m.", &mut m), ("adam.v.", &mut v)] {
                    let t = it.next().expect("count checked");
                    if t.name != format!("{prefix}{}", p.name) || t.value.shape() != p.value.shape() {
                        return Err(Error::Checkpoint(format!("unexpected optimizer tensor `{}`", t.name)));
                    }
                    dst.push(t.value);
                }
            }
            let t = it.next().expect("count checked");
            if t.name != "adam.t" || t.value.shape() != (1, 1) {
                return Err(Error::Checkpoint("missing optimizer step counter".into()));
            }
            Some(OptimizerState {
                t: t.value.get(0, 0) as u64,
                m,
                v,
            })
        } else {
            None
        };
        Ok(Self {
            meta,
            params,
            optimizer,
        })
    }

    /// Writes through a temporary sibling and renames, so a crash never
    /// leaves a half-written checkpoint under the final name.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn write_tensor(out: &mut Vec<u8>, name: &str, m: &Matrix) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Checkpoint("checkpoint is truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
