//! Single-file checkpoint archive.
//!
//! ```text
//! "IACK" | version u32 | meta_len u32 | meta JSON | n_tensors u32 | tensors...
//! tensor: name_len u16 | name | kind u8 | width u8 | rows u32 | cols u32 | values
//! ```
//! All integers and values are little-endian. `kind` is 0 for parameters,
//! 1 for buffers, 2/3 for the optimizer's first/second moments. `width` is
//! the float size in bytes (4 or 8), so double-precision runs round-trip
//! bit-for-bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::IaConfig;
use super::network::IaModel;
use crate::encoders::EncoderSpec;
use crate::error::{IaError, Result};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, ParamStore};

const MAGIC: &[u8; 4] = b"IACK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: IaConfig,
    pub encoder: EncoderSpec,
    /// Sample ids the parameters were fitted on; used by the leakage guard.
    pub train_ids: Vec<String>,
    pub epochs_done: usize,
    pub optimizer_steps: u64,
    pub init: String,
    #[serde(default)]
    pub train_config: serde_json::Value,
}

/// Adam moment estimates keyed by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T: Scalar> {
    pub first: BTreeMap<String, Matrix<T>>,
    pub second: BTreeMap<String, Matrix<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T: Scalar> {
    pub meta: CheckpointMeta,
    pub model: IaModel<T>,
    pub moments: Option<Moments<T>>,
}

fn put_tensor<T: Scalar>(out: &mut Vec<u8>, name: &str, kind: u8, m: &Matrix<T>) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(kind);
    out.push(T::WIDTH);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.data() {
        v.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(IaError::Checkpoint("truncated archive".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta)?;
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);

        let mut tensors: Vec<(&str, u8, &Matrix<T>)> = Vec::new();
        tensors.extend(self.model.params.params().map(|(n, m)| (n.as_str(), 0, m)));
        tensors.extend(self.model.params.buffers().map(|(n, m)| (n.as_str(), 1, m)));
        if let Some(mom) = &self.moments {
            tensors.extend(mom.first.iter().map(|(n, m)| (n.as_str(), 2, m)));
            tensors.extend(mom.second.iter().map(|(n, m)| (n.as_str(), 3, m)));
        }
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, kind, m) in tensors {
            put_tensor(&mut out, name, kind, m);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(IaError::Checkpoint("not a checkpoint archive".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(IaError::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;
        let n = r.u32()? as usize;
        let mut params = ParamStore::new();
        let mut first = BTreeMap::new();
        let mut second = BTreeMap::new();
        for _ in 0..n {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| IaError::Checkpoint("tensor name is not UTF-8".into()))?
                .to_owned();
            let kind = r.u8()?;
            let width = r.u8()? as usize;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let raw = r.take(rows * cols * width)?;
            let values: Vec<T> = match width {
                4 => raw
                    .chunks_exact(4)
                    .map(|c| T::from_f64_lossy(f64::from(f32::read_le(c))))
                    .collect(),
                8 => raw
                    .chunks_exact(8)
                    .map(|c| T::from_f64_lossy(f64::read_le(c)))
                    .collect(),
                w => return Err(IaError::Checkpoint(format!("unsupported float width {w}"))),
            };
            if usize::from(T::WIDTH) != width {
                log::warn!("tensor '{name}' stored with {width}-byte floats, converting");
            }
            let m = Matrix::from_vec(rows, cols, values);
            match kind {
                0 => params.insert(name, m),
                1 => params.insert_buffer(name, m),
                2 => {
                    first.insert(name, m);
                }
                3 => {
                    second.insert(name, m);
                }
                k => return Err(IaError::Checkpoint(format!("unknown tensor kind {k}"))),
            }
        }
        if r.pos != bytes.len() {
            return Err(IaError::Checkpoint("trailing bytes after tensors".into()));
        }
        let moments = if first.is_empty() && second.is_empty() {
            None
        } else {
            Some(Moments { first, second })
        };
        let model = IaModel {
            config: meta.config.clone(),
            params,
        };
        let reference = IaModel::<T>::init(meta.config.clone(), 0)?;
        let want = reference.params.names();
        let have = model.params.names();
        if want != have {
            return Err(IaError::Checkpoint(
                "parameter names do not match the stored config".into(),
            ));
        }
        for (name, m) in reference.params.params() {
            let got = model.params.get(name).expect("checked above");
            if got.shape() != m.shape() {
                return Err(IaError::Checkpoint(format!(
                    "'{name}' has shape {:?}, config implies {:?}",
                    got.shape(),
                    m.shape()
                )));
            }
        }
        Ok(Checkpoint {
            meta,
            model,
            moments,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// Loads an archive; with `expected`, a differing stored config is an error.
    pub fn load(path: impl AsRef<Path>, expected: Option<&IaConfig>) -> Result<Self> {
        let ck = Self::from_bytes(&std::fs::read(path)?)?;
        if let Some(want) = expected {
            if &ck.meta.config != want {
                return Err(IaError::Checkpoint(format!(
                    "config mismatch: archive has {:?}, caller expects {:?}",
                    ck.meta.config, want
                )));
            }
        }
        Ok(ck)
    }
}
