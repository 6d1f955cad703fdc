//! Binary checkpoint format: magic `GAV1`, then a u32-length-prefixed JSON
//! header, then for every tensor a u32-length-prefixed name, a u32 rank,
//! u32 extents and raw f32 data. All integers and floats little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ParamStore};
use crate::sampler::Phase;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"GAV1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub step: usize,
    /// `None` for a freshly initialized model.
    pub phase: Option<Phase>,
    /// Free-form run configuration recorded for provenance.
    pub provenance: serde_json::Value,
    pub model: Model,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    step: usize,
    phase: Option<Phase>,
    config: TrainConfig,
    #[serde(default)]
    provenance: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: self.format_version,
            step: self.step,
            phase: self.phase,
            config: self.config.clone(),
            provenance: self.provenance.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(json.len() + 4 * self.model.num_params() + 1024);
        out.extend_from_slice(&MAGIC);
        put_u32(&mut out, json.len());
        out.extend_from_slice(&json);
        for (name, t) in &self.model.params {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.rank());
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::CheckpointVersion(magic));
        }
        let len = r.u32("header")? as usize;
        let header: Header =
            serde_json::from_slice(r.take(len, "header")?).map_err(|e| corrupt("header", e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(corrupt("header", format!("unsupported format_version {}", header.format_version)));
        }
        let mut params = ParamStore::new();
        while !r.done() {
            let n = r.u32("tensor name")? as usize;
            let name = String::from_utf8(r.take(n, "tensor name")?.to_vec())
                .map_err(|e| corrupt("tensor name", e.to_string()))?;
            let section = format!("tensor `{name}`");
            let rank = r.u32(&section)? as usize;
            if rank == 0 || rank > 8 {
                return Err(corrupt(&section, format!("rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u32(&section).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let Some(numel) = numel.filter(|n| n.saturating_mul(4) <= bytes.len()) else {
                return Err(corrupt(&section, format!("extents {shape:?}")));
            };
            let raw = r.take(numel * 4, &section)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(shape, data).map_err(|e| corrupt(&section, e.to_string()))?;
            if params.insert(name, t).is_some() {
                return Err(corrupt(&section, "duplicate tensor".into()));
            }
        }
        let model =
            Model::from_parts(header.config.model.clone(), params).map_err(|e| corrupt("tensors", e.to_string()))?;
        Ok(Checkpoint {
            format_version: header.format_version,
            config: header.config,
            step: header.step,
            phase: header.phase,
            provenance: header.provenance,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn corrupt(section: &str, msg: String) -> Error {
    Error::CheckpointCorrupt { section: section.to_string(), msg }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(corrupt(
                section,
                format!("truncated: need {n} bytes at offset {}, {} left", self.pos, self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }
}
