//! Binary dataset format.
//!
//! Line 1 is compact UTF-8 JSON
//! `{"env_name","obs_dim","act_dim","count","seed","kind","version"}` and a
//! newline. Then `count` records, all little-endian: `obs_dim` f64 (s),
//! `act_dim` f64 (a), one f64 (r), `obs_dim` f64 (s'), one u8 (done, 0 or 1).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OfflineDataset, Transition};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Field order here is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub env_name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub count: usize,
    pub seed: u64,
    pub kind: String,
    pub version: u32,
}

impl DatasetHeader {
    fn record_len(&self) -> usize {
        8 * (2 * self.obs_dim + self.act_dim + 1) + 1
    }
}

pub fn encode(dataset: &OfflineDataset) -> Result<Vec<u8>> {
    let header = DatasetHeader {
        env_name: dataset.env_name.clone(),
        obs_dim: dataset.obs_dim,
        act_dim: dataset.act_dim,
        count: dataset.len(),
        seed: dataset.seed,
        kind: dataset.kind.clone(),
        version: FORMAT_VERSION,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(header.count * header.record_len());
    for t in dataset.transitions() {
        let floats = t.s.iter().chain(&t.a).chain([&t.r]).chain(&t.s_next);
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(u8::from(t.done));
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<OfflineDataset> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing header line".into()))?;
    let header: DatasetHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {}",
            header.version
        )));
    }
    if header.obs_dim == 0 || header.act_dim == 0 {
        return Err(Error::Dimension(
            "obs_dim and act_dim must be positive".into(),
        ));
    }
    let payload = &bytes[nl + 1..];
    let rec = header.record_len();
    if payload.len() < header.count * rec {
        return Err(Error::Truncated {
            expected: header.count,
            found: payload.len() / rec,
        });
    }
    if payload.len() != header.count * rec {
        return Err(Error::Dimension(format!(
            "payload is {} bytes, header implies {}",
            payload.len(),
            header.count * rec
        )));
    }

    let read = |chunk: &[u8]| f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    let mut transitions = Vec::with_capacity(header.count);
    for (i, record) in payload.chunks_exact(rec).enumerate() {
        let mut f = record[..rec - 1].chunks_exact(8).map(read);
        let s: Vec<f64> = f.by_ref().take(header.obs_dim).collect();
        let a: Vec<f64> = f.by_ref().take(header.act_dim).collect();
        let r = f.next().unwrap_or_default();
        let s_next: Vec<f64> = f.collect();
        let done = match record[rec - 1] {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Dimension(format!(
                    "record {i}: done byte {other} is not 0 or 1"
                )))
            }
        };
        transitions.push(Transition {
            s,
            a,
            r,
            s_next,
            done,
        });
    }
    OfflineDataset::new(
        header.env_name,
        header.obs_dim,
        header.act_dim,
        transitions,
        header.seed,
        header.kind,
    )
}

pub fn save(dataset: &OfflineDataset, path: &Path) -> Result<()> {
    let bytes = encode(dataset)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<OfflineDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
