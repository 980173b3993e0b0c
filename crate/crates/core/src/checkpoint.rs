//! Flat binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"QFX1" | u64 header_len | header_len bytes of UTF-8 JSON | u64 n_params | n_params × f64
//! ```
//!
//! The JSON header records the model kind, the named parameter blocks with
//! their shapes (in flat order), the seeds and the model configuration.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QFX1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub blocks: Vec<ParamBlock>,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
        let header_len = u64::from_le_bytes(len) as usize;
        if header_len > 1 << 24 {
            return Err(bad("header too large"));
        }
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;
        r.read_exact(&mut len).map_err(|_| bad("truncated parameter count"))?;
        let n = u64::from_le_bytes(len) as usize;
        let expected: usize = header
            .blocks
            .iter()
            .map(|b| b.shape.iter().product::<usize>())
            .sum();
        if n != expected {
            return Err(Error::Checkpoint(format!(
                "parameter count {n} disagrees with header blocks ({expected})"
            )));
        }
        let mut params = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf).map_err(|_| bad("truncated parameters"))?;
            params.push(f64::from_le_bytes(buf));
        }
        Ok(Self { header, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(bytes.as_slice())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.header.kind
            )));
        }
        Ok(())
    }
}
