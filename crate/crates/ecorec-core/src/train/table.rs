//! The cached news-embedding lookup table and its on-disk format.
//!
//! File layout, all integers little-endian:
//! magic "NTBL" | version u16 | provenance u8 | n_rows u64 | dim u32 |
//! then per row: id_len u16 | id utf-8 bytes | dim × f32.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"NTBL";
const VERSION: u16 = 1;

/// Where the vectors came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableProvenance {
    /// Extracted by a self-supervised pretrained content encoder.
    PretrainedEncoder,
    /// Extracted directly from an external language model.
    PlmDirect,
}

impl TableProvenance {
    pub fn describe(self) -> &'static str {
        match self {
            TableProvenance::PretrainedEncoder => "pretrained-encoder",
            TableProvenance::PlmDirect => "plm-direct",
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            TableProvenance::PretrainedEncoder => 0,
            TableProvenance::PlmDirect => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(TableProvenance::PretrainedEncoder),
            1 => Ok(TableProvenance::PlmDirect),
            other => Err(Error::Table(format!("unknown provenance byte {other}"))),
        }
    }
}

/// Immutable news-id → vector map. Construction is append-only via
/// `insert`; once built (and typically serialized), entries never change —
/// recommender training reads it through frozen leaf nodes only.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub provenance: TableProvenance,
    pub dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(provenance: TableProvenance, dim: usize) -> Self {
        Self {
            provenance,
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Append one row. Duplicate ids are corpus bugs and rejected.
    pub fn insert(&mut self, id: &str, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Table(format!(
                "vector for {id} has dim {}, table holds {}",
                vector.len(),
                self.dim
            )));
        }
        if self.index.contains_key(id) {
            return Err(Error::Table(format!("duplicate news id {id} in table")));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend(vector.iter().map(|&v| v as f32));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|&r| &self.data[r * self.dim..(r + 1) * self.dim])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    /// Error naming the first id in `required` the table does not cover.
    pub fn check_covers<'a>(&self, required: impl Iterator<Item = &'a str>) -> Result<()> {
        for id in required {
            if !self.index.contains_key(id) {
                return Err(Error::Table(format!(
                    "embedding table is missing news id {id}"
                )));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.provenance.to_byte()])?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for (r, id) in self.ids.iter().enumerate() {
            let bytes = id.as_bytes();
            if bytes.len() > u16::MAX as usize {
                return Err(Error::Table(format!("news id too long: {id:.32}")));
            }
            w.write_all(&(bytes.len() as u16).to_le_bytes())?;
            w.write_all(bytes)?;
            for &v in &self.data[r * self.dim..(r + 1) * self.dim] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Table("not an embedding table file (bad magic)".into()));
        }
        let mut buf2 = [0u8; 2];
        r.read_exact(&mut buf2)?;
        let version = u16::from_le_bytes(buf2);
        if version != VERSION {
            return Err(Error::Table(format!(
                "unsupported table version {version} (expected {VERSION})"
            )));
        }
        let mut prov = [0u8; 1];
        r.read_exact(&mut prov)?;
        let provenance = TableProvenance::from_byte(prov[0])?;
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let n = u64::from_le_bytes(buf8) as usize;
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4)?;
        let dim = u32::from_le_bytes(buf4) as usize;

        let mut table = Self::new(provenance, dim);
        let mut row = vec![0f64; dim];
        for _ in 0..n {
            r.read_exact(&mut buf2)?;
            let id_len = u16::from_le_bytes(buf2) as usize;
            let mut id_bytes = vec![0u8; id_len];
            r.read_exact(&mut id_bytes)?;
            let id = String::from_utf8(id_bytes)
                .map_err(|e| Error::Table(format!("invalid id bytes: {e}")))?;
            for v in row.iter_mut() {
                r.read_exact(&mut buf4)?;
                *v = f32::from_le_bytes(buf4) as f64;
            }
            table.insert(&id, &row)?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }

    /// Serialized bytes, for bitwise-freeze assertions.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }
}
