//! Binary checkpoints: config hash, epoch, parameter blob, metric snapshot.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::nn::ParamStore;
use crate::{Error, Result};

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

const MAGIC: &[u8; 4] = b"NCKP";
const VERSION: u16 = 1;

/// A resumable training state tied to one experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub epoch: usize,
    pub val_auc: f64,
    pub val_mrr: f64,
    pub val_ndcg5: f64,
    pub params: Vec<Array2<f64>>,
}

impl Checkpoint {
    /// Capture the current parameters of `ps` alongside run position and
    /// validation metrics.
    pub fn capture(
        config_hash: &str,
        epoch: usize,
        val_auc: f64,
        val_mrr: f64,
        val_ndcg5: f64,
        ps: &ParamStore,
    ) -> Self {
        Checkpoint {
            config_hash: config_hash.to_string(),
            epoch,
            val_auc,
            val_mrr,
            val_ndcg5,
            params: ps.snapshot(),
        }
    }

    /// Load the parameter blob back into a store assembled from the same
    /// configuration. Shape mismatches mean the config hash lied.
    pub fn restore_into(&self, ps: &mut ParamStore) -> Result<()> {
        if ps.len() != self.params.len() {
            return Err(Error::Training(format!(
                "checkpoint has {} parameter arrays but the model has {}; \
                 it was saved from a different configuration",
                self.params.len(),
                ps.len()
            )));
        }
        for (i, (have, want)) in ps.values().zip(self.params.iter()).enumerate() {
            if have.dim() != want.dim() {
                return Err(Error::Training(format!(
                    "checkpoint parameter {i} is {}x{} but the model expects {}x{}",
                    want.nrows(),
                    want.ncols(),
                    have.nrows(),
                    have.ncols()
                )));
            }
        }
        ps.restore(&self.params);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let hash = self.config_hash.as_bytes();
        if hash.len() > u16::MAX as usize {
            return Err(Error::Training("config hash too long".into()));
        }
        w.write_all(&(hash.len() as u16).to_le_bytes())?;
        w.write_all(hash)?;
        w.write_all(&(self.epoch as u64).to_le_bytes())?;
        w.write_all(&self.val_auc.to_le_bytes())?;
        w.write_all(&self.val_mrr.to_le_bytes())?;
        w.write_all(&self.val_ndcg5.to_le_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&(p.nrows() as u64).to_le_bytes())?;
            w.write_all(&(p.ncols() as u64).to_le_bytes())?;
            for v in p.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Training("not a checkpoint file".into()));
        }
        let version = read_u16(&mut r)?;
        if version != VERSION {
            return Err(Error::Training(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let hash_len = read_u16(&mut r)? as usize;
        let mut hash = vec![0u8; hash_len];
        r.read_exact(&mut hash)?;
        let config_hash = String::from_utf8(hash)
            .map_err(|_| Error::Training("checkpoint hash is not utf-8".into()))?;
        let epoch = read_u64(&mut r)? as usize;
        let val_auc = read_f64(&mut r)?;
        let val_mrr = read_f64(&mut r)?;
        let val_ndcg5 = read_f64(&mut r)?;
        let n = read_u64(&mut r)? as usize;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let total = rows.checked_mul(cols).ok_or_else(|| {
                Error::Training("checkpoint parameter shape overflows".into())
            })?;
            let mut buf = Vec::with_capacity(total);
            for _ in 0..total {
                buf.push(read_f64(&mut r)?);
            }
            params.push(
                Array2::from_shape_vec((rows, cols), buf)
                    .map_err(|e| Error::Training(format!("bad checkpoint shape: {e}")))?,
            );
        }
        Ok(Checkpoint {
            config_hash,
            epoch,
            val_auc,
            val_mrr,
            val_ndcg5,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
