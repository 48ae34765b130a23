//! Sample shard files: materialized training samples cached on disk,
//! either newline-delimited JSON or length-prefixed binary records.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::types::{CtrSample, MatchingSample, NewsId, UserId};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ECSH";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardFormat {
    Ndjson,
    Binary,
}

impl std::str::FromStr for ShardFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ndjson" => Ok(Self::Ndjson),
            "binary" => Ok(Self::Binary),
            other => Err(Error::Config(format!(
                "unknown shard format {other:?} (expected ndjson or binary)"
            ))),
        }
    }
}

/// Record kind tag stored in binary shard headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Matching = 0,
    Ctr = 1,
}

pub fn write_matching_shard<W: Write>(
    w: &mut W,
    samples: &[MatchingSample],
    format: ShardFormat,
) -> Result<()> {
    match format {
        ShardFormat::Ndjson => {
            for s in samples {
                serde_json::to_writer(&mut *w, s)?;
                w.write_all(b"\n")?;
            }
        }
        ShardFormat::Binary => {
            write_binary_header(w, Kind::Matching, samples.len())?;
            for s in samples {
                let mut rec = Vec::new();
                push_u32(&mut rec, s.user_id.0);
                push_ids(&mut rec, &s.history);
                push_u32(&mut rec, s.positive.0);
                push_ids(&mut rec, &s.negatives);
                write_record(w, &rec)?;
            }
        }
    }
    Ok(())
}

pub fn read_matching_shard<R: BufRead>(r: &mut R, format: ShardFormat) -> Result<Vec<MatchingSample>> {
    match format {
        ShardFormat::Ndjson => read_ndjson(r),
        ShardFormat::Binary => {
            let count = read_binary_header(r, Kind::Matching)?;
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let rec = read_record(r)?;
                let mut cur = 0usize;
                let user_id = UserId(take_u32(&rec, &mut cur)?);
                let history = take_ids(&rec, &mut cur)?;
                let positive = NewsId(take_u32(&rec, &mut cur)?);
                let negatives = take_ids(&rec, &mut cur)?;
                expect_consumed(&rec, cur)?;
                out.push(MatchingSample {
                    user_id,
                    history,
                    positive,
                    negatives,
                });
            }
            Ok(out)
        }
    }
}

pub fn write_ctr_shard<W: Write>(
    w: &mut W,
    samples: &[CtrSample],
    format: ShardFormat,
) -> Result<()> {
    match format {
        ShardFormat::Ndjson => {
            for s in samples {
                serde_json::to_writer(&mut *w, s)?;
                w.write_all(b"\n")?;
            }
        }
        ShardFormat::Binary => {
            write_binary_header(w, Kind::Ctr, samples.len())?;
            for s in samples {
                let mut rec = Vec::new();
                push_u32(&mut rec, s.user_id.0);
                push_ids(&mut rec, &s.history);
                push_u32(&mut rec, s.candidate.0);
                rec.push(s.label);
                write_record(w, &rec)?;
            }
        }
    }
    Ok(())
}

pub fn read_ctr_shard<R: BufRead>(r: &mut R, format: ShardFormat) -> Result<Vec<CtrSample>> {
    match format {
        ShardFormat::Ndjson => read_ndjson(r),
        ShardFormat::Binary => {
            let count = read_binary_header(r, Kind::Ctr)?;
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let rec = read_record(r)?;
                let mut cur = 0usize;
                let user_id = UserId(take_u32(&rec, &mut cur)?);
                let history = take_ids(&rec, &mut cur)?;
                let candidate = NewsId(take_u32(&rec, &mut cur)?);
                let label = *rec.get(cur).ok_or_else(truncated)?;
                cur += 1;
                expect_consumed(&rec, cur)?;
                out.push(CtrSample {
                    user_id,
                    history,
                    candidate,
                    label,
                });
            }
            Ok(out)
        }
    }
}

fn read_ndjson<R: BufRead, T: serde::de::DeserializeOwned>(r: &mut R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

fn write_binary_header<W: Write>(w: &mut W, kind: Kind, count: usize) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[kind as u8])?;
    w.write_all(&(count as u64).to_le_bytes())?;
    Ok(())
}

fn read_binary_header<R: Read>(r: &mut R, kind: Kind) -> Result<usize> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data("not a sample shard file (bad magic)".into()));
    }
    let mut ver = [0u8; 2];
    r.read_exact(&mut ver)?;
    let version = u16::from_le_bytes(ver);
    if version != VERSION {
        return Err(Error::Data(format!(
            "unsupported shard version {version} (expected {VERSION})"
        )));
    }
    let mut k = [0u8; 1];
    r.read_exact(&mut k)?;
    if k[0] != kind as u8 {
        return Err(Error::Data(format!(
            "shard holds record kind {} but kind {} was requested",
            k[0], kind as u8
        )));
    }
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    Ok(u64::from_le_bytes(count) as usize)
}

fn write_record<W: Write>(w: &mut W, rec: &[u8]) -> Result<()> {
    w.write_all(&(rec.len() as u32).to_le_bytes())?;
    w.write_all(rec)?;
    Ok(())
}

fn read_record<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut rec = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut rec)?;
    Ok(rec)
}

fn push_u32(rec: &mut Vec<u8>, v: u32) {
    rec.extend_from_slice(&v.to_le_bytes());
}

fn push_ids(rec: &mut Vec<u8>, ids: &[NewsId]) {
    push_u32(rec, ids.len() as u32);
    for id in ids {
        push_u32(rec, id.0);
    }
}

fn truncated() -> Error {
    Error::Data("truncated shard record".into())
}

fn take_u32(rec: &[u8], cur: &mut usize) -> Result<u32> {
    let bytes: [u8; 4] = rec
        .get(*cur..*cur + 4)
        .ok_or_else(truncated)?
        .try_into()
        .expect("4-byte slice");
    *cur += 4;
    Ok(u32::from_le_bytes(bytes))
}

fn take_ids(rec: &[u8], cur: &mut usize) -> Result<Vec<NewsId>> {
    let n = take_u32(rec, cur)? as usize;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(NewsId(take_u32(rec, cur)?));
    }
    Ok(ids)
}

fn expect_consumed(rec: &[u8], cur: usize) -> Result<()> {
    if cur != rec.len() {
        return Err(Error::Data(format!(
            "shard record has {} trailing bytes",
            rec.len() - cur
        )));
    }
    Ok(())
}
