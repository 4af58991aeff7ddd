//! `.sessions.bin`: the cached output of preprocessing.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SBR1"  u32 version  u32 dataset code
//! u32 M   M × (u32 byte length, UTF-8 item id)       vocabulary 1..=M
//! u32 n   n × (u32 id, u32 len, i64 end_time, len × u32 item)   train
//! u32 n   ...                                                  test
//! ```

use std::fs;
use std::path::Path;

use sbr_core::data::{Dataset, Session, Vocabulary};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::preprocess::Preprocessed;

pub const MAGIC: &[u8; 4] = b"SBR1";
pub const VERSION: u32 = 1;

pub fn encode(data: &Preprocessed) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, data.dataset.code());
    put_u32(&mut out, data.vocab.len() as u32);
    for name in data.vocab.names() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
    }
    for split in [&data.train, &data.test] {
        put_u32(&mut out, split.len() as u32);
        for s in split.iter() {
            put_u32(&mut out, s.id);
            put_u32(&mut out, s.items.len() as u32);
            out.extend_from_slice(&s.end_time.to_le_bytes());
            for &i in &s.items {
                put_u32(&mut out, i);
            }
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn i64(&mut self) -> Option<i64> {
        self.take(8).map(|b| i64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<Preprocessed> {
    let bad = |msg: &str| Error::format(origin, msg);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(bad("not a sessions file (bad magic)"));
    }
    let version = r.u32().ok_or_else(|| bad("truncated header"))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported sessions file version {version}")));
    }
    let code = r.u32().ok_or_else(|| bad("truncated header"))?;
    let dataset = Dataset::from_code(code).ok_or_else(|| bad(&format!("unknown dataset code {code}")))?;
    let m = r.u32().ok_or_else(|| bad("truncated vocabulary"))? as usize;
    let mut names = Vec::with_capacity(m.min(bytes.len()));
    for _ in 0..m {
        let len = r.u32().ok_or_else(|| bad("truncated vocabulary"))? as usize;
        let raw = r.take(len).ok_or_else(|| bad("truncated vocabulary"))?;
        let name = std::str::from_utf8(raw).map_err(|_| bad("item id is not UTF-8"))?;
        names.push(name.to_owned());
    }
    let vocab = Vocabulary::from_names(names).map_err(|e| bad(&e.to_string()))?;
    let mut splits = Vec::with_capacity(2);
    for _ in 0..2 {
        let n = r.u32().ok_or_else(|| bad("truncated session table"))? as usize;
        let mut sessions = Vec::with_capacity(n.min(bytes.len() / 16));
        for _ in 0..n {
            let id = r.u32().ok_or_else(|| bad("truncated session"))?;
            let len = r.u32().ok_or_else(|| bad("truncated session"))? as usize;
            let end_time = r.i64().ok_or_else(|| bad("truncated session"))?;
            let mut items = Vec::with_capacity(len.min(bytes.len() / 4));
            for _ in 0..len {
                let i = r.u32().ok_or_else(|| bad("truncated session"))?;
                if i == 0 || i as usize > m {
                    return Err(bad(&format!("item index {i} outside 1..={m}")));
                }
                items.push(i);
            }
            if items.len() < 2 {
                return Err(bad("session shorter than two clicks"));
            }
            sessions.push(Session { id, items, end_time });
        }
        splits.push(sessions);
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let test = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    Ok(Preprocessed {
        dataset,
        vocab,
        train,
        test,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write(path: &Path, data: &Preprocessed) -> Result<()> {
    fs::write(path, encode(data)).map_err(Error::io(path))
}

/// The decoded file and the SHA-256 of its bytes.
pub fn read(path: &Path) -> Result<(Preprocessed, String)> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let data = decode(&bytes, path)?;
    Ok((data, sha256_hex(&bytes)))
}
