//! Single-file store format.
//!
//! ```text
//! header  magic[8] | version u32 | dimension u32 | seed u64 | count u64
//! record  len u32 | payload[len]
//! payload id u64 | version u64 | updated_at i64 | tenant str | category str
//!         | content str | n_users u32 | user str * n_users | embedding f32 * dim
//! str     len u32 | utf-8 bytes
//! ```
//!
//! All integers and floats little-endian.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::doc::Document;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"UNIRAGDB";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 8;

pub(super) struct StoreFile {
    pub dim: u32,
    pub seed: u64,
    pub docs: Vec<Document>,
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

pub(super) fn encode_record(doc: &Document, buf: &mut Vec<u8>) {
    buf.extend_from_slice(&doc.id.to_le_bytes());
    buf.extend_from_slice(&doc.version.to_le_bytes());
    buf.extend_from_slice(&doc.updated_at.to_le_bytes());
    put_str(buf, &doc.tenant_id);
    put_str(buf, &doc.category);
    put_str(buf, &doc.content);
    buf.extend_from_slice(&(doc.permitted_users.len() as u32).to_le_bytes());
    for u in &doc.permitted_users {
        put_str(buf, u);
    }
    for v in &doc.embedding {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub(super) fn write_file(path: &Path, dim: u32, seed: u64, docs: &[Document]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(&MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&dim.to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    out.write_all(&(docs.len() as u64).to_le_bytes())?;
    let mut buf = Vec::new();
    for doc in docs {
        buf.clear();
        encode_record(doc, &mut buf);
        out.write_all(&(buf.len() as u32).to_le_bytes())?;
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|e| Error::Format(format!("invalid utf-8: {e}")))
    }
}

pub(super) fn decode_record(payload: &[u8], dim: usize) -> Result<Document> {
    let mut r = Reader {
        bytes: payload,
        pos: 0,
    };
    let id = r.u64()?;
    let version = r.u64()?;
    let updated_at = r.i64()?;
    let tenant_id = r.str()?;
    let category = r.str()?;
    let content = r.str()?;
    let n_users = r.u32()?;
    let mut permitted_users = std::collections::BTreeSet::new();
    for _ in 0..n_users {
        permitted_users.insert(r.str()?);
    }
    let raw = r.take(dim * 4)?;
    let embedding = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if r.pos != payload.len() {
        return Err(Error::Format(format!(
            "record {id} has {} trailing bytes",
            payload.len() - r.pos
        )));
    }
    Ok(Document {
        id,
        content,
        embedding,
        tenant_id,
        category,
        updated_at,
        permitted_users,
        version,
    })
}

pub(super) fn read_file(path: &Path) -> Result<StoreFile> {
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the header",
            bytes.len()
        )));
    }
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let dim = r.u32()?;
    let seed = r.u64()?;
    let count = r.u64()?;
    let mut docs = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let len = r.u32()? as usize;
        docs.push(decode_record(r.take(len)?, dim as usize)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last record",
            bytes.len() - r.pos
        )));
    }
    Ok(StoreFile { dim, seed, docs })
}
