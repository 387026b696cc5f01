//! Line-delimited JSON corpus files.
//!
//! One object per line with fields in this order:
//! `id`, `tenant`, `category`, `updated_at` (epoch µs), `permitted_users`,
//! `embedding` (decimal floats). Content text is not stored; it is rebuilt
//! from id, tenant and category on read.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::document_content;
use crate::doc::{DocId, Document, Timestamp};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: DocId,
    tenant: String,
    category: String,
    updated_at: Timestamp,
    permitted_users: Vec<String>,
    embedding: Vec<f32>,
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for d in docs {
        let rec = Record {
            id: d.id,
            tenant: d.tenant_id.clone(),
            category: d.category.clone(),
            updated_at: d.updated_at,
            permitted_users: d.permitted_users.iter().cloned().collect(),
            embedding: d.embedding.clone(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a corpus; parse failures name the 1-based line.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Corpus {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::Corpus {
                line: i + 1,
                message: "non-finite embedding value".into(),
            });
        }
        docs.push(Document {
            id: rec.id,
            content: document_content(rec.id, &rec.tenant, &rec.category, 0),
            embedding: rec.embedding,
            tenant_id: rec.tenant,
            category: rec.category,
            updated_at: rec.updated_at,
            permitted_users: rec.permitted_users.into_iter().collect(),
            version: 0,
        });
    }
    Ok(docs)
}
