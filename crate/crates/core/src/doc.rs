use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type DocId = u64;

/// Epoch microseconds, UTC.
pub type Timestamp = i64;

pub const MICROS_PER_DAY: i64 = 86_400_000_000;

/// The unit of storage: content, embedding and access metadata together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: DocId,
    pub content: String,
    pub embedding: Vec<f32>,
    pub tenant_id: String,
    pub category: String,
    pub updated_at: Timestamp,
    pub permitted_users: BTreeSet<String>,
    /// Assigned by the store on write; ignored on input.
    #[serde(default)]
    pub version: u64,
}

impl Document {
    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        if self.embedding.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: self.embedding.len(),
            });
        }
        if self.embedding.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "document {} has a non-finite embedding",
                self.id
            )));
        }
        if self.tenant_id.is_empty() {
            return Err(invalid(format!(
                "document {} has an empty tenant_id",
                self.id
            )));
        }
        if self.category.is_empty() {
            return Err(invalid(format!(
                "document {} has an empty category",
                self.id
            )));
        }
        Ok(())
    }
}

/// One ranked result.
///
/// `content_version` is the version of the row the content and metadata came
/// from; `embedding_version` is the version of the vector that was ranked.
/// They differ only when a reader observes a torn write.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub document_id: DocId,
    pub content: String,
    pub distance: f64,
    pub tenant_id: String,
    pub category: String,
    pub updated_at: Timestamp,
    pub content_version: u64,
    pub embedding_version: u64,
}

impl SearchHit {
    pub fn is_torn(&self) -> bool {
        self.content_version != self.embedding_version
    }
}

/// Sorts ascending by distance, ties by ascending document id.
pub(crate) fn sort_hits(hits: &mut [SearchHit]) {
    hits.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.document_id.cmp(&b.document_id))
    });
}
