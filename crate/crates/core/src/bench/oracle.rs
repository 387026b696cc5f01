//! Brute-force reference answers, written independently of the store's
//! filter and distance code.

use crate::doc::{DocId, Document, SearchHit, Timestamp};
use crate::query::QueryConstraint;

/// Whether `doc` satisfies every predicate of `c` at time `now`.
pub fn satisfies(doc: &Document, c: &QueryConstraint, now: Timestamp) -> bool {
    let tenant_ok = c.tenant_id.as_ref().is_none_or(|t| *t == doc.tenant_id);
    let fresh_ok = c.max_age.is_none_or(|age| doc.updated_at > now - age);
    let category_ok = c
        .categories
        .as_ref()
        .is_none_or(|cs| cs.contains(&doc.category));
    let user_ok = c
        .user_id
        .as_ref()
        .is_none_or(|u| doc.permitted_users.contains(u));
    tenant_ok && fresh_ok && category_ok && user_ok
}

/// Hit-level check against the source documents.
pub fn hit_satisfies(
    hit: &SearchHit,
    docs: &[Document],
    c: &QueryConstraint,
    now: Timestamp,
) -> bool {
    docs.iter()
        .find(|d| d.id == hit.document_id)
        .is_some_and(|d| d.tenant_id == hit.tenant_id && satisfies(d, c, now))
}

fn cosine_distance_f64(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 1.0;
    }
    (1.0 - ab / (aa.sqrt() * bb.sqrt())).clamp(0.0, 2.0)
}

/// Exact top-k ids among accepted documents, ties by id.
pub fn top_k(docs: &[Document], c: &QueryConstraint, now: Timestamp) -> Vec<(DocId, f64)> {
    let mut scored: Vec<(DocId, f64)> = docs
        .iter()
        .filter(|d| satisfies(d, c, now))
        .map(|d| (d.id, cosine_distance_f64(&c.query_embedding, &d.embedding)))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(c.k);
    scored
}

/// Fraction of the oracle's ids present in `hits`; 1.0 when the oracle is
/// empty.
pub fn recall_at_k(hits: &[SearchHit], truth: &[(DocId, f64)]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let found = truth
        .iter()
        .filter(|(id, _)| hits.iter().any(|h| h.document_id == *id))
        .count();
    found as f64 / truth.len() as f64
}
