//! Approximate nearest-neighbor search over fixed-dimension embeddings.
//!
//! [`HnswGraph`] is a layered proximity graph with incremental insert,
//! tombstone deletion and predicate-aware search. [`exact_knn`] is the
//! brute-force reference used for recall measurement and for highly
//! selective filters.
//!
//! The graph has no internal locking: any number of concurrent `&self`
//! searches are fine, mutation needs `&mut self` and therefore exclusive
//! access. Callers that need readers and a writer at the same time must
//! coordinate externally (the unified store does).

mod exact;
mod hnsw;
mod topk;

pub use exact::exact_knn;
pub use hnsw::HnswGraph;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Identifier of a node in the index, chosen by the caller.
pub type NodeId = u64;

/// A search result: node id and its cosine distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: NodeId,
    pub distance: f64,
}

/// Construction and search parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HnswParams {
    /// Max neighbors per node on layers above 0; layer 0 allows `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Fill adjacency lists back up to capacity with neighbors the diversity
    /// heuristic rejected; overflowing lists then keep their closest links.
    /// Raises recall on data with high intrinsic dimension at some build cost.
    pub keep_pruned: bool,
    /// Filtered searches expected to accept fewer candidates than this are
    /// answered by an exact scan over the accepted nodes.
    pub exact_threshold: usize,
    /// Seed for level assignment. Not part of the serialized form: callers
    /// derive it from their own root seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 64,
            ef_search: 40,
            keep_pruned: false,
            exact_threshold: 1_000,
            seed: 0x5EED_0001,
        }
    }
}

impl HnswParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(invalid(format!("m must be >= 2, got {}", self.m)));
        }
        if self.ef_construction < self.m {
            return Err(invalid(format!(
                "ef_construction ({}) must be >= m ({})",
                self.ef_construction, self.m
            )));
        }
        if self.ef_search == 0 {
            return Err(invalid("ef_search must be >= 1"));
        }
        Ok(())
    }

    /// Multiplier of the geometric level distribution, `1 / ln(m)`.
    pub fn level_factor(&self) -> f64 {
        1.0 / (self.m as f64).ln()
    }

    pub(crate) fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

/// Fraction of exact top-k ids present in the approximate result.
pub fn recall(approx: &[Neighbor], exact: &[Neighbor]) -> f64 {
    if exact.is_empty() {
        return 1.0;
    }
    let hits = exact
        .iter()
        .filter(|e| approx.iter().any(|a| a.id == e.id))
        .count();
    hits as f64 / exact.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_are_valid() {
        HnswParams::default().validate().unwrap();
        assert!((HnswParams::default().level_factor() - 1.0 / 16f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        let p = HnswParams {
            m: 1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = HnswParams {
            m: 8,
            ef_construction: 4,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = HnswParams {
            ef_search: 0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn recall_counts_overlap() {
        let n = |id| Neighbor { id, distance: 0.0 };
        assert_eq!(recall(&[n(1), n(2)], &[n(2), n(3)]), 0.5);
        assert_eq!(recall(&[], &[]), 1.0);
    }
}
