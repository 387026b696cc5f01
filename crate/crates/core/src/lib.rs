pub mod bench;
pub mod distance;
pub mod doc;
pub mod error;
pub mod index;
pub mod query;
pub mod split;
pub mod store;

pub use distance::{cosine_distance, Vector};
pub use doc::{DocId, Document, SearchHit, Timestamp, MICROS_PER_DAY};
pub use error::{Error, Result};
pub use index::{exact_knn, HnswGraph, HnswParams, Neighbor, NodeId};
pub use query::{ConstraintClass, QueryConstraint};
pub use split::{
    FilterBugConfig, LagDistribution, SplitParams, SplitStack, SyncConfig, WriteTrace,
};
pub use store::{Snapshot, SnapshotId, UnifiedStore};
