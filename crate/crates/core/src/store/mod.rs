//! The unified data layer: documents, embeddings, metadata and access lists
//! in one engine, queried with a single multi-constraint operation.
//!
//! Every write happens under one exclusive lock and replaces the content,
//! metadata and embedding of a document together, so a reader always sees a
//! complete commit. Readers share the lock and run concurrently with each
//! other. Callers must serialize writers; concurrent writers are safe but
//! their commit order is unspecified.

mod persist;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use parking_lot::RwLock;

use crate::doc::{sort_hits, DocId, Document, SearchHit, Timestamp, MICROS_PER_DAY};
use crate::error::{invalid, Error, Result};
use crate::index::{HnswGraph, HnswParams, Neighbor};
use crate::query::{QueryConstraint, RowFilter};

pub use persist::{FORMAT_VERSION, MAGIC};

/// Commit counter value identifying a snapshot.
pub type SnapshotId = u64;

/// The committed state visible at one point: snapshot id plus the version of
/// every live document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub id: SnapshotId,
    pub versions: BTreeMap<DocId, u64>,
}

#[derive(Debug)]
struct Row {
    id: DocId,
    version: u64,
    content: String,
    tenant_id: String,
    category: String,
    updated_at: Timestamp,
    /// Sorted, deduplicated.
    permitted_users: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct DocState {
    slot: Option<u32>,
    version: u64,
}

/// Index slot ids double as node ids in the graph.
#[derive(Debug)]
struct Engine {
    index: HnswGraph,
    rows: Vec<Option<Row>>,
    docs: HashMap<DocId, DocState>,
    by_tenant: HashMap<String, BTreeSet<u32>>,
    by_time: BTreeSet<(Timestamp, u32)>,
    day_counts: BTreeMap<i64, usize>,
    category_counts: HashMap<String, usize>,
    user_counts: HashMap<String, usize>,
}

pub struct UnifiedStore {
    dim: usize,
    params: HnswParams,
    engine: RwLock<Engine>,
    commit: AtomicU64,
    closed: AtomicBool,
}

impl std::fmt::Debug for UnifiedStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnifiedStore")
            .field("dim", &self.dim)
            .field("documents", &self.len())
            .field("snapshot", &self.commit.load(Ordering::Acquire))
            .finish()
    }
}

fn bump(map: &mut HashMap<String, usize>, key: &str) {
    *map.entry(key.to_owned()).or_default() += 1;
}

fn drop_one(map: &mut HashMap<String, usize>, key: &str) {
    if let Some(n) = map.get_mut(key) {
        *n -= 1;
        if *n == 0 {
            map.remove(key);
        }
    }
}

impl Engine {
    fn link(&mut self, slot: u32, row: &Row) {
        self.by_tenant
            .entry(row.tenant_id.clone())
            .or_default()
            .insert(slot);
        self.by_time.insert((row.updated_at, slot));
        *self
            .day_counts
            .entry(row.updated_at.div_euclid(MICROS_PER_DAY))
            .or_default() += 1;
        bump(&mut self.category_counts, &row.category);
        for u in &row.permitted_users {
            bump(&mut self.user_counts, u);
        }
    }

    fn unlink(&mut self, slot: u32) {
        let Some(row) = self.rows[slot as usize].take() else {
            return;
        };
        if let Some(set) = self.by_tenant.get_mut(&row.tenant_id) {
            set.remove(&slot);
            if set.is_empty() {
                self.by_tenant.remove(&row.tenant_id);
            }
        }
        self.by_time.remove(&(row.updated_at, slot));
        let day = row.updated_at.div_euclid(MICROS_PER_DAY);
        if let Some(n) = self.day_counts.get_mut(&day) {
            *n -= 1;
            if *n == 0 {
                self.day_counts.remove(&day);
            }
        }
        drop_one(&mut self.category_counts, &row.category);
        for u in &row.permitted_users {
            drop_one(&mut self.user_counts, u);
        }
    }

    fn row(&self, slot: u64) -> &Row {
        self.rows[slot as usize]
            .as_ref()
            .expect("live slot has a row")
    }

    /// Estimated number of rows updated strictly after `cutoff`, from the
    /// per-day histogram with the boundary day pro-rated.
    fn estimate_after(&self, cutoff: Timestamp) -> f64 {
        let day = cutoff.div_euclid(MICROS_PER_DAY);
        let after: usize = self.day_counts.range(day + 1..).map(|(_, n)| n).sum();
        let partial = self.day_counts.get(&day).copied().unwrap_or(0) as f64;
        let frac = 1.0 - cutoff.rem_euclid(MICROS_PER_DAY) as f64 / MICROS_PER_DAY as f64;
        after as f64 + partial * frac
    }

    /// Estimated accepted rows, assuming independent filters.
    fn estimate_accepted(&self, filter: &RowFilter<'_>) -> f64 {
        let live = self.index.len() as f64;
        if live == 0.0 {
            return 0.0;
        }
        let mut est = live;
        if let Some(t) = filter.tenant {
            est *= self.by_tenant.get(t).map_or(0, |s| s.len()) as f64 / live;
        }
        if let Some(cutoff) = filter.cutoff {
            est *= self.estimate_after(cutoff) / live;
        }
        if let Some(cats) = filter.categories {
            let distinct: BTreeSet<&String> = cats.iter().collect();
            let n: usize = distinct
                .into_iter()
                .map(|c| self.category_counts.get(c).copied().unwrap_or(0))
                .sum();
            est *= n as f64 / live;
        }
        if let Some(u) = filter.user {
            est *= self.user_counts.get(u).copied().unwrap_or(0) as f64 / live;
        }
        est
    }

    fn accepts(&self, filter: &RowFilter<'_>, slot: u64) -> bool {
        let row = self.row(slot);
        filter.accepts(
            &row.tenant_id,
            &row.category,
            row.updated_at,
            &row.permitted_users,
        )
    }

    /// Exact ranking over rows reachable from the narrowest posting list.
    fn exact(&self, query: &[f32], k: usize, filter: &RowFilter<'_>) -> Result<Vec<Neighbor>> {
        let tenant_rows = filter.tenant.map(|t| self.by_tenant.get(t));
        let recent = filter.cutoff.map(|c| self.estimate_after(c));
        let accepted = |slot: &u32| self.accepts(filter, *slot as u64);
        let use_time = match (tenant_rows, recent) {
            (Some(rows), Some(est)) => est < rows.map_or(0, |s| s.len()) as f64,
            (None, Some(_)) => true,
            _ => false,
        };
        if let (Some(rows), false) = (tenant_rows, use_time) {
            let Some(rows) = rows else {
                return Ok(Vec::new());
            };
            let slots = rows.iter().filter(|s| accepted(s)).map(|&s| s as u64);
            return self.index.rank_ids(query, k, slots);
        }
        if let (true, Some(cutoff)) = (use_time, filter.cutoff) {
            let slots = self
                .by_time
                .range((cutoff.saturating_add(1), 0)..)
                .map(|(_, s)| s)
                .filter(|s| accepted(s))
                .map(|&s| s as u64);
            return self.index.rank_ids(query, k, slots);
        }
        Ok(self.index.scan(query, k, |slot| self.accepts(filter, slot)))
    }

    fn search(
        &self,
        c: &QueryConstraint,
        now: Timestamp,
        ef_search: usize,
    ) -> Result<Vec<SearchHit>> {
        let filter = c.filter(now);
        let unfiltered = filter.tenant.is_none()
            && filter.cutoff.is_none()
            && filter.categories.is_none()
            && filter.user.is_none();
        let ef = ef_search.max(c.k);
        let neighbors = if unfiltered {
            self.index.search(&c.query_embedding, c.k, ef)?
        } else {
            let est = self.estimate_accepted(&filter);
            if est < self.index.params().exact_threshold as f64 {
                self.exact(&c.query_embedding, c.k, &filter)?
            } else {
                self.index.filtered_search(
                    &c.query_embedding,
                    c.k,
                    ef,
                    |slot| self.accepts(&filter, slot),
                    Some(est.ceil() as usize),
                )?
            }
        };
        let mut hits: Vec<SearchHit> = neighbors
            .into_iter()
            .map(|n| {
                let row = self.row(n.id);
                SearchHit {
                    document_id: row.id,
                    content: row.content.clone(),
                    distance: n.distance,
                    tenant_id: row.tenant_id.clone(),
                    category: row.category.clone(),
                    updated_at: row.updated_at,
                    content_version: row.version,
                    // the ranked vector lives in the same slot as the row
                    embedding_version: row.version,
                }
            })
            .collect();
        sort_hits(&mut hits);
        Ok(hits)
    }
}

impl UnifiedStore {
    pub fn open(dim: usize, params: HnswParams) -> Result<Self> {
        let index = HnswGraph::new(dim, params)?;
        Ok(Self {
            dim,
            params,
            engine: RwLock::new(Engine {
                index,
                rows: Vec::new(),
                docs: HashMap::new(),
                by_tenant: HashMap::new(),
                by_time: BTreeSet::new(),
                day_counts: BTreeMap::new(),
                category_counts: HashMap::new(),
                user_counts: HashMap::new(),
            }),
            commit: AtomicU64::new(0),
            closed: AtomicBool::new(false),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    /// Number of live documents.
    pub fn len(&self) -> usize {
        self.engine.read().index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn ensure_open(&self) -> Result<()> {
        if self.closed.load(Ordering::Acquire) {
            Err(Error::StoreClosed)
        } else {
            Ok(())
        }
    }

    /// Rejects further reads and writes.
    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
    }

    /// Inserts or replaces a document in one commit. The stored version is
    /// the previous version of this id plus one, surviving deletes.
    pub fn upsert(&self, doc: Document) -> Result<SnapshotId> {
        doc.validate(self.dim)?;
        let mut engine = self.engine.write();
        self.ensure_open()?;
        let state = engine.docs.get(&doc.id).copied();
        let version = state.map_or(0, |s| s.version) + 1;
        self.write_row(&mut engine, doc, version, state.and_then(|s| s.slot))
    }

    fn write_row(
        &self,
        engine: &mut Engine,
        doc: Document,
        version: u64,
        old_slot: Option<u32>,
    ) -> Result<SnapshotId> {
        let slot = u32::try_from(engine.rows.len()).map_err(|_| invalid("store is full"))?;
        // embedding was validated, so the insert below cannot fail
        engine.index.insert(slot as u64, &doc.embedding)?;
        if let Some(old) = old_slot {
            engine.index.remove(old as u64)?;
            engine.unlink(old);
        }
        let mut permitted_users: Vec<String> = doc.permitted_users.into_iter().collect();
        permitted_users.dedup();
        let row = Row {
            id: doc.id,
            version,
            content: doc.content,
            tenant_id: doc.tenant_id,
            category: doc.category,
            updated_at: doc.updated_at,
            permitted_users,
        };
        engine.link(slot, &row);
        engine.rows.push(Some(row));
        engine.docs.insert(
            doc.id,
            DocState {
                slot: Some(slot),
                version,
            },
        );
        Ok(self.commit.fetch_add(1, Ordering::AcqRel) + 1)
    }

    pub fn delete(&self, id: DocId) -> Result<SnapshotId> {
        let mut engine = self.engine.write();
        self.ensure_open()?;
        let state = match engine.docs.get(&id) {
            Some(DocState {
                slot: Some(slot),
                version,
            }) => (*slot, *version),
            _ => return Err(Error::UnknownId(id)),
        };
        engine.index.remove(state.0 as u64)?;
        engine.unlink(state.0);
        engine.docs.insert(
            id,
            DocState {
                slot: None,
                version: state.1,
            },
        );
        Ok(self.commit.fetch_add(1, Ordering::AcqRel) + 1)
    }

    /// Runs a multi-constraint query at the store's default `ef_search`.
    /// `now` anchors the freshness horizon.
    pub fn query(&self, constraint: &QueryConstraint, now: Timestamp) -> Result<Vec<SearchHit>> {
        self.query_with_ef(constraint, now, self.params.ef_search)
    }

    pub fn query_with_ef(
        &self,
        constraint: &QueryConstraint,
        now: Timestamp,
        ef_search: usize,
    ) -> Result<Vec<SearchHit>> {
        self.ensure_open()?;
        constraint.validate()?;
        if constraint.query_embedding.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: constraint.query_embedding.len(),
            });
        }
        self.engine.read().search(constraint, now, ef_search)
    }

    pub fn get(&self, id: DocId) -> Option<Document> {
        let engine = self.engine.read();
        let slot = engine.docs.get(&id)?.slot?;
        Some(Self::document_at(&engine, slot))
    }

    fn document_at(engine: &Engine, slot: u32) -> Document {
        let row = engine.row(slot as u64);
        Document {
            id: row.id,
            content: row.content.clone(),
            embedding: engine
                .index
                .vector(slot as u64)
                .expect("live slot")
                .to_vec(),
            tenant_id: row.tenant_id.clone(),
            category: row.category.clone(),
            updated_at: row.updated_at,
            permitted_users: row.permitted_users.iter().cloned().collect(),
            version: row.version,
        }
    }

    /// Live documents in insertion order.
    pub fn documents(&self) -> Vec<Document> {
        let engine = self.engine.read();
        (0..engine.rows.len() as u32)
            .filter(|&s| engine.rows[s as usize].is_some())
            .map(|s| Self::document_at(&engine, s))
            .collect()
    }

    pub fn current_snapshot(&self) -> Result<SnapshotId> {
        self.ensure_open()?;
        Ok(self.commit.load(Ordering::Acquire))
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        self.ensure_open()?;
        let engine = self.engine.read();
        let versions = engine
            .docs
            .iter()
            .filter(|(_, s)| s.slot.is_some())
            .map(|(&id, s)| (id, s.version))
            .collect();
        Ok(Snapshot {
            id: self.commit.load(Ordering::Acquire),
            versions,
        })
    }

    /// Writes every live document; the index is rebuilt on load.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.ensure_open()?;
        let docs = self.documents();
        persist::write_file(path.as_ref(), self.dim as u32, self.params.seed, &docs)
    }

    /// Loads a saved store with default index parameters and the saved seed.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with_params(path, HnswParams::default())
    }

    /// Loads a saved store; `params.seed` is replaced by the saved seed.
    pub fn load_with_params(path: impl AsRef<Path>, params: HnswParams) -> Result<Self> {
        let file = persist::read_file(path.as_ref())?;
        let store = Self::open(
            file.dim as usize,
            HnswParams {
                seed: file.seed,
                ..params
            },
        )?;
        {
            let mut engine = store.engine.write();
            for doc in file.docs {
                doc.validate(store.dim)?;
                if engine.docs.get(&doc.id).is_some_and(|s| s.slot.is_some()) {
                    return Err(Error::Format(format!("duplicate document id {}", doc.id)));
                }
                let version = doc.version;
                store.write_row(&mut engine, doc, version, None)?;
            }
        }
        Ok(store)
    }
}
