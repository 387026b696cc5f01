//! In-process model of a split retrieval stack: a vector store and a separate
//! metadata store, kept in sync by application code.
//!
//! Writes commit metadata first and the vector later, after a sampled
//! propagation lag on a logical clock. Between the two commits a query sees
//! the new metadata joined with the old (or no) vector. Queries run in three
//! phases: unfiltered vector top-N, per-candidate metadata lookup, then an
//! application-layer filter and merge. The tenant predicate in that last
//! phase can be skipped with a configurable per-query probability.
//!
//! Single-threaded; nothing here synchronizes.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::doc::{sort_hits, DocId, Document, SearchHit, Timestamp};
use crate::error::{invalid, Error, Result};
use crate::index::{HnswGraph, HnswParams};
use crate::query::QueryConstraint;

/// Distribution of the delay between a metadata commit and its vector commit,
/// in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LagDistribution {
    Fixed {
        micros: u64,
    },
    /// Inclusive on both ends.
    Uniform {
        lo: u64,
        hi: u64,
    },
    Exponential {
        mean: u64,
    },
}

impl LagDistribution {
    pub fn mean_micros(&self) -> f64 {
        match *self {
            LagDistribution::Fixed { micros } => micros as f64,
            LagDistribution::Uniform { lo, hi } => (lo as f64 + hi as f64) / 2.0,
            LagDistribution::Exponential { mean } => mean as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if let LagDistribution::Uniform { lo, hi } = *self {
            if lo > hi {
                return Err(invalid(format!("uniform lag has lo {lo} > hi {hi}")));
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            LagDistribution::Fixed { micros } => micros,
            LagDistribution::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            LagDistribution::Exponential { mean } => {
                if mean == 0 {
                    return 0;
                }
                let exp = Exp::new(1.0 / mean as f64).expect("positive rate");
                let x: f64 = exp.sample(rng);
                x.round() as u64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    pub lag: LagDistribution,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            lag: LagDistribution::Fixed { micros: 3_540 },
            seed: 0x5EED_0002,
        }
    }
}

/// Per-query probability that the application-layer tenant filter is skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterBugConfig {
    pub bypass_probability: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for FilterBugConfig {
    fn default() -> Self {
        Self {
            bypass_probability: 0.0,
            seed: 0x5EED_0003,
        }
    }
}

impl FilterBugConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bypass_probability) {
            return Err(invalid(format!(
                "bypass_probability must be in [0, 1], got {}",
                self.bypass_probability
            )));
        }
        Ok(())
    }
}

/// Application-side fetch policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitParams {
    /// First round trip asks the vector store for `k * overfetch` candidates.
    pub overfetch: usize,
    /// Candidate count doubles per round trip while fewer than `k` survive
    /// filtering, up to this cap.
    pub max_fetch: usize,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            overfetch: 4,
            max_fetch: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteTrace {
    pub document_id: DocId,
    pub t_meta_commit: Timestamp,
    pub t_vector_commit: Timestamp,
}

impl WriteTrace {
    /// Inconsistency window in microseconds.
    pub fn window(&self) -> i64 {
        self.t_vector_commit - self.t_meta_commit
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTimings {
    pub vector_search: Duration,
    pub metadata_lookup: Duration,
    pub merge: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.vector_search + self.metadata_lookup + self.merge
    }
}

#[derive(Debug, Clone)]
pub struct SplitQueryOutcome {
    pub hits: Vec<SearchHit>,
    pub timings: PhaseTimings,
    /// The tenant predicate was skipped for this query.
    pub bypassed: bool,
    pub round_trips: u32,
    pub candidates_fetched: usize,
}

#[derive(Debug, Clone)]
struct MetaRow {
    version: u64,
    content: String,
    tenant_id: String,
    category: String,
    updated_at: Timestamp,
    permitted_users: Vec<String>,
}

#[derive(Debug)]
struct PendingVector {
    at: Timestamp,
    seq: u64,
    id: DocId,
    version: u64,
    embedding: Vec<f32>,
}

impl PartialEq for PendingVector {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for PendingVector {}
impl PartialOrd for PendingVector {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PendingVector {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

#[derive(Debug)]
pub struct SplitStack {
    dim: usize,
    params: HnswParams,
    split: SplitParams,
    sync: SyncConfig,
    bug: FilterBugConfig,
    vectors: HnswGraph,
    vector_versions: HashMap<DocId, u64>,
    /// Rows are shared with readers rather than copied out, matching how the
    /// unified store reads rows in place.
    metadata: HashMap<DocId, Arc<MetaRow>>,
    pending: BinaryHeap<Reverse<PendingVector>>,
    drained_to: Option<Timestamp>,
    lag_rng: ChaCha8Rng,
    bug_rng: ChaCha8Rng,
    seq: u64,
}

impl SplitStack {
    pub fn open(
        dim: usize,
        params: HnswParams,
        sync: SyncConfig,
        bug: FilterBugConfig,
    ) -> Result<Self> {
        Self::open_with(dim, params, sync, bug, SplitParams::default())
    }

    pub fn open_with(
        dim: usize,
        params: HnswParams,
        sync: SyncConfig,
        bug: FilterBugConfig,
        split: SplitParams,
    ) -> Result<Self> {
        sync.lag.validate()?;
        bug.validate()?;
        if split.overfetch == 0 || split.max_fetch == 0 {
            return Err(invalid("overfetch and max_fetch must be >= 1"));
        }
        Ok(Self {
            dim,
            params,
            split,
            sync,
            bug,
            vectors: HnswGraph::new(dim, params)?,
            vector_versions: HashMap::new(),
            metadata: HashMap::new(),
            pending: BinaryHeap::new(),
            drained_to: None,
            lag_rng: ChaCha8Rng::seed_from_u64(sync.seed),
            bug_rng: ChaCha8Rng::seed_from_u64(bug.seed),
            seq: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn sync_config(&self) -> &SyncConfig {
        &self.sync
    }

    /// Replaces the filter bug and restarts its random stream.
    pub fn set_filter_bug(&mut self, bug: FilterBugConfig) -> Result<()> {
        bug.validate()?;
        self.bug = bug;
        self.bug_rng = ChaCha8Rng::seed_from_u64(bug.seed);
        Ok(())
    }

    /// Documents with committed metadata.
    pub fn len(&self) -> usize {
        self.metadata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metadata.is_empty()
    }

    /// Logical time up to which vector commits have been applied.
    pub fn drained_to(&self) -> Option<Timestamp> {
        self.drained_to
    }

    /// Vector commits scheduled but not yet applied.
    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Commits metadata at `now` and schedules the vector commit after a
    /// sampled lag. A zero lag commits the vector immediately.
    pub fn upsert_split(&mut self, doc: Document, now: Timestamp) -> Result<WriteTrace> {
        doc.validate(self.dim)?;
        let version = self.metadata.get(&doc.id).map_or(0, |r| r.version) + 1;
        let mut permitted_users: Vec<String> = doc.permitted_users.into_iter().collect();
        permitted_users.dedup();
        self.metadata.insert(
            doc.id,
            Arc::new(MetaRow {
                version,
                content: doc.content,
                tenant_id: doc.tenant_id,
                category: doc.category,
                updated_at: doc.updated_at,
                permitted_users,
            }),
        );

        let lag = self.sync.lag.sample(&mut self.lag_rng);
        let at = now.saturating_add(lag as i64);
        let pending = PendingVector {
            at,
            seq: self.seq,
            id: doc.id,
            version,
            embedding: doc.embedding,
        };
        self.seq += 1;
        if lag == 0 {
            self.apply(pending)?;
        } else {
            self.pending.push(Reverse(pending));
        }
        Ok(WriteTrace {
            document_id: doc.id,
            t_meta_commit: now,
            t_vector_commit: at,
        })
    }

    /// Applies a vector commit unless a newer version already landed.
    fn apply(&mut self, p: PendingVector) -> Result<bool> {
        if self
            .vector_versions
            .get(&p.id)
            .is_some_and(|&v| v >= p.version)
        {
            return Ok(false);
        }
        if self.vectors.contains(p.id) {
            self.vectors.remove(p.id)?;
        }
        self.vectors.insert(p.id, &p.embedding)?;
        self.vector_versions.insert(p.id, p.version);
        Ok(true)
    }

    /// Makes every vector commit scheduled at or before `until` visible.
    pub fn drain(&mut self, until: Timestamp) -> Result<usize> {
        if let Some(prev) = self.drained_to {
            if until < prev {
                return Err(Error::TimeRegression {
                    requested: until,
                    drained: prev,
                });
            }
        }
        let mut applied = 0;
        while self.pending.peek().is_some_and(|Reverse(p)| p.at <= until) {
            let Reverse(p) = self.pending.pop().expect("peeked");
            if self.apply(p)? {
                applied += 1;
            }
        }
        self.drained_to = Some(until);
        Ok(applied)
    }

    /// Applies every scheduled vector commit and advances the clock to the
    /// latest of them.
    pub fn drain_all(&mut self) -> Result<usize> {
        match self.pending.iter().map(|Reverse(p)| p.at).max() {
            Some(last) => self.drain(last.max(self.drained_to.unwrap_or(last))),
            None => Ok(0),
        }
    }

    pub fn query_split(
        &mut self,
        constraint: &QueryConstraint,
        now: Timestamp,
    ) -> Result<Vec<SearchHit>> {
        Ok(self.query_split_traced(constraint, now)?.hits)
    }

    pub fn query_split_traced(
        &mut self,
        constraint: &QueryConstraint,
        now: Timestamp,
    ) -> Result<SplitQueryOutcome> {
        constraint.validate()?;
        if constraint.query_embedding.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: constraint.query_embedding.len(),
            });
        }
        let k = constraint.k;
        let mut filter = constraint.filter(now);
        let bypassed = filter.tenant.is_some()
            && self.bug.bypass_probability > 0.0
            && self.bug_rng.gen_bool(self.bug.bypass_probability);
        if bypassed {
            filter = filter.without_tenant();
        }

        let mut outcome = SplitQueryOutcome {
            hits: Vec::new(),
            timings: PhaseTimings::default(),
            bypassed,
            round_trips: 0,
            candidates_fetched: 0,
        };
        let live = self.vectors.len();
        if live == 0 {
            return Ok(outcome);
        }

        let cap = self.split.max_fetch.max(k);
        let mut fetch = k.saturating_mul(self.split.overfetch).clamp(k, cap);
        let mut rows: HashMap<DocId, Arc<MetaRow>> = HashMap::new();
        loop {
            outcome.round_trips += 1;

            let t = Instant::now();
            let ef = self.params.ef_search.max(fetch);
            let candidates = self
                .vectors
                .search(&constraint.query_embedding, fetch, ef)?;
            outcome.timings.vector_search += t.elapsed();
            outcome.candidates_fetched = candidates.len();

            let t = Instant::now();
            for c in &candidates {
                if let std::collections::hash_map::Entry::Vacant(e) = rows.entry(c.id) {
                    if let Some(row) = self.metadata.get(&c.id) {
                        e.insert(Arc::clone(row));
                    }
                }
            }
            outcome.timings.metadata_lookup += t.elapsed();

            let t = Instant::now();
            let mut hits: Vec<SearchHit> = candidates
                .iter()
                .filter_map(|c| {
                    let row = rows.get(&c.id)?;
                    if !filter.accepts(
                        &row.tenant_id,
                        &row.category,
                        row.updated_at,
                        &row.permitted_users,
                    ) {
                        return None;
                    }
                    Some(SearchHit {
                        document_id: c.id,
                        content: row.content.clone(),
                        distance: c.distance,
                        tenant_id: row.tenant_id.clone(),
                        category: row.category.clone(),
                        updated_at: row.updated_at,
                        content_version: row.version,
                        embedding_version: self.vector_versions.get(&c.id).copied().unwrap_or(0),
                    })
                })
                .collect();
            sort_hits(&mut hits);
            let done = hits.len() >= k || fetch >= live || fetch >= cap;
            if done {
                hits.truncate(k);
                outcome.hits = hits;
            }
            outcome.timings.merge += t.elapsed();
            if done {
                return Ok(outcome);
            }
            fetch = fetch.saturating_mul(2).min(cap);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: DocId, emb: Vec<f32>, tenant: &str) -> Document {
        Document {
            id,
            content: format!("doc {id}"),
            embedding: emb,
            tenant_id: tenant.into(),
            category: "legal".into(),
            updated_at: 0,
            permitted_users: ["u".to_string()].into(),
            version: 0,
        }
    }

    fn stack(lag: LagDistribution, p: f64) -> SplitStack {
        SplitStack::open(
            2,
            HnswParams::default(),
            SyncConfig { lag, seed: 1 },
            FilterBugConfig {
                bypass_probability: p,
                seed: 2,
            },
        )
        .unwrap()
    }

    #[test]
    fn open_validates_configs() {
        let ok = SplitStack::open(
            4,
            HnswParams::default(),
            SyncConfig::default(),
            FilterBugConfig::default(),
        );
        assert!(ok.unwrap().is_empty());
        let bad_bug = FilterBugConfig {
            bypass_probability: 1.5,
            seed: 0,
        };
        assert!(
            SplitStack::open(4, HnswParams::default(), SyncConfig::default(), bad_bug).is_err()
        );
        let bad_lag = SyncConfig {
            lag: LagDistribution::Uniform { lo: 5, hi: 1 },
            seed: 0,
        };
        assert!(SplitStack::open(
            4,
            HnswParams::default(),
            bad_lag,
            FilterBugConfig::default()
        )
        .is_err());
    }

    #[test]
    fn fixed_lag_window_and_drain_boundary() {
        let mut s = stack(LagDistribution::Fixed { micros: 3_540 }, 0.0);
        let t0 = 1_000_000;
        let trace = s.upsert_split(doc(1, vec![1.0, 0.0], "t"), t0).unwrap();
        assert_eq!(trace.window(), 3_540);
        assert_eq!(s.drain(t0 + 3_539).unwrap(), 0);
        assert_eq!(s.drain(t0 + 3_540).unwrap(), 1);
        assert_eq!(s.drain(t0 + 3_540).unwrap(), 0);
        assert!(matches!(s.drain(t0), Err(Error::TimeRegression { .. })));
    }

    #[test]
    fn zero_lag_is_immediately_visible() {
        let mut s = stack(LagDistribution::Fixed { micros: 0 }, 0.0);
        let trace = s.upsert_split(doc(1, vec![1.0, 0.0], "t"), 5).unwrap();
        assert_eq!(trace.window(), 0);
        let hits = s
            .query_split(&QueryConstraint::pure(vec![1.0, 0.0], 1), 5)
            .unwrap();
        assert_eq!(hits.len(), 1);
        assert!(!hits[0].is_torn());
    }

    #[test]
    fn in_window_read_is_torn_then_heals() {
        let mut s = stack(LagDistribution::Fixed { micros: 100 }, 0.0);
        s.upsert_split(doc(1, vec![1.0, 0.0], "t"), 0).unwrap();
        s.drain(100).unwrap();
        let mut v2 = doc(1, vec![0.0, 1.0], "t");
        v2.content = "v2".into();
        s.upsert_split(v2, 200).unwrap();

        // old vector still served, new metadata already visible
        let hits = s
            .query_split(&QueryConstraint::pure(vec![1.0, 0.0], 1), 250)
            .unwrap();
        assert_eq!(hits[0].content, "v2");
        assert_eq!((hits[0].content_version, hits[0].embedding_version), (2, 1));
        assert!(hits[0].is_torn());

        s.drain(300).unwrap();
        let hits = s
            .query_split(&QueryConstraint::pure(vec![0.0, 1.0], 1), 300)
            .unwrap();
        assert!(!hits[0].is_torn());
        assert!(hits[0].distance.abs() < 1e-12);
    }

    #[test]
    fn first_write_is_missing_until_vector_lands() {
        let mut s = stack(LagDistribution::Fixed { micros: 10 }, 0.0);
        s.upsert_split(doc(1, vec![1.0, 0.0], "t"), 0).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s
            .query_split(&QueryConstraint::pure(vec![1.0, 0.0], 1), 5)
            .unwrap()
            .is_empty());
        s.drain(10).unwrap();
        assert_eq!(
            s.query_split(&QueryConstraint::pure(vec![1.0, 0.0], 1), 10)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn bug_bypasses_tenant_filter_only() {
        let mut s = stack(LagDistribution::Fixed { micros: 0 }, 1.0);
        s.upsert_split(doc(1, vec![1.0, 0.0], "foreign"), 0)
            .unwrap();
        s.upsert_split(doc(2, vec![0.0, 1.0], "mine"), 0).unwrap();
        let q = QueryConstraint::tenant_category(vec![1.0, 0.0], 1, "mine", vec!["legal".into()]);
        let out = s.query_split_traced(&q, 0).unwrap();
        assert!(out.bypassed);
        assert_eq!(out.hits[0].tenant_id, "foreign");

        let q = QueryConstraint::tenant_category(vec![1.0, 0.0], 1, "mine", vec!["risk".into()]);
        assert!(s.query_split(&q, 0).unwrap().is_empty());

        s.set_filter_bug(FilterBugConfig {
            bypass_probability: 0.0,
            seed: 0,
        })
        .unwrap();
        let q = QueryConstraint::tenant_category(vec![1.0, 0.0], 1, "mine", vec!["legal".into()]);
        let out = s.query_split_traced(&q, 0).unwrap();
        assert!(!out.bypassed);
        assert_eq!(out.hits[0].document_id, 2);
        assert!(out.round_trips >= 1);
    }

    #[test]
    fn uniform_and_exponential_lag_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = LagDistribution::Uniform { lo: 0, hi: 7_080 };
        let n = 20_000;
        let mean = (0..n).map(|_| u.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean / 3_540.0 - 1.0).abs() < 0.01, "uniform mean {mean}");
        let e = LagDistribution::Exponential { mean: 3_540 };
        let n = 100_000;
        let mean = (0..n).map(|_| e.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        assert!(
            (mean / 3_540.0 - 1.0).abs() < 0.01,
            "exponential mean {mean}"
        );
    }
}
