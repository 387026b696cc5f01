//! Latency, freshness and leakage suites over the split stack ("Stack A")
//! and the unified store ("Stack B").

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::corpus::{
    document_content, parse_revision, CorpusParams, EmbeddingSampler, QueryGenerator,
};
use super::derive_seed;
use super::stats::LatencyStats;
use crate::distance::cosine_distance;
use crate::doc::{DocId, Document, SearchHit, Timestamp};
use crate::error::{invalid, Error, Result};
use crate::index::HnswParams;
use crate::query::{ConstraintClass, QueryConstraint};
use crate::split::{FilterBugConfig, SplitParams, SplitStack, SyncConfig};
use crate::store::UnifiedStore;

/// Both stacks holding the same corpus.
#[derive(Debug)]
pub struct BenchStacks {
    pub split: SplitStack,
    pub unified: UnifiedStore,
    /// Query time used for freshness predicates.
    pub now: Timestamp,
}

impl BenchStacks {
    /// Loads `docs` into both stacks. Split-stack vector commits are drained
    /// before returning.
    pub fn ingest(
        docs: &[Document],
        dim: usize,
        params: HnswParams,
        sync: SyncConfig,
        bug: FilterBugConfig,
        split_params: SplitParams,
        now: Timestamp,
    ) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let unified = UnifiedStore::open(dim, params)?;
        let mut split = SplitStack::open_with(dim, params, sync, bug, split_params)?;
        for d in docs {
            unified.upsert(d.clone())?;
            split.upsert_split(d.clone(), now)?;
        }
        split.drain_all()?;
        Ok(Self {
            split,
            unified,
            now,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyRow {
    pub class: ConstraintClass,
    pub split: LatencyStats,
    pub unified: LatencyStats,
    /// Mean vector-store round trips per split-stack query.
    pub split_round_trips: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencySection {
    pub iterations: usize,
    pub warmup: usize,
    pub rows: Vec<LatencyRow>,
}

impl LatencySection {
    pub fn row(&self, class: ConstraintClass) -> Option<&LatencyRow> {
        self.rows.iter().find(|r| r.class == class)
    }
}

/// Runs `warmup` unmeasured and `iterations` measured queries per class and
/// stack, with constraint parameters drawn per iteration. Both stacks see the
/// same constraints; the order of the two calls alternates per iteration.
///
/// Split-stack latency is the sum of its three phase timings; unified latency
/// is the wall time of one `query` call.
pub fn run_latency_suite(
    stacks: &mut BenchStacks,
    corpus: &CorpusParams,
    iterations: usize,
    warmup: usize,
    seed: u64,
) -> Result<LatencySection> {
    if iterations == 0 {
        return Err(invalid("iterations must be >= 1"));
    }
    if stacks.unified.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let now = stacks.now;
    let mut rows = Vec::with_capacity(ConstraintClass::ALL.len());
    for class in ConstraintClass::ALL {
        let mut gen = QueryGenerator::new(corpus, derive_seed(seed, class.key()));
        let mut split_samples = Vec::with_capacity(iterations);
        let mut unified_samples = Vec::with_capacity(iterations);
        let mut round_trips = 0u64;
        for i in 0..warmup + iterations {
            let c = gen.next(class);
            let run_split = |stacks: &mut BenchStacks| -> Result<(Duration, u32)> {
                let out = stacks.split.query_split_traced(&c, now)?;
                Ok((out.timings.total(), out.round_trips))
            };
            let run_unified = |stacks: &BenchStacks| -> Result<Duration> {
                let t = Instant::now();
                let hits = stacks.unified.query(&c, now)?;
                let elapsed = t.elapsed();
                std::hint::black_box(hits);
                Ok(elapsed)
            };
            let ((a, trips), b) = if i % 2 == 0 {
                let a = run_split(stacks)?;
                (a, run_unified(stacks)?)
            } else {
                let b = run_unified(stacks)?;
                (run_split(stacks)?, b)
            };
            if i >= warmup {
                split_samples.push(a);
                unified_samples.push(b);
                round_trips += u64::from(trips);
            }
        }
        rows.push(LatencyRow {
            class,
            split: LatencyStats::from_samples(&split_samples)?,
            unified: LatencyStats::from_samples(&unified_samples)?,
            split_round_trips: round_trips as f64 / iterations as f64,
        });
    }
    Ok(LatencySection {
        iterations,
        warmup,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitFreshness {
    pub writes: usize,
    pub mean_write_latency: Duration,
    pub mean_window_us: f64,
    pub max_window_us: i64,
    /// In-window probes that returned new content ranked by an old vector.
    pub torn_reads: usize,
    /// In-window probes where the new embedding did not retrieve its own
    /// document.
    pub stale_reads: usize,
    pub probes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnifiedFreshness {
    pub writes: usize,
    pub mean_write_latency: Duration,
    /// Content and embedding become visible in the same commit.
    pub window_us: i64,
    pub torn_reads: usize,
    pub reader_samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FreshnessSection {
    pub split: SplitFreshness,
    pub unified: UnifiedFreshness,
}

#[derive(Debug, Clone, Copy)]
pub struct FreshnessParams {
    pub writes: usize,
    /// Reader queries per write on the unified stack.
    pub reader_sample_rate: f64,
    pub seed: u64,
}

impl Default for FreshnessParams {
    fn default() -> Self {
        Self {
            writes: 1_000,
            reader_sample_rate: 4.0,
            seed: 0x5EED_0004,
        }
    }
}

/// Rewrites of base documents with fresh embeddings, and the embedding of
/// every revision (revision 0 is the base document).
struct WritePlan {
    writes: Vec<Document>,
    revisions: HashMap<(DocId, u64), Vec<f32>>,
}

fn plan_writes(
    base: &[Document],
    sampler: &EmbeddingSampler,
    n: usize,
    seed: u64,
    now: Timestamp,
) -> WritePlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut revisions: HashMap<(DocId, u64), Vec<f32>> = base
        .iter()
        .map(|d| ((d.id, 0), d.embedding.clone()))
        .collect();
    let mut current: HashMap<DocId, u64> = base.iter().map(|d| (d.id, 0)).collect();
    let mut writes = Vec::with_capacity(n);
    for i in 0..n {
        let b = &base[i % base.len()];
        let rev = current[&b.id] + 1;
        current.insert(b.id, rev);
        let embedding = sampler.sample(&mut rng);
        revisions.insert((b.id, rev), embedding.clone());
        writes.push(Document {
            content: document_content(b.id, &b.tenant_id, &b.category, rev),
            embedding,
            updated_at: now,
            ..b.clone()
        });
    }
    WritePlan { writes, revisions }
}

/// A hit is torn when the distance it was ranked by does not match the
/// embedding of the revision its content claims.
fn hit_is_torn(
    hit: &SearchHit,
    query: &[f32],
    revisions: &HashMap<(DocId, u64), Vec<f32>>,
) -> bool {
    let Some(rev) = parse_revision(&hit.content) else {
        return true;
    };
    match revisions.get(&(hit.document_id, rev)) {
        Some(emb) => (cosine_distance(query, emb) - hit.distance).abs() > 1e-4,
        None => true,
    }
}

const PROBE_GAP_US: i64 = 1_000;

/// Update cycles on fresh stacks seeded with `base`.
///
/// Split stack: each write is probed at its metadata-commit instant with the
/// document's previous embedding (torn check) and its new embedding (stale
/// check), then the clock advances past the vector commit. Unified stack: one
/// writer thread and one sampling reader thread run concurrently.
pub fn run_freshness_suite(
    base: &[Document],
    sampler: &EmbeddingSampler,
    params: HnswParams,
    sync: SyncConfig,
    fp: FreshnessParams,
    now: Timestamp,
) -> Result<FreshnessSection> {
    if fp.writes == 0 {
        return Err(invalid("writes must be >= 1"));
    }
    if !(fp.reader_sample_rate.is_finite() && fp.reader_sample_rate > 0.0) {
        return Err(invalid("reader_sample_rate must be finite and > 0"));
    }
    if base.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let plan = plan_writes(
        base,
        sampler,
        fp.writes,
        derive_seed(fp.seed, "writes"),
        now,
    );
    let split = split_freshness(base, &plan, sampler.dim(), params, sync, now)?;
    let unified = unified_freshness(base, plan, sampler.dim(), params, fp)?;
    Ok(FreshnessSection { split, unified })
}

fn split_freshness(
    base: &[Document],
    plan: &WritePlan,
    dim: usize,
    params: HnswParams,
    sync: SyncConfig,
    now: Timestamp,
) -> Result<SplitFreshness> {
    let mut stack = SplitStack::open(dim, params, sync, FilterBugConfig::default())?;
    for d in base {
        stack.upsert_split(d.clone(), now)?;
    }
    stack.drain_all()?;
    let mut clock = stack.drained_to().unwrap_or(now).max(now);
    let mut current: HashMap<DocId, Vec<f32>> =
        base.iter().map(|d| (d.id, d.embedding.clone())).collect();
    let mut write_time = Duration::ZERO;
    let (mut window_sum, mut window_max) = (0i128, i64::MIN);
    let (mut torn, mut stale) = (0, 0);

    for w in &plan.writes {
        clock += PROBE_GAP_US;
        let old = current
            .insert(w.id, w.embedding.clone())
            .expect("target is a base document");
        let t = Instant::now();
        let trace = stack.upsert_split(w.clone(), clock)?;
        write_time += t.elapsed();
        window_sum += i128::from(trace.window());
        window_max = window_max.max(trace.window());

        let hits = stack.query_split(&QueryConstraint::pure(old.clone(), 1), clock)?;
        if hits
            .iter()
            .any(|h| h.document_id == w.id && hit_is_torn(h, &old, &plan.revisions))
        {
            torn += 1;
        }
        let hits = stack.query_split(&QueryConstraint::pure(w.embedding.clone(), 1), clock)?;
        if !hits.iter().any(|h| h.document_id == w.id) {
            stale += 1;
        }

        // the vector commit is part of the write's cost even though it
        // lands later on the logical clock
        clock = clock.max(trace.t_vector_commit);
        let t = Instant::now();
        stack.drain(clock)?;
        write_time += t.elapsed();
    }
    let n = plan.writes.len();
    Ok(SplitFreshness {
        writes: n,
        mean_write_latency: write_time / n as u32,
        mean_window_us: window_sum as f64 / n as f64,
        max_window_us: window_max,
        torn_reads: torn,
        stale_reads: stale,
        probes: n,
    })
}

fn unified_freshness(
    base: &[Document],
    plan: WritePlan,
    dim: usize,
    params: HnswParams,
    fp: FreshnessParams,
) -> Result<UnifiedFreshness> {
    let store = Arc::new(UnifiedStore::open(dim, params)?);
    for d in base {
        store.upsert(d.clone())?;
    }
    let n = plan.writes.len();
    let target_samples = (n as f64 * fp.reader_sample_rate).ceil() as usize;
    let plan = Arc::new(plan);
    let progress = Arc::new(AtomicUsize::new(0));
    let samples = Arc::new(AtomicUsize::new(0));

    let reader = {
        let (store, plan, progress, samples) = (
            Arc::clone(&store),
            Arc::clone(&plan),
            Arc::clone(&progress),
            Arc::clone(&samples),
        );
        let seed = derive_seed(fp.seed, "reader");
        thread::spawn(move || -> Result<usize> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut torn = 0;
            for s in 0..target_samples {
                // Query near the write currently in flight, so hits include
                // documents that are being rewritten.
                let j = progress.load(Ordering::Acquire).min(n - 1);
                let w = rng.gen_range(j.saturating_sub(2)..=(j + 1).min(n - 1));
                let q = &plan.writes[w].embedding;
                let hits = store.query(&QueryConstraint::pure(q.clone(), 3), 0)?;
                torn += hits
                    .iter()
                    .filter(|h| h.is_torn() || hit_is_torn(h, q, &plan.revisions))
                    .count();
                samples.store(s + 1, Ordering::Release);
            }
            Ok(torn)
        })
    };

    let mut write_time = Duration::ZERO;
    let mut write_err = None;
    for (i, w) in plan.writes.iter().enumerate() {
        let t = Instant::now();
        let res = store.upsert(w.clone());
        write_time += t.elapsed();
        if let Err(e) = res {
            write_err = Some(e);
            break;
        }
        progress.store(i + 1, Ordering::Release);
        let want = ((i + 1) as f64 * fp.reader_sample_rate).ceil() as usize;
        while samples.load(Ordering::Acquire) < want.min(target_samples) && !reader.is_finished() {
            thread::yield_now();
        }
    }
    let torn = reader
        .join()
        .map_err(|_| invalid("reader thread panicked"))??;
    if let Some(e) = write_err {
        return Err(e);
    }
    Ok(UnifiedFreshness {
        writes: n,
        mean_write_latency: write_time / n as u32,
        window_us: 0,
        torn_reads: torn,
        reader_samples: target_samples,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LeakageCounts {
    pub queries: usize,
    /// Queries with at least one foreign-tenant hit.
    pub leaked_queries: usize,
    pub leaked_hits: usize,
    /// Split stack only: queries whose tenant filter was skipped.
    pub bypassed_queries: usize,
}

impl LeakageCounts {
    pub fn rate(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.leaked_queries as f64 / self.queries as f64
        }
    }

    fn record(&mut self, tenant: &str, hits: &[SearchHit]) {
        self.queries += 1;
        let foreign = hits.iter().filter(|h| h.tenant_id != tenant).count();
        if foreign > 0 {
            self.leaked_queries += 1;
            self.leaked_hits += foreign;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LeakageSection {
    pub bypass_probability: f64,
    pub split: LeakageCounts,
    pub unified: LeakageCounts,
}

fn tenant_of(c: &QueryConstraint) -> &str {
    c.tenant_id.as_deref().expect("tenant-scoped constraint")
}

/// Tenant-scoped full multi-constraint queries against the unified store.
pub fn unified_leakage(
    store: &UnifiedStore,
    gen: &mut QueryGenerator,
    queries: usize,
    now: Timestamp,
) -> Result<LeakageCounts> {
    let mut counts = LeakageCounts::default();
    for _ in 0..queries {
        let c = gen.next(ConstraintClass::FullMultiConstraint);
        counts.record(tenant_of(&c), &store.query(&c, now)?);
    }
    Ok(counts)
}

/// Same query stream against the split stack with its current filter bug.
pub fn split_leakage(
    stack: &mut SplitStack,
    gen: &mut QueryGenerator,
    queries: usize,
    now: Timestamp,
) -> Result<LeakageCounts> {
    let mut counts = LeakageCounts::default();
    for _ in 0..queries {
        let c = gen.next(ConstraintClass::FullMultiConstraint);
        let out = stack.query_split_traced(&c, now)?;
        counts.bypassed_queries += usize::from(out.bypassed);
        counts.record(tenant_of(&c), &out.hits);
    }
    Ok(counts)
}

/// Installs `bug` on the split stack, then issues `queries` identical
/// constraint streams to both stacks.
pub fn run_leakage_suite(
    stacks: &mut BenchStacks,
    corpus: &CorpusParams,
    queries: usize,
    bug: FilterBugConfig,
    seed: u64,
) -> Result<LeakageSection> {
    if queries == 0 {
        return Err(invalid("queries must be >= 1"));
    }
    stacks.split.set_filter_bug(bug)?;
    let seed = derive_seed(seed, "leakage");
    let split = split_leakage(
        &mut stacks.split,
        &mut QueryGenerator::new(corpus, seed),
        queries,
        stacks.now,
    )?;
    let unified = unified_leakage(
        &stacks.unified,
        &mut QueryGenerator::new(corpus, seed),
        queries,
        stacks.now,
    )?;
    Ok(LeakageSection {
        bypass_probability: bug.bypass_probability,
        split,
        unified,
    })
}
