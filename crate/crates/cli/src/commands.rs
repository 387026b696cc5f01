use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use unirag_core::bench::corpus_file::{read_corpus, write_corpus};
use unirag_core::bench::suites::{
    run_freshness_suite, run_latency_suite, run_leakage_suite, FreshnessParams,
};
use unirag_core::bench::{
    generate_corpus, oracle, BenchReport, BenchStacks, EmbeddingSampler, QueryGenerator,
};
use unirag_core::{
    ConstraintClass, Document, HnswParams, LagDistribution, Timestamp, UnifiedStore,
};

use crate::config::{RunConfig, Suite};
use crate::error::CliError;

/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "UNIRAG_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSummary {
    pub documents: usize,
    pub per_tenant: BTreeMap<String, usize>,
    pub per_category: BTreeMap<String, usize>,
}

impl CorpusSummary {
    pub fn of(docs: &[Document]) -> Self {
        let mut per_tenant = BTreeMap::new();
        let mut per_category = BTreeMap::new();
        for d in docs {
            *per_tenant.entry(d.tenant_id.clone()).or_insert(0) += 1;
            *per_category.entry(d.category.clone()).or_insert(0) += 1;
        }
        Self {
            documents: docs.len(),
            per_tenant,
            per_category,
        }
    }
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} documents", self.documents)?;
        writeln!(f, "per tenant:")?;
        for (t, n) in &self.per_tenant {
            writeln!(f, "  {t}: {n}")?;
        }
        writeln!(f, "per category:")?;
        for (c, n) in &self.per_category {
            writeln!(f, "  {c}: {n}")?;
        }
        Ok(())
    }
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<CorpusSummary, CliError> {
    let docs = generate_corpus(&cfg.corpus)?;
    write_corpus(out, &docs).map_err(|e| match e {
        unirag_core::Error::Io(io) => CliError::io(out, io),
        other => other.into(),
    })?;
    Ok(CorpusSummary::of(&docs))
}

fn load_corpus(path: &Path) -> Result<Vec<Document>, CliError> {
    read_corpus(path).map_err(|e| match e {
        unirag_core::Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}

/// The corpus for a run and the query time to use with it.
pub fn corpus_for(cfg: &RunConfig) -> Result<(Vec<Document>, Timestamp), CliError> {
    match &cfg.corpus_path {
        Some(path) => {
            let docs = load_corpus(path)?;
            let now = docs
                .iter()
                .map(|d| d.updated_at)
                .max()
                .ok_or(unirag_core::Error::EmptyCorpus)?;
            Ok((docs, now))
        }
        None => Ok((generate_corpus(&cfg.corpus)?, cfg.corpus.reference_time)),
    }
}

fn lag_label(lag: LagDistribution) -> String {
    match lag {
        LagDistribution::Fixed { micros } => format!("fixed {micros}us"),
        LagDistribution::Uniform { lo, hi } => format!("uniform [{lo}, {hi}]us"),
        LagDistribution::Exponential { mean } => format!("exponential mean {mean}us"),
    }
}

fn environment_notes(cfg: &RunConfig, docs: &[Document]) -> Vec<String> {
    let dim = docs
        .first()
        .map_or(cfg.corpus.dimension, |d| d.embedding.len());
    let ix = &cfg.index;
    vec![
        format!(
            "corpus: {} documents, {} dimensions, seed {}",
            docs.len(),
            dim,
            cfg.seed
        ),
        format!("embedding model: {:?}", cfg.corpus.embedding),
        format!(
            "index: m={} ef_construction={} ef_search={} keep_pruned={} exact_threshold={}",
            ix.m, ix.ef_construction, ix.ef_search, ix.keep_pruned, ix.exact_threshold
        ),
        format!(
            "split stack: lag {}, overfetch {}, max_fetch {}",
            lag_label(cfg.sync.lag),
            cfg.split.overfetch,
            cfg.split.max_fetch
        ),
        format!(
            "host: {} {}, {} logical cpus",
            std::env::consts::OS,
            std::env::consts::ARCH,
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    ]
}

/// Runs the configured suites and returns the report. Does not write files.
pub fn run_bench(cfg: &RunConfig) -> Result<BenchReport, CliError> {
    cfg.validate()?;
    let seeds = cfg.seeds();
    let (docs, now) = corpus_for(cfg)?;
    let dim = docs
        .first()
        .ok_or(unirag_core::Error::EmptyCorpus)?
        .embedding
        .len();
    let mut report = BenchReport {
        notes: environment_notes(cfg, &docs),
        ..Default::default()
    };

    let wants = |s: Suite| cfg.suites.contains(&s);
    if wants(Suite::Latency) || wants(Suite::Leakage) {
        let mut stacks =
            BenchStacks::ingest(&docs, dim, cfg.index, cfg.sync, cfg.bug, cfg.split, now)?;
        if wants(Suite::Latency) {
            report.latency = Some(run_latency_suite(
                &mut stacks,
                &cfg.corpus,
                cfg.iterations,
                cfg.warmup,
                seeds.latency,
            )?);
        }
        if wants(Suite::Leakage) {
            report.leakage = Some(run_leakage_suite(
                &mut stacks,
                &cfg.corpus,
                cfg.leakage.queries,
                cfg.bug,
                seeds.leakage,
            )?);
        }
    }
    if wants(Suite::Freshness) {
        let base = &docs[..cfg.freshness.base_documents.min(docs.len())];
        let sampler = EmbeddingSampler::for_corpus(&cfg.corpus);
        if sampler.dim() != dim {
            return Err(CliError::Config(format!(
                "corpus file has dimension {dim} but corpus.dimension is {}",
                sampler.dim()
            )));
        }
        let fp = FreshnessParams {
            writes: cfg.freshness.writes,
            reader_sample_rate: cfg.freshness.reader_sample_rate,
            seed: seeds.freshness,
        };
        report.freshness = Some(run_freshness_suite(
            base, &sampler, cfg.index, cfg.sync, fp, now,
        )?);
    }
    Ok(report)
}

/// Output directory after applying the environment override.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output_dir.clone(),
    }
}

/// Writes `report.<ext>` for each configured format; returns the paths.
pub fn write_reports(
    report: &BenchReport,
    cfg: &RunConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    for &format in &cfg.formats {
        let path = dir.join(format!("report.{}", format.extension()));
        fs::write(&path, report.emit(format)).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub queries: usize,
    pub hits_checked: usize,
    /// Hits that fail a predicate of their query.
    pub violations: usize,
    pub mean_recall: f64,
    pub min_recall: f64,
    pub recall_by_class: Vec<(ConstraintClass, f64)>,
    pub ef_search: usize,
}

pub const RECALL_FLOOR: f64 = 0.9;

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.mean_recall >= RECALL_FLOOR
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "queries: {} (ef_search {})",
            self.queries, self.ef_search
        )?;
        writeln!(
            f,
            "filter soundness: {} violations in {} hits",
            self.violations, self.hits_checked
        )?;
        writeln!(
            f,
            "recall@k: mean {:.4}, min {:.4}",
            self.mean_recall, self.min_recall
        )?;
        for (class, r) in &self.recall_by_class {
            writeln!(f, "  {}: {:.4}", class.label(), r)?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Loads a corpus file into a unified store and checks `queries` seeded
/// constraints (cycling through the four classes) against a brute-force
/// oracle.
pub fn verify(
    path: &Path,
    ef_search: Option<usize>,
    queries: usize,
    seed: u64,
) -> Result<VerifyReport, CliError> {
    if queries == 0 {
        return Err(CliError::Config("queries must be >= 1".into()));
    }
    let docs = load_corpus(path)?;
    let first = docs.first().ok_or(unirag_core::Error::EmptyCorpus)?;
    let mut params = HnswParams::default();
    if let Some(ef) = ef_search {
        params.ef_search = ef;
    }
    params
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let store = UnifiedStore::open(first.embedding.len(), params)?;
    for d in &docs {
        store.upsert(d.clone())?;
    }
    let now = docs.iter().map(|d| d.updated_at).max().unwrap_or(0);
    let by_id: HashMap<u64, &Document> = docs.iter().map(|d| (d.id, d)).collect();
    let mut gen = QueryGenerator::from_documents(&docs, seed)?;

    let (mut hits_checked, mut violations) = (0, 0);
    let mut recalls: Vec<(ConstraintClass, f64)> = Vec::with_capacity(queries);
    for i in 0..queries {
        let class = ConstraintClass::ALL[i % ConstraintClass::ALL.len()];
        let c = gen.next(class);
        let hits = store.query(&c, now)?;
        for h in &hits {
            hits_checked += 1;
            let sound = by_id
                .get(&h.document_id)
                .is_some_and(|d| d.tenant_id == h.tenant_id && oracle::satisfies(d, &c, now));
            if !sound {
                violations += 1;
            }
        }
        recalls.push((
            class,
            oracle::recall_at_k(&hits, &oracle::top_k(&docs, &c, now)),
        ));
    }
    let mean = |rs: &mut dyn Iterator<Item = f64>| {
        let (sum, n) = rs.fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
        if n == 0 {
            1.0
        } else {
            sum / n as f64
        }
    };
    let recall_by_class = ConstraintClass::ALL
        .iter()
        .map(|&class| {
            (
                class,
                mean(&mut recalls.iter().filter(|r| r.0 == class).map(|r| r.1)),
            )
        })
        .collect();
    Ok(VerifyReport {
        queries,
        hits_checked,
        violations,
        mean_recall: mean(&mut recalls.iter().map(|r| r.1)),
        min_recall: recalls.iter().map(|r| r.1).fold(1.0, f64::min),
        recall_by_class,
        ef_search: params.ef_search,
    })
}
