//! Run configuration, read from and written to TOML.
//!
//! Every section is optional; omitted keys take the defaults, which describe
//! the reference setup (50,000 documents, 128 dimensions, 20 tenants,
//! 5 categories, 180 days of history). All seeds derive from the single
//! top-level `seed`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unirag_core::bench::{derive_seed, CorpusParams, ReportFormat};
use unirag_core::{FilterBugConfig, HnswParams, SplitParams, SyncConfig};

use crate::error::CliError;

#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Latency,
    Freshness,
    Leakage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreshnessConfig {
    pub writes: usize,
    /// Unified-stack reader queries per write.
    pub reader_sample_rate: f64,
    /// Leading corpus documents loaded into the freshness stacks.
    pub base_documents: usize,
}

impl Default for FreshnessConfig {
    fn default() -> Self {
        Self {
            writes: 1_000,
            reader_sample_rate: 4.0,
            base_documents: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakageConfig {
    pub queries: usize,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self { queries: 1_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every module's seed is derived from it.
    pub seed: u64,
    pub suites: BTreeSet<Suite>,
    /// Measured iterations per query class and stack.
    pub iterations: usize,
    pub warmup: usize,
    pub output_dir: PathBuf,
    pub formats: BTreeSet<ReportFormat>,
    /// Read the corpus from this file instead of generating it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_path: Option<PathBuf>,
    pub corpus: CorpusParams,
    pub index: HnswParams,
    pub split: SplitParams,
    pub sync: SyncConfig,
    pub bug: FilterBugConfig,
    pub freshness: FreshnessConfig,
    pub leakage: LeakageConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 20_260_101,
            suites: [Suite::Latency, Suite::Freshness, Suite::Leakage].into(),
            iterations: 200,
            warmup: 20,
            output_dir: PathBuf::from("bench-out"),
            formats: [ReportFormat::Markdown, ReportFormat::Csv].into(),
            corpus_path: None,
            corpus: CorpusParams::default(),
            index: HnswParams::default(),
            split: SplitParams::default(),
            sync: SyncConfig::default(),
            bug: FilterBugConfig {
                bypass_probability: 0.002,
                ..FilterBugConfig::default()
            },
            freshness: FreshnessConfig::default(),
            leakage: LeakageConfig::default(),
        }
    }
}

/// Per-module seeds derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub corpus: u64,
    pub index: u64,
    pub sync: u64,
    pub bug: u64,
    pub latency: u64,
    pub freshness: u64,
    pub leakage: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg.with_derived_seeds())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// `path` if given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default().with_derived_seeds()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            corpus: derive_seed(self.seed, "corpus"),
            index: derive_seed(self.seed, "index"),
            sync: derive_seed(self.seed, "sync"),
            bug: derive_seed(self.seed, "bug"),
            latency: derive_seed(self.seed, "latency"),
            freshness: derive_seed(self.seed, "freshness"),
            leakage: derive_seed(self.seed, "leakage"),
        }
    }

    /// Writes the derived seeds into the module configs.
    pub fn with_derived_seeds(mut self) -> Self {
        let s = self.seeds();
        self.corpus.seed = s.corpus;
        self.index.seed = s.index;
        self.sync.seed = s.sync;
        self.bug.seed = s.bug;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.suites.is_empty() {
            return bad("at least one suite must be selected".into());
        }
        if self.formats.is_empty() {
            return bad("at least one report format must be selected".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.freshness.writes == 0 || self.freshness.base_documents == 0 {
            return bad("freshness.writes and freshness.base_documents must be >= 1".into());
        }
        if !(self.freshness.reader_sample_rate.is_finite()
            && self.freshness.reader_sample_rate > 0.0)
        {
            return bad("freshness.reader_sample_rate must be > 0".into());
        }
        if self.leakage.queries == 0 {
            return bad("leakage.queries must be >= 1".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed must fit in a signed 64-bit integer".into());
        }
        let core = |e: unirag_core::Error| CliError::Config(e.to_string());
        self.corpus.validate().map_err(core)?;
        self.index.validate().map_err(core)?;
        if !(0.0..=1.0).contains(&self.bug.bypass_probability) {
            return bad(format!(
                "bug.bypass_probability must be in [0, 1], got {}",
                self.bug.bypass_probability
            ));
        }
        if self.split.overfetch == 0 || self.split.max_fetch == 0 {
            return bad("split.overfetch and split.max_fetch must be >= 1".into());
        }
        if let unirag_core::LagDistribution::Uniform { lo, hi } = self.sync.lag {
            if lo > hi {
                return bad(format!("sync.lag uniform lo {lo} > hi {hi}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use unirag_core::bench::EmbeddingModel;
    use unirag_core::LagDistribution;

    #[test]
    fn empty_document_is_the_default() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default().with_derived_seeds());
        assert_eq!(cfg.corpus.num_documents, 50_000);
        assert_eq!(cfg.index.m, 16);
        assert_eq!(cfg.sync.lag, LagDistribution::Fixed { micros: 3_540 });
        assert_eq!(cfg.bug.bypass_probability, 0.002);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let mut cfg = RunConfig::default().with_derived_seeds();
        cfg.sync.lag = LagDistribution::Exponential { mean: 3_540 };
        cfg.corpus.embedding = EmbeddingModel::Uniform;
        cfg.suites = [Suite::Leakage].into();
        cfg.corpus_path = Some("c.jsonl".into());
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn nested_sections_parse() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 7
            suites = ["leakage"]
            [corpus]
            num_documents = 10
            [corpus.embedding]
            kind = "low_rank"
            latent_dims = 4
            noise = 0.1
            [sync.lag]
            kind = "uniform"
            lo = 0
            hi = 7080
            [bug]
            bypass_probability = 0.5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.corpus.num_documents, 10);
        assert_eq!(
            cfg.corpus.embedding,
            EmbeddingModel::LowRank {
                latent_dims: 4,
                noise: 0.1
            }
        );
        assert_eq!(cfg.sync.lag, LagDistribution::Uniform { lo: 0, hi: 7_080 });
        assert_eq!(cfg.bug.seed, derive_seed(7, "bug"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "suites = []",
            "unknown_key = 1",
            "[corpus]\nnum_tenants = 0",
            "[bug]\nbypass_probability = 2.0",
            "[index]\nm = 1",
            "[index]\nseed = 3",
            "iterations = 0",
            "[sync.lag]\nkind = \"uniform\"\nlo = 5\nhi = 1",
        ] {
            assert!(
                matches!(RunConfig::from_toml(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn documented_example_parses() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 42
            suites = ["latency", "leakage"]
            iterations = 200
            warmup = 20
            output_dir = "bench-out"
            [corpus]
            num_documents = 10000
            dimension = 128
            num_tenants = 20
            [sync.lag]
            kind = "exponential"
            mean = 3540
            [bug]
            bypass_probability = 0.002
            [leakage]
            queries = 1000
            "#,
        )
        .unwrap();
        assert_eq!(cfg.sync.lag, LagDistribution::Exponential { mean: 3_540 });
        assert_eq!(cfg.suites, [Suite::Latency, Suite::Leakage].into());
    }

    #[test]
    fn seeds_follow_the_root() {
        let a = RunConfig {
            seed: 1,
            ..Default::default()
        }
        .seeds();
        let b = RunConfig {
            seed: 2,
            ..Default::default()
        }
        .seeds();
        assert_ne!(a, b);
        assert_ne!(a.corpus, a.bug);
    }
}
