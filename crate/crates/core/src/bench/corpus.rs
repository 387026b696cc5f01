//! Synthetic multi-tenant corpus and per-iteration query parameters.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::doc::{DocId, Document, Timestamp, MICROS_PER_DAY};
use crate::error::{invalid, Result};
use crate::query::{ConstraintClass, QueryConstraint};

const CATEGORY_NAMES: [&str; 5] = ["legal", "risk", "compliance", "finance", "engineering"];

/// 2026-01-01T00:00:00Z in epoch microseconds.
pub const DEFAULT_REFERENCE_TIME: Timestamp = 1_767_225_600_000_000;

/// How document and query embeddings are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingModel {
    /// i.i.d. uniform on the unit sphere.
    Uniform,
    /// `latent_dims` Gaussian factors mixed through a fixed random basis,
    /// plus isotropic Gaussian noise of scale `noise`, then normalized.
    LowRank { latent_dims: usize, noise: f64 },
}

impl Default for EmbeddingModel {
    fn default() -> Self {
        EmbeddingModel::LowRank {
            latent_dims: 16,
            noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusParams {
    pub num_documents: usize,
    pub dimension: usize,
    pub num_tenants: usize,
    pub num_categories: usize,
    pub history_days: u32,
    pub users_per_tenant: usize,
    /// Probability that a user of the owning tenant is on a document's
    /// permission list.
    pub permitted_fraction: f64,
    #[serde(skip)]
    pub seed: u64,
    pub embedding: EmbeddingModel,
    /// The corpus "now": `updated_at` lies in `[now - history_days, now]`.
    pub reference_time: Timestamp,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            num_documents: 50_000,
            dimension: 128,
            num_tenants: 20,
            num_categories: 5,
            history_days: 180,
            users_per_tenant: 50,
            permitted_fraction: 0.5,
            seed: 0x5EED_C0DE,
            embedding: EmbeddingModel::default(),
            reference_time: DEFAULT_REFERENCE_TIME,
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_documents", self.num_documents),
            ("dimension", self.dimension),
            ("num_tenants", self.num_tenants),
            ("num_categories", self.num_categories),
            ("history_days", self.history_days as usize),
            ("users_per_tenant", self.users_per_tenant),
        ] {
            if v == 0 {
                return Err(invalid(format!("{name} must be >= 1")));
            }
        }
        if !(self.permitted_fraction > 0.0 && self.permitted_fraction <= 1.0) {
            return Err(invalid(format!(
                "permitted_fraction must be in (0, 1], got {}",
                self.permitted_fraction
            )));
        }
        if let EmbeddingModel::LowRank { latent_dims, noise } = self.embedding {
            if latent_dims == 0 {
                return Err(invalid("latent_dims must be >= 1"));
            }
            if !(noise.is_finite() && noise >= 0.0) {
                return Err(invalid(format!(
                    "noise must be finite and >= 0, got {noise}"
                )));
            }
        }
        Ok(())
    }

    pub fn tenants(&self) -> Vec<String> {
        (0..self.num_tenants).map(tenant_name).collect()
    }

    pub fn categories(&self) -> Vec<String> {
        (0..self.num_categories).map(category_name).collect()
    }

    /// User names are local to a tenant, so the same name appears in every
    /// tenant's pool.
    pub fn users(&self) -> Vec<String> {
        (0..self.users_per_tenant).map(user_name).collect()
    }
}

pub fn tenant_name(i: usize) -> String {
    format!("tenant-{i:02}")
}

pub fn category_name(i: usize) -> String {
    CATEGORY_NAMES
        .get(i)
        .map_or_else(|| format!("category-{i:02}"), |s| (*s).to_string())
}

pub fn user_name(i: usize) -> String {
    format!("user-{i:02}")
}

/// Content text for a document revision; the revision is recoverable with
/// [`parse_revision`].
pub fn document_content(id: DocId, tenant: &str, category: &str, revision: u64) -> String {
    format!("{tenant} {category} document {id} rev {revision}")
}

pub fn parse_revision(content: &str) -> Option<u64> {
    content.rsplit_once(" rev ")?.1.parse().ok()
}

/// Draws embeddings from an [`EmbeddingModel`]. Document and query samplers
/// built from the same corpus params share the mixing basis.
#[derive(Debug, Clone)]
pub struct EmbeddingSampler {
    dim: usize,
    model: EmbeddingModel,
    basis: Vec<Vec<f64>>,
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl EmbeddingSampler {
    pub fn new(model: EmbeddingModel, dim: usize, seed: u64) -> Self {
        let basis = match model {
            EmbeddingModel::Uniform => Vec::new(),
            EmbeddingModel::LowRank { latent_dims, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..latent_dims)
                    .map(|_| gaussian_unit(&mut rng, dim))
                    .collect()
            }
        };
        Self { dim, model, basis }
    }

    pub fn for_corpus(params: &CorpusParams) -> Self {
        Self::new(
            params.embedding,
            params.dimension,
            derive_seed(params.seed, "basis"),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// A unit-norm embedding.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let v = match self.model {
            EmbeddingModel::Uniform => gaussian_unit(rng, self.dim),
            EmbeddingModel::LowRank { noise, .. } => loop {
                let mut v = vec![0.0f64; self.dim];
                for b in &self.basis {
                    let z: f64 = StandardNormal.sample(rng);
                    v.iter_mut().zip(b).for_each(|(x, bj)| *x += z * bj);
                }
                for x in v.iter_mut() {
                    let e: f64 = StandardNormal.sample(rng);
                    *x += noise * e;
                }
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    v.iter_mut().for_each(|x| *x /= n);
                    break v;
                }
            },
        };
        v.into_iter().map(|x| x as f32).collect()
    }
}

/// Deterministic corpus: tenants round-robin, categories and timestamps
/// uniform, permission lists drawn from the owning tenant's user pool.
pub fn generate_corpus(params: &CorpusParams) -> Result<Vec<Document>> {
    params.validate()?;
    let tenants = params.tenants();
    let categories = params.categories();
    let users = params.users();
    let sampler = EmbeddingSampler::for_corpus(params);
    let mut meta_rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "metadata"));
    let mut emb_rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "embeddings"));
    let span = i64::from(params.history_days) * MICROS_PER_DAY;

    let mut docs = Vec::with_capacity(params.num_documents);
    for i in 0..params.num_documents {
        let id = i as DocId;
        let tenant = &tenants[i % tenants.len()];
        let category = &categories[meta_rng.gen_range(0..categories.len())];
        let updated_at = params.reference_time - meta_rng.gen_range(0..=span);
        let permitted_users: BTreeSet<String> = users
            .iter()
            .filter(|_| meta_rng.gen_bool(params.permitted_fraction))
            .cloned()
            .collect();
        docs.push(Document {
            id,
            content: document_content(id, tenant, category, 0),
            embedding: sampler.sample(&mut emb_rng),
            tenant_id: tenant.clone(),
            category: category.clone(),
            updated_at,
            permitted_users,
            version: 0,
        });
    }
    Ok(docs)
}

#[derive(Debug, Clone)]
enum QuerySource {
    Model(EmbeddingSampler),
    /// A random anchor embedding plus Gaussian noise of the given scale.
    Anchors(Vec<Vec<f32>>, f64),
}

/// Seeded random constraints over a corpus's tenants, categories and users.
#[derive(Debug, Clone)]
pub struct QueryGenerator {
    source: QuerySource,
    tenants: Vec<String>,
    categories: Vec<String>,
    users: Vec<String>,
    k: usize,
    /// Inclusive range of freshness horizons in microseconds.
    horizon: (i64, i64),
    rng: ChaCha8Rng,
}

impl QueryGenerator {
    pub const DEFAULT_K: usize = 5;
    pub const DEFAULT_HORIZON_DAYS: (u32, u32) = (1, 60);

    pub fn new(params: &CorpusParams, seed: u64) -> Self {
        let (lo, hi) = Self::DEFAULT_HORIZON_DAYS;
        Self {
            source: QuerySource::Model(EmbeddingSampler::for_corpus(params)),
            tenants: params.tenants(),
            categories: params.categories(),
            users: params.users(),
            k: Self::DEFAULT_K,
            horizon: (
                i64::from(lo) * MICROS_PER_DAY,
                i64::from(hi) * MICROS_PER_DAY,
            ),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Pools taken from the documents themselves; query embeddings are
    /// document embeddings perturbed by noise of scale 0.1, renormalized.
    /// Useful when the generating model of a corpus file is unknown.
    pub fn from_documents(docs: &[Document], seed: u64) -> Result<Self> {
        if docs.is_empty() {
            return Err(crate::error::Error::EmptyCorpus);
        }
        let tenants: BTreeSet<String> = docs.iter().map(|d| d.tenant_id.clone()).collect();
        let categories: BTreeSet<String> = docs.iter().map(|d| d.category.clone()).collect();
        let users: BTreeSet<String> = docs
            .iter()
            .flat_map(|d| d.permitted_users.iter().cloned())
            .collect();
        if users.is_empty() {
            return Err(invalid("corpus has no permitted users"));
        }
        let (lo, hi) = Self::DEFAULT_HORIZON_DAYS;
        Ok(Self {
            source: QuerySource::Anchors(docs.iter().map(|d| d.embedding.clone()).collect(), 0.1),
            tenants: tenants.into_iter().collect(),
            categories: categories.into_iter().collect(),
            users: users.into_iter().collect(),
            k: Self::DEFAULT_K,
            horizon: (
                i64::from(lo) * MICROS_PER_DAY,
                i64::from(hi) * MICROS_PER_DAY,
            ),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn embedding(&mut self) -> Vec<f32> {
        match &self.source {
            QuerySource::Model(sampler) => sampler.sample(&mut self.rng),
            QuerySource::Anchors(anchors, noise) => {
                let a = &anchors[self.rng.gen_range(0..anchors.len())];
                let mut v: Vec<f64> = a
                    .iter()
                    .map(|&x| {
                        let e: f64 = StandardNormal.sample(&mut self.rng);
                        f64::from(x) + noise * e
                    })
                    .collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    v.iter_mut().for_each(|x| *x /= n);
                }
                v.into_iter().map(|x| x as f32).collect()
            }
        }
    }

    fn tenant(&mut self) -> String {
        self.tenants[self.rng.gen_range(0..self.tenants.len())].clone()
    }

    fn user(&mut self) -> String {
        self.users[self.rng.gen_range(0..self.users.len())].clone()
    }

    fn max_age(&mut self) -> i64 {
        self.rng.gen_range(self.horizon.0..=self.horizon.1)
    }

    /// One or two distinct categories.
    fn category_set(&mut self) -> Vec<String> {
        let n = self.rng.gen_range(1..=self.categories.len().min(2));
        let mut picked: Vec<usize> = sample(&mut self.rng, self.categories.len(), n).into_vec();
        picked.sort_unstable();
        picked
            .into_iter()
            .map(|i| self.categories[i].clone())
            .collect()
    }

    pub fn next(&mut self, class: ConstraintClass) -> QueryConstraint {
        let q = self.embedding();
        let k = self.k;
        match class {
            ConstraintClass::PureSimilarity => QueryConstraint::pure(q, k),
            ConstraintClass::DateFiltered => {
                let age = self.max_age();
                QueryConstraint::date_filtered(q, k, age)
            }
            ConstraintClass::TenantCategory => {
                let tenant = self.tenant();
                let cats = self.category_set();
                QueryConstraint::tenant_category(q, k, tenant, cats)
            }
            ConstraintClass::FullMultiConstraint => {
                let tenant = self.tenant();
                let age = self.max_age();
                let cats = self.category_set();
                let user = self.user();
                QueryConstraint::full(q, k, tenant, age, cats, user)
            }
        }
    }
}
