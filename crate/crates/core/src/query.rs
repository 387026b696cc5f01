//! The multi-constraint query: similarity plus freshness, tenant, category
//! and permission filters.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::doc::Timestamp;
use crate::error::{invalid, Result};

/// Which filters a query carries.
///
/// * `PureSimilarity`: none.
/// * `DateFiltered`: freshness horizon only.
/// * `TenantCategory`: tenant and categories.
/// * `FullMultiConstraint`: tenant, freshness, categories and user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintClass {
    PureSimilarity,
    DateFiltered,
    TenantCategory,
    FullMultiConstraint,
}

impl ConstraintClass {
    pub const ALL: [ConstraintClass; 4] = [
        ConstraintClass::PureSimilarity,
        ConstraintClass::DateFiltered,
        ConstraintClass::TenantCategory,
        ConstraintClass::FullMultiConstraint,
    ];

    /// Row label used in latency tables.
    pub fn label(self) -> &'static str {
        match self {
            ConstraintClass::PureSimilarity => "Pure similarity",
            ConstraintClass::DateFiltered => "+ date filter",
            ConstraintClass::TenantCategory => "+ tenant + category",
            ConstraintClass::FullMultiConstraint => "Full multi-constraint",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            ConstraintClass::PureSimilarity => "pure_similarity",
            ConstraintClass::DateFiltered => "date_filtered",
            ConstraintClass::TenantCategory => "tenant_category",
            ConstraintClass::FullMultiConstraint => "full_multi_constraint",
        }
    }
}

impl fmt::Display for ConstraintClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryConstraint {
    pub query_embedding: Vec<f32>,
    /// Result limit.
    pub k: usize,
    pub tenant_id: Option<String>,
    /// Freshness horizon in microseconds: only rows with
    /// `updated_at > now - max_age` qualify.
    pub max_age: Option<i64>,
    pub categories: Option<Vec<String>>,
    /// Must be a member of the row's `permitted_users`.
    pub user_id: Option<String>,
    pub class: ConstraintClass,
}

impl QueryConstraint {
    pub fn pure(query: Vec<f32>, k: usize) -> Self {
        Self {
            query_embedding: query,
            k,
            tenant_id: None,
            max_age: None,
            categories: None,
            user_id: None,
            class: ConstraintClass::PureSimilarity,
        }
    }

    pub fn date_filtered(query: Vec<f32>, k: usize, max_age: i64) -> Self {
        Self {
            max_age: Some(max_age),
            class: ConstraintClass::DateFiltered,
            ..Self::pure(query, k)
        }
    }

    pub fn tenant_category(
        query: Vec<f32>,
        k: usize,
        tenant: impl Into<String>,
        categories: Vec<String>,
    ) -> Self {
        Self {
            tenant_id: Some(tenant.into()),
            categories: Some(categories),
            class: ConstraintClass::TenantCategory,
            ..Self::pure(query, k)
        }
    }

    pub fn full(
        query: Vec<f32>,
        k: usize,
        tenant: impl Into<String>,
        max_age: i64,
        categories: Vec<String>,
        user: impl Into<String>,
    ) -> Self {
        Self {
            query_embedding: query,
            k,
            tenant_id: Some(tenant.into()),
            max_age: Some(max_age),
            categories: Some(categories),
            user_id: Some(user.into()),
            class: ConstraintClass::FullMultiConstraint,
        }
    }

    /// Checks `k` and that the set filters agree with `class`.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        if matches!(self.max_age, Some(a) if a < 0) {
            return Err(invalid("max_age must be non-negative"));
        }
        let shape = (
            self.tenant_id.is_some(),
            self.max_age.is_some(),
            self.categories.is_some(),
            self.user_id.is_some(),
        );
        let expected = match self.class {
            ConstraintClass::PureSimilarity => (false, false, false, false),
            ConstraintClass::DateFiltered => (false, true, false, false),
            ConstraintClass::TenantCategory => (true, false, true, false),
            ConstraintClass::FullMultiConstraint => (true, true, true, true),
        };
        if shape != expected {
            return Err(invalid(format!(
                "filters set (tenant, max_age, categories, user) = {shape:?} do not match class {}",
                self.class
            )));
        }
        Ok(())
    }

    /// Lower bound (exclusive) on `updated_at`, if a horizon is set.
    pub fn cutoff(&self, now: Timestamp) -> Option<Timestamp> {
        self.max_age.map(|age| now.saturating_sub(age))
    }

    pub(crate) fn filter<'a>(&'a self, now: Timestamp) -> RowFilter<'a> {
        RowFilter {
            tenant: self.tenant_id.as_deref(),
            cutoff: self.cutoff(now),
            categories: self.categories.as_deref(),
            user: self.user_id.as_deref(),
        }
    }
}

/// A compiled row predicate shared by both stacks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RowFilter<'a> {
    pub tenant: Option<&'a str>,
    pub cutoff: Option<Timestamp>,
    pub categories: Option<&'a [String]>,
    pub user: Option<&'a str>,
}

impl RowFilter<'_> {
    pub fn without_tenant(self) -> Self {
        Self {
            tenant: None,
            ..self
        }
    }

    /// `permitted_users` must be sorted.
    #[inline]
    pub fn accepts(
        &self,
        tenant: &str,
        category: &str,
        updated_at: Timestamp,
        permitted_users: &[String],
    ) -> bool {
        if let Some(t) = self.tenant {
            if t != tenant {
                return false;
            }
        }
        if let Some(cutoff) = self.cutoff {
            if updated_at <= cutoff {
                return false;
            }
        }
        if let Some(cats) = self.categories {
            if !cats.iter().any(|c| c == category) {
                return false;
            }
        }
        if let Some(user) = self.user {
            if permitted_users
                .binary_search_by(|u| u.as_str().cmp(user))
                .is_err()
            {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_shape_is_checked() {
        let q = vec![1.0, 0.0];
        assert!(QueryConstraint::pure(q.clone(), 5).validate().is_ok());
        assert!(QueryConstraint::pure(q.clone(), 0).validate().is_err());
        assert!(QueryConstraint::date_filtered(q.clone(), 5, 10)
            .validate()
            .is_ok());
        let mut bad = QueryConstraint::date_filtered(q.clone(), 5, 10);
        bad.user_id = Some("u".into());
        assert!(bad.validate().is_err());
        let full = QueryConstraint::full(q, 5, "t", 10, vec!["legal".into()], "u");
        assert!(full.validate().is_ok());
    }

    #[test]
    fn freshness_boundary_is_strict() {
        let q = QueryConstraint::date_filtered(vec![1.0], 1, 100);
        let f = q.filter(1_000);
        assert!(!f.accepts("t", "c", 900, &[]));
        assert!(f.accepts("t", "c", 901, &[]));
    }

    #[test]
    fn permission_and_category_membership() {
        let users = vec!["alice".to_string(), "bob".to_string()];
        let q = QueryConstraint::full(
            vec![1.0],
            1,
            "t",
            1_000,
            vec!["legal".into(), "risk".into()],
            "bob",
        );
        let f = q.filter(1_000);
        assert!(f.accepts("t", "risk", 500, &users));
        assert!(!f.accepts("t", "finance", 500, &users));
        assert!(!f.accepts("other", "risk", 500, &users));
        assert!(!f.accepts("t", "risk", 500, &users[..1]));
        assert!(f.without_tenant().accepts("other", "risk", 500, &users));
    }
}
