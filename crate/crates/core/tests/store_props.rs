use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use unirag_core::{
    ConstraintClass, Document, HnswParams, QueryConstraint, SearchHit, Timestamp, UnifiedStore,
    MICROS_PER_DAY,
};

const DIM: usize = 4;
const NOW: Timestamp = 1_000 * MICROS_PER_DAY;
const TENANTS: [&str; 3] = ["t0", "t1", "t2"];
const CATEGORIES: [&str; 3] = ["legal", "risk", "finance"];
const USERS: [&str; 4] = ["u0", "u1", "u2", "u3"];

fn vector() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, DIM)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn document(id: u64) -> impl Strategy<Value = Document> {
    (
        vector(),
        0..TENANTS.len(),
        0..CATEGORIES.len(),
        0i64..10 * MICROS_PER_DAY,
        prop::bits::u8::masked(0b1111),
    )
        .prop_map(move |(embedding, t, c, age, users)| Document {
            id,
            content: format!("doc {id} {age}"),
            embedding,
            tenant_id: TENANTS[t].into(),
            category: CATEGORIES[c].into(),
            updated_at: NOW - age,
            permitted_users: USERS
                .iter()
                .enumerate()
                .filter(|(i, _)| users & (1 << i) != 0)
                .map(|(_, u)| u.to_string())
                .collect(),
            version: 0,
        })
}

fn corpus() -> impl Strategy<Value = Vec<Document>> {
    (1usize..60).prop_flat_map(|n| (0..n as u64).map(document).collect::<Vec<_>>())
}

fn constraint() -> impl Strategy<Value = QueryConstraint> {
    (
        vector(),
        1usize..8,
        prop::sample::select(ConstraintClass::ALL.to_vec()),
        0..TENANTS.len(),
        1i64..10 * MICROS_PER_DAY,
        prop::collection::btree_set(0..CATEGORIES.len(), 1..3),
        0..USERS.len(),
    )
        .prop_map(|(q, k, class, t, age, cats, u)| {
            let tenant = TENANTS[t].to_string();
            let cats: Vec<String> = cats
                .into_iter()
                .map(|i| CATEGORIES[i].to_string())
                .collect();
            match class {
                ConstraintClass::PureSimilarity => QueryConstraint::pure(q, k),
                ConstraintClass::DateFiltered => QueryConstraint::date_filtered(q, k, age),
                ConstraintClass::TenantCategory => {
                    QueryConstraint::tenant_category(q, k, tenant, cats)
                }
                ConstraintClass::FullMultiConstraint => {
                    QueryConstraint::full(q, k, tenant, age, cats, USERS[u].to_string())
                }
            }
        })
}

fn cosine64(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    let na: f64 = a.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

fn admissible(d: &Document, c: &QueryConstraint, now: Timestamp) -> bool {
    c.tenant_id.as_ref().is_none_or(|t| &d.tenant_id == t)
        && c.categories
            .as_ref()
            .is_none_or(|cs| cs.contains(&d.category))
        && c.max_age.is_none_or(|a| d.updated_at > now - a)
        && c.user_id
            .as_ref()
            .is_none_or(|u| d.permitted_users.contains(u))
}

/// Distances of the oracle's top-k, ascending.
fn oracle_distances(docs: &[Document], c: &QueryConstraint) -> Vec<f64> {
    let mut d: Vec<f64> = docs
        .iter()
        .filter(|d| admissible(d, c, NOW))
        .map(|d| cosine64(&d.embedding, &c.query_embedding))
        .collect();
    d.sort_by(f64::total_cmp);
    d.truncate(c.k);
    d
}

fn load(docs: &[Document]) -> UnifiedStore {
    let s = UnifiedStore::open(DIM, HnswParams::default()).unwrap();
    for d in docs {
        s.upsert(d.clone()).unwrap();
    }
    s
}

fn check_against_oracle(
    hits: &[SearchHit],
    docs: &[Document],
    c: &QueryConstraint,
) -> Result<(), TestCaseError> {
    let by_id: HashMap<u64, &Document> = docs.iter().map(|d| (d.id, d)).collect();
    for h in hits {
        let d = by_id.get(&h.document_id).expect("hit is a stored document");
        prop_assert!(
            admissible(d, c, NOW),
            "hit {} violates {:?}",
            h.document_id,
            c
        );
        prop_assert_eq!(&h.content, &d.content);
        prop_assert_eq!(h.content_version, h.embedding_version);
    }
    let want = oracle_distances(docs, c);
    prop_assert_eq!(hits.len(), want.len());
    for (h, w) in hits.iter().zip(&want) {
        prop_assert!((h.distance - w).abs() < 1e-5, "{} vs {}", h.distance, w);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn queries_match_the_brute_force_oracle(docs in corpus(), c in constraint()) {
        let store = load(&docs);
        check_against_oracle(&store.query(&c, NOW).unwrap(), &docs, &c)?;
    }

    #[test]
    fn graph_path_matches_the_oracle_on_distances(docs in corpus(), c in constraint()) {
        // exact_threshold 0 forces every query through the graph
        let store = UnifiedStore::open(DIM, HnswParams { exact_threshold: 0, ..Default::default() }).unwrap();
        for d in &docs {
            store.upsert(d.clone()).unwrap();
        }
        let hits = store.query_with_ef(&c, NOW, 64).unwrap();
        let by_id: HashMap<u64, &Document> = docs.iter().map(|d| (d.id, d)).collect();
        for h in &hits {
            prop_assert!(admissible(by_id[&h.document_id], &c, NOW));
        }
        prop_assert_eq!(hits.len(), oracle_distances(&docs, &c).len());
    }

    #[test]
    fn rewrites_and_deletes_are_reflected(docs in corpus(), rewrites in prop::collection::vec((0usize..60, vector()), 0..30), deletes in prop::collection::btree_set(0usize..60, 0..10), c in constraint()) {
        let store = load(&docs);
        let mut current: Vec<Document> = docs.clone();
        for (i, v) in rewrites {
            if let Some(d) = current.get_mut(i % docs.len()) {
                d.embedding = v;
                d.content.push_str(" rewritten");
                store.upsert(d.clone()).unwrap();
            }
        }
        let gone: BTreeSet<u64> = deletes.iter().filter(|&&i| i < docs.len()).map(|&i| i as u64).collect();
        for &id in &gone {
            store.delete(id).unwrap();
        }
        current.retain(|d| !gone.contains(&d.id));
        prop_assert_eq!(store.len(), current.len());
        check_against_oracle(&store.query(&c, NOW).unwrap(), &current, &c)?;
    }

    #[test]
    fn save_load_answers_identically(docs in corpus(), cs in prop::collection::vec(constraint(), 1..6)) {
        let store = load(&docs);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        store.save(&path).unwrap();
        let back = UnifiedStore::load(&path).unwrap();
        prop_assert_eq!(back.documents(), store.documents());
        for c in &cs {
            prop_assert_eq!(back.query(c, NOW).unwrap(), store.query(c, NOW).unwrap());
        }
    }
}

#[test]
fn concurrent_readers_never_see_torn_rows() {
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;

    let docs: Vec<Document> = (0..50u64)
        .map(|id| Document {
            id,
            content: format!("{id}:0"),
            embedding: vec![1.0, id as f32, 0.5, -0.5],
            tenant_id: TENANTS[id as usize % 3].into(),
            category: "legal".into(),
            updated_at: NOW,
            permitted_users: BTreeSet::from(["u0".to_string()]),
            version: 0,
        })
        .collect();
    let store = Arc::new(load(&docs));
    let stop = Arc::new(AtomicBool::new(false));
    let reader = {
        let (store, stop) = (Arc::clone(&store), Arc::clone(&stop));
        std::thread::spawn(move || {
            let mut torn = 0;
            let mut reads = 0;
            while !stop.load(Ordering::Relaxed) || reads < 100 {
                let c = QueryConstraint::pure(vec![1.0, 25.0, 0.5, -0.5], 5);
                for h in store.query(&c, NOW).unwrap() {
                    torn += usize::from(h.is_torn());
                    reads += 1;
                }
            }
            torn
        })
    };
    for round in 1..=200u64 {
        let mut d = docs[(round % 50) as usize].clone();
        d.embedding[2] = round as f32 / 100.0;
        d.content = format!("{}:{round}", d.id);
        store.upsert(d).unwrap();
    }
    stop.store(true, Ordering::Relaxed);
    assert_eq!(reader.join().unwrap(), 0);
}
