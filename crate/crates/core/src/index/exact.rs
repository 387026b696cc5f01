use super::topk::{Scored, TopK};
use super::{Neighbor, NodeId};
use crate::distance::{cosine_distance_with_norms, norm};
use crate::error::{invalid, Error, Result};

/// Brute-force filtered top-k under cosine distance, ties broken by id.
pub fn exact_knn<'a, I, P>(
    vectors: I,
    query: &[f32],
    k: usize,
    predicate: P,
) -> Result<Vec<Neighbor>>
where
    I: IntoIterator<Item = (NodeId, &'a [f32])>,
    P: Fn(NodeId) -> bool,
{
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    let qn = norm(query);
    let mut top = TopK::new(k);
    for (id, v) in vectors {
        if v.len() != query.len() {
            return Err(Error::DimensionMismatch {
                expected: v.len(),
                actual: query.len(),
            });
        }
        if !predicate(id) {
            continue;
        }
        let distance = cosine_distance_with_norms(query, qn, v, norm(v));
        top.push(Scored {
            distance,
            id,
            slot: 0,
        });
    }
    Ok(top.into_neighbors())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_vector() {
        let v = [0.5f32, 0.5];
        let out = exact_knn([(7, &v[..])], &[1.0, 1.0], 3, |_| true).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, 7);
        assert!(out[0].distance.abs() < 1e-12);
    }

    #[test]
    fn orthonormal_basis_tie_break() {
        let basis: Vec<Vec<f32>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        // ids deliberately out of order
        let ids = [10u64, 40, 30, 20];
        let items: Vec<(u64, &[f32])> = ids
            .iter()
            .zip(&basis)
            .map(|(&id, v)| (id, v.as_slice()))
            .collect();
        let out = exact_knn(items, &basis[0], 2, |_| true).unwrap();
        assert_eq!(out[0].id, 10);
        assert_eq!(out[0].distance, 0.0);
        assert_eq!(out[1].id, 20);
        assert_eq!(out[1].distance, 1.0);
    }

    #[test]
    fn predicate_and_errors() {
        let a = [1.0f32, 0.0];
        let b = [0.0f32, 1.0];
        let out = exact_knn([(1, &a[..]), (2, &b[..])], &a, 2, |id| id == 2).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, 2);
        let bad = [1.0f32];
        assert!(matches!(
            exact_knn([(1, &bad[..])], &a, 1, |_| true),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(exact_knn([(1, &a[..])], &a, 0, |_| true).is_err());
    }
}
