//! Cosine distance over raw (not normalized) embedding values.
//!
//! Norms are precomputed per stored vector; the final ratio is taken in `f64`.

use crate::error::{Error, Result};

/// An embedding vector with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f32>);

impl Vector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "vector coordinate {pos} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

impl TryFrom<Vec<f32>> for Vector {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        Self::new(values)
    }
}

impl AsRef<[f32]> for Vector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// Dot product with eight independent `f32` lanes, widened to `f64` once.
///
/// `dot(a, a)` and `dot(a, -a)` are computed by identical operation
/// sequences, so self and opposite distances stay exact after normalization.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail: f32 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        let ca: &[f32; 8] = ca.try_into().unwrap();
        let cb: &[f32; 8] = cb.try_into().unwrap();
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    let lanes = ((acc[0] as f64 + acc[1] as f64) + (acc[2] as f64 + acc[3] as f64))
        + ((acc[4] as f64 + acc[5] as f64) + (acc[6] as f64 + acc[7] as f64));
    lanes + tail as f64
}

#[inline]
pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// `1 - cos(a, b)` given precomputed norms, clamped to `[0, 2]`.
///
/// A zero vector has no direction; its distance to anything is 1.
#[inline]
pub fn cosine_distance_with_norms(a: &[f32], norm_a: f64, b: &[f32], norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        return 1.0;
    }
    let sim = dot(a, b) / (norm_a * norm_b);
    (1.0 - sim).clamp(0.0, 2.0)
}

pub fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    cosine_distance_with_norms(a, norm(a), b, norm(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f32]) -> Vec<f32> {
        let n = norm(v) as f32;
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn identical_opposite_orthogonal() {
        let u = unit(&[0.3, -1.2, 0.5, 2.0]);
        let neg: Vec<f32> = u.iter().map(|x| -x).collect();
        assert!(cosine_distance(&u, &u).abs() < 1e-9);
        assert!((cosine_distance(&u, &neg) - 2.0).abs() < 1e-9);

        let e1 = [1.0f32, 0.0, 0.0];
        let e2 = [0.0f32, 1.0, 0.0];
        assert!((cosine_distance(&e1, &e2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scale_invariant() {
        let a = [1.0f32, 2.0, 3.0];
        let b = [2.0f32, 4.0, 6.0];
        assert!(cosine_distance(&a, &b).abs() < 1e-9);
    }

    #[test]
    fn zero_vector_is_orthogonal_to_everything() {
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Vector::new(vec![1.0, f32::NAN]).is_err());
        assert!(Vector::new(vec![f32::INFINITY]).is_err());
        assert_eq!(Vector::new(vec![1.0, 2.0]).unwrap().dim(), 2);
    }
}
