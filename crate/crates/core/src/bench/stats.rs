use std::time::Duration;

use serde::Serialize;

use crate::error::{invalid, Result};

/// Nearest-rank latency percentiles over one measured series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatencyStats {
    pub p50: Duration,
    pub p95: Duration,
    pub p99: Duration,
    pub mean: Duration,
    pub count: usize,
}

/// Nearest-rank percentile of ascending `sorted`: the value at rank
/// `ceil(p/100 * n)` (1-based). `p` in (0, 100].
pub fn nearest_rank<T: Copy>(sorted: &[T], p: f64) -> T {
    assert!(!sorted.is_empty(), "percentile of an empty series");
    let n = sorted.len();
    let rank = (p * n as f64 / 100.0).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

impl LatencyStats {
    pub fn from_samples(samples: &[Duration]) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("no latency samples"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let total: Duration = sorted.iter().sum();
        Ok(Self {
            p50: nearest_rank(&sorted, 50.0),
            p95: nearest_rank(&sorted, 95.0),
            p99: nearest_rank(&sorted, 99.0),
            mean: total / sorted.len() as u32,
            count: sorted.len(),
        })
    }
}
