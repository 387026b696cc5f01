use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Neighbor, NodeId};

/// A scored node ordered by `(distance, id)`, so ties resolve by ascending id.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scored {
    pub distance: f64,
    pub id: NodeId,
    pub slot: u32,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

/// Keeps the `k` smallest items seen.
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Scored>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    pub fn push(&mut self, item: Scored) {
        if self.heap.len() < self.k {
            self.heap.push(item);
        } else if let Some(worst) = self.heap.peek() {
            if item < *worst {
                self.heap.pop();
                self.heap.push(item);
            }
        }
    }

    /// Whether `push(item)` would keep it.
    pub fn admits(&self, item: &Scored) -> bool {
        self.heap.len() < self.k || self.heap.peek().is_some_and(|w| item < w)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn into_neighbors(self) -> Vec<Neighbor> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|s| Neighbor {
                id: s.id,
                distance: s.distance,
            })
            .collect()
    }
}
