use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::topk::{Scored, TopK};
use super::{HnswParams, Neighbor, NodeId};
use crate::distance::{cosine_distance_with_norms, norm};
use crate::error::{invalid, Error, Result};

const MAX_LEVEL: usize = 32;

/// Beams wider than `live / SCAN_BEAM_RATIO` (and wider than the configured
/// `ef_search`) are answered by an exact scan instead.
pub const SCAN_BEAM_RATIO: usize = 20;

/// Hierarchical navigable small world graph.
///
/// Nodes live in dense slots. Removing a node tombstones its slot: the node
/// stays in the graph and is still traversed, but never returned. Re-inserting
/// a removed id allocates a fresh slot.
#[derive(Debug, Clone)]
pub struct HnswGraph {
    dim: usize,
    params: HnswParams,
    vectors: Vec<f32>,
    norms: Vec<f64>,
    ids: Vec<NodeId>,
    /// `links[slot][layer]`, one list per layer the node lives on.
    links: Vec<Vec<Vec<u32>>>,
    tombstoned: Vec<bool>,
    live: HashMap<NodeId, u32>,
    entry: Option<u32>,
    rng: ChaCha8Rng,
}

struct Visited(Vec<u64>);

impl Visited {
    fn new(n: usize) -> Self {
        Self(vec![0; n.div_ceil(64)])
    }

    /// Marks `slot`, returning `true` if it was not marked before.
    #[inline]
    fn insert(&mut self, slot: u32) -> bool {
        let (word, bit) = ((slot / 64) as usize, slot % 64);
        let mask = 1u64 << bit;
        let fresh = self.0[word] & mask == 0;
        self.0[word] |= mask;
        fresh
    }
}

impl HnswGraph {
    pub fn new(dim: usize, params: HnswParams) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        params.validate()?;
        Ok(Self {
            dim,
            params,
            vectors: Vec::new(),
            norms: Vec::new(),
            ids: Vec::new(),
            links: Vec::new(),
            tombstoned: Vec::new(),
            live: HashMap::new(),
            entry: None,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    /// Number of live (non-tombstoned) nodes.
    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    /// Number of slots, including tombstoned ones.
    pub fn slot_count(&self) -> usize {
        self.ids.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.live.contains_key(&id)
    }

    pub fn vector(&self, id: NodeId) -> Option<&[f32]> {
        self.live.get(&id).map(|&s| self.slot_vector(s))
    }

    pub fn entry_point(&self) -> Option<NodeId> {
        self.entry.map(|s| self.ids[s as usize])
    }

    /// Iterates live nodes in slot (insertion) order.
    pub fn iter_live(&self) -> impl Iterator<Item = (NodeId, &[f32])> + '_ {
        (0..self.ids.len())
            .filter(move |&s| !self.tombstoned[s])
            .map(move |s| (self.ids[s], self.slot_vector(s as u32)))
    }

    #[inline]
    fn slot_vector(&self, slot: u32) -> &[f32] {
        let start = slot as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    #[inline]
    fn level_of(&self, slot: u32) -> usize {
        self.links[slot as usize].len() - 1
    }

    #[inline]
    fn score(&self, query: &[f32], qnorm: f64, slot: u32) -> Scored {
        let s = slot as usize;
        Scored {
            distance: cosine_distance_with_norms(
                query,
                qnorm,
                self.slot_vector(slot),
                self.norms[s],
            ),
            id: self.ids[s],
            slot,
        }
    }

    fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(invalid("query vector has non-finite coordinates"));
        }
        Ok(())
    }

    fn sample_level(&mut self) -> usize {
        let u: f64 = self.rng.gen();
        let level = (-(1.0 - u).ln() * self.params.level_factor()).floor();
        (level as usize).min(MAX_LEVEL)
    }

    pub fn insert(&mut self, id: NodeId, vector: &[f32]) -> Result<()> {
        self.check_query(vector)?;
        if self.live.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let slot = u32::try_from(self.ids.len()).map_err(|_| invalid("index is full"))?;
        let level = self.sample_level();

        self.vectors.extend_from_slice(vector);
        self.norms.push(norm(vector));
        self.ids.push(id);
        self.links.push(vec![Vec::new(); level + 1]);
        self.tombstoned.push(false);
        self.live.insert(id, slot);

        let Some(entry) = self.entry else {
            self.entry = Some(slot);
            return Ok(());
        };

        let qnorm = self.norms[slot as usize];
        let top = self.level_of(entry);
        let mut visited = Visited::new(self.ids.len());
        let mut eps = vec![self.score(vector, qnorm, entry)];
        for layer in (level + 1..=top).rev() {
            eps = self.search_layer(vector, qnorm, &eps, 1, layer, &mut visited, |_| {});
            visited = Visited::new(self.ids.len());
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(
                vector,
                qnorm,
                &eps,
                self.params.ef_construction,
                layer,
                &mut visited,
                |_| {},
            );
            let chosen = self.select_neighbors(&found, self.params.m);
            self.links[slot as usize][layer] = chosen.iter().map(|s| s.slot).collect();
            for nb in chosen {
                self.connect(nb.slot, slot, layer);
            }
            eps = found;
            visited = Visited::new(self.ids.len());
        }

        if level > top {
            self.entry = Some(slot);
        }
        Ok(())
    }

    /// Adds `new` to `node`'s adjacency on `layer`, shrinking if over capacity.
    fn connect(&mut self, node: u32, new: u32, layer: usize) {
        let cap = self.params.max_links(layer);
        let list = &mut self.links[node as usize][layer];
        list.push(new);
        if list.len() <= cap {
            return;
        }
        let base = self.slot_vector(node);
        let base_norm = self.norms[node as usize];
        let mut scored: Vec<Scored> = self.links[node as usize][layer]
            .iter()
            .map(|&s| self.score(base, base_norm, s))
            .collect();
        scored.sort_unstable();
        let kept = if self.params.keep_pruned {
            scored.truncate(cap);
            scored
        } else {
            self.select_neighbors(&scored, cap)
        };
        self.links[node as usize][layer] = kept.into_iter().map(|s| s.slot).collect();
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the base
    /// than to every neighbor already kept. With `keep_pruned`, remaining
    /// capacity is filled with the closest rejected candidates.
    fn select_neighbors(&self, sorted: &[Scored], m: usize) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut rejected = Vec::new();
        for &cand in sorted {
            if kept.len() >= m {
                break;
            }
            let cv = self.slot_vector(cand.slot);
            let cn = self.norms[cand.slot as usize];
            let diverse = kept.iter().all(|k| {
                let d = cosine_distance_with_norms(
                    cv,
                    cn,
                    self.slot_vector(k.slot),
                    self.norms[k.slot as usize],
                );
                d >= cand.distance
            });
            if diverse {
                kept.push(cand);
            } else if self.params.keep_pruned {
                rejected.push(cand);
            }
        }
        for r in rejected {
            if kept.len() >= m {
                break;
            }
            kept.push(r);
        }
        kept
    }

    /// Beam search on one layer. Returns up to `ef` nodes in ascending order.
    /// `on_eval` sees every node whose distance is computed, entries included.
    #[allow(clippy::too_many_arguments)]
    fn search_layer(
        &self,
        query: &[f32],
        qnorm: f64,
        entries: &[Scored],
        ef: usize,
        layer: usize,
        visited: &mut Visited,
        mut on_eval: impl FnMut(Scored),
    ) -> Vec<Scored> {
        let mut candidates: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        let mut beam: BinaryHeap<Scored> = BinaryHeap::new();
        for &e in entries {
            if visited.insert(e.slot) {
                on_eval(e);
                candidates.push(Reverse(e));
                beam.push(e);
                if beam.len() > ef {
                    beam.pop();
                }
            }
        }
        while let Some(Reverse(cur)) = candidates.pop() {
            match beam.peek() {
                Some(worst) if cur > *worst => break,
                _ => {}
            }
            for &nb in &self.links[cur.slot as usize][layer] {
                if !visited.insert(nb) {
                    continue;
                }
                let s = self.score(query, qnorm, nb);
                on_eval(s);
                let admit = beam.len() < ef || beam.peek().is_some_and(|w| s < *w);
                if admit {
                    candidates.push(Reverse(s));
                    beam.push(s);
                    if beam.len() > ef {
                        beam.pop();
                    }
                }
            }
        }
        beam.into_sorted_vec()
    }

    /// Tombstones `id`. The node keeps its edges so traversal can pass through it.
    pub fn remove(&mut self, id: NodeId) -> Result<()> {
        let slot = self.live.remove(&id).ok_or(Error::UnknownId(id))?;
        self.tombstoned[slot as usize] = true;
        if self.entry == Some(slot) {
            self.entry = (0..self.ids.len() as u32)
                .filter(|&s| !self.tombstoned[s as usize])
                .max_by(|&a, &b| self.level_of(a).cmp(&self.level_of(b)).then(b.cmp(&a)));
        }
        Ok(())
    }

    pub fn search(&self, query: &[f32], k: usize, ef_search: usize) -> Result<Vec<Neighbor>> {
        self.filtered_search(query, k, ef_search, |_| true, None)
    }

    /// Top-k among nodes accepted by `predicate`.
    ///
    /// The predicate is applied while the graph is traversed; rejected and
    /// tombstoned nodes are still used for navigation. `selectivity_hint` is
    /// the caller's estimate of how many live nodes the predicate accepts:
    /// below `exact_threshold` the search scans accepted nodes exactly,
    /// otherwise the beam is widened so it is expected to contain about `k`
    /// accepted nodes. If the traversal still finds fewer than `k` accepted
    /// nodes, the result is completed by an exact scan.
    pub fn filtered_search<P>(
        &self,
        query: &[f32],
        k: usize,
        ef_search: usize,
        predicate: P,
        selectivity_hint: Option<usize>,
    ) -> Result<Vec<Neighbor>>
    where
        P: Fn(NodeId) -> bool,
    {
        self.check_query(query)?;
        if k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        if ef_search < k {
            return Err(invalid(format!(
                "ef_search ({ef_search}) must be >= k ({k})"
            )));
        }
        let Some(entry) = self.entry else {
            return Ok(Vec::new());
        };
        if let Some(hint) = selectivity_hint {
            if hint < self.params.exact_threshold {
                return Ok(self.scan(query, k, &predicate));
            }
        }

        let slots = self.ids.len();
        let accepted = selectivity_hint
            .unwrap_or(self.live.len())
            .clamp(1, self.live.len().max(1));
        let widened = (k as u128 * slots as u128).div_ceil(accepted as u128);
        let ef = (ef_search as u128).max(widened).min(slots as u128) as usize;
        if ef > self.params.ef_search && ef.saturating_mul(SCAN_BEAM_RATIO) >= self.live.len() {
            // a beam this wide touches most of the graph; a linear scan is cheaper
            return Ok(self.scan(query, k, &predicate));
        }

        let qnorm = norm(query);
        let mut eps = vec![self.score(query, qnorm, entry)];
        for layer in (1..=self.level_of(entry)).rev() {
            let mut visited = Visited::new(slots);
            eps = self.search_layer(query, qnorm, &eps, 1, layer, &mut visited, |_| {});
        }
        let mut top = TopK::new(k);
        let mut visited = Visited::new(slots);
        self.search_layer(query, qnorm, &eps, ef, 0, &mut visited, |s| {
            // predicate last: it is the expensive check and most evaluated
            // nodes cannot enter the top-k anyway
            if !self.tombstoned[s.slot as usize] && top.admits(&s) && predicate(s.id) {
                top.push(s);
            }
        });
        if top.len() < k.min(self.live.len()) {
            // traversal came up short: the predicate is rarer than hinted
            return Ok(self.scan(query, k, &predicate));
        }
        Ok(top.into_neighbors())
    }

    /// Exact top-k over every live node accepted by `predicate`.
    pub fn scan<P>(&self, query: &[f32], k: usize, predicate: P) -> Vec<Neighbor>
    where
        P: Fn(NodeId) -> bool,
    {
        let qnorm = norm(query);
        let mut top = TopK::new(k.max(1));
        for slot in 0..self.ids.len() as u32 {
            if self.tombstoned[slot as usize] || !predicate(self.ids[slot as usize]) {
                continue;
            }
            top.push(self.score(query, qnorm, slot));
        }
        top.into_neighbors()
    }

    /// Exact top-k among the given live ids; unknown or removed ids are skipped.
    pub fn rank_ids<I>(&self, query: &[f32], k: usize, ids: I) -> Result<Vec<Neighbor>>
    where
        I: IntoIterator<Item = NodeId>,
    {
        self.check_query(query)?;
        if k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        let qnorm = norm(query);
        let mut top = TopK::new(k);
        for id in ids {
            if let Some(&slot) = self.live.get(&id) {
                top.push(self.score(query, qnorm, slot));
            }
        }
        Ok(top.into_neighbors())
    }

    /// Checks structural invariants, returning a description of the first
    /// violation found.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.ids.len();
        for (slot, layers) in self.links.iter().enumerate() {
            for (layer, list) in layers.iter().enumerate() {
                let cap = self.params.max_links(layer);
                if list.len() > cap {
                    return Err(format!(
                        "slot {slot} layer {layer} has {} links (cap {cap})",
                        list.len()
                    ));
                }
                for &nb in list {
                    if nb as usize >= n {
                        return Err(format!("slot {slot} links to missing slot {nb}"));
                    }
                    if self.level_of(nb) < layer {
                        return Err(format!(
                            "slot {slot} links to {nb} above its level on {layer}"
                        ));
                    }
                }
            }
        }
        match self.entry {
            None if !self.live.is_empty() => return Err("live nodes but no entry point".into()),
            Some(e) => {
                if self.tombstoned[e as usize] {
                    return Err("entry point is tombstoned".into());
                }
                let max_live = self
                    .live
                    .values()
                    .map(|&s| self.level_of(s))
                    .max()
                    .unwrap_or(0);
                if self.level_of(e) != max_live {
                    return Err(format!(
                        "entry level {} below max live level {max_live}",
                        self.level_of(e)
                    ));
                }
            }
            None => {}
        }
        for (&id, &slot) in &self.live {
            if self.ids[slot as usize] != id || self.tombstoned[slot as usize] {
                return Err(format!("live map inconsistent for id {id}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::exact_knn;
    use rand_distr::{Distribution, StandardNormal};

    fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| (x / n) as f32).collect()
    }

    fn build(n: usize, dim: usize, seed: u64) -> (HnswGraph, Vec<Vec<f32>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Vec<f32>> = (0..n).map(|_| random_unit(&mut rng, dim)).collect();
        let mut g = HnswGraph::new(dim, HnswParams::default()).unwrap();
        for (i, v) in data.iter().enumerate() {
            g.insert(i as u64, v).unwrap();
        }
        (g, data)
    }

    #[test]
    fn create_validates() {
        assert!(HnswGraph::new(0, HnswParams::default()).is_err());
        let g = HnswGraph::new(128, HnswParams::default()).unwrap();
        assert!(g.is_empty());
        assert!(g.search(&[0.0; 128], 5, 40).unwrap().is_empty());
        let p = HnswParams {
            m: 2,
            ef_construction: 2,
            ..Default::default()
        };
        let mut g = HnswGraph::new(1, p).unwrap();
        g.insert(1, &[2.0]).unwrap();
        g.insert(2, &[-1.0]).unwrap();
        let out = g.search(&[1.0], 2, 2).unwrap();
        assert_eq!(out[0].id, 1);
        assert_eq!(out[1].distance, 2.0);
    }

    #[test]
    fn single_insert_self_match() {
        let mut g = HnswGraph::new(3, HnswParams::default()).unwrap();
        g.insert(42, &[0.1, 0.2, 0.3]).unwrap();
        let out = g.search(&[0.1, 0.2, 0.3], 1, 40).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, 42);
        assert!(out[0].distance.abs() < 1e-12);
    }

    #[test]
    fn insert_errors() {
        let mut g = HnswGraph::new(3, HnswParams::default()).unwrap();
        assert!(matches!(
            g.insert(1, &[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        ));
        g.insert(1, &[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            g.insert(1, &[1.0, 2.0, 3.0]),
            Err(Error::DuplicateId(1))
        ));
        assert!(matches!(g.remove(9), Err(Error::UnknownId(9))));
        assert!(g.search(&[1.0, 2.0, 3.0], 5, 4).is_err());
        assert!(matches!(
            g.search(&[1.0, 2.0], 1, 4),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn remove_only_node() {
        let mut g = HnswGraph::new(2, HnswParams::default()).unwrap();
        g.insert(5, &[1.0, 0.0]).unwrap();
        g.remove(5).unwrap();
        assert!(g.search(&[1.0, 0.0], 1, 40).unwrap().is_empty());
        g.validate().unwrap();
        // id can come back after removal
        g.insert(5, &[0.0, 1.0]).unwrap();
        assert_eq!(g.search(&[0.0, 1.0], 1, 40).unwrap()[0].id, 5);
    }

    #[test]
    fn recall_on_1000_unit_vectors() {
        let (g, data) = build(1_000, 32, 11);
        g.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let items: Vec<(u64, &[f32])> = data
            .iter()
            .enumerate()
            .map(|(i, v)| (i as u64, v.as_slice()))
            .collect();
        let mut total = 0.0;
        for _ in 0..100 {
            let q = random_unit(&mut rng, 32);
            let approx = g.search(&q, 10, 40).unwrap();
            let exact = exact_knn(items.iter().copied(), &q, 10, |_| true).unwrap();
            total += crate::index::recall(&approx, &exact);
        }
        assert!(total / 100.0 >= 0.95, "recall {}", total / 100.0);
    }

    #[test]
    fn remove_half_keeps_recall_on_live_set() {
        let (mut g, data) = build(1_000, 32, 21);
        for id in (0..1_000u64).filter(|i| i % 2 == 0) {
            g.remove(id).unwrap();
        }
        g.validate().unwrap();
        assert_eq!(g.len(), 500);
        let live: Vec<(u64, &[f32])> = data
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 2 == 1)
            .map(|(i, v)| (i as u64, v.as_slice()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut total = 0.0;
        for _ in 0..100 {
            let q = random_unit(&mut rng, 32);
            let approx = g.search(&q, 10, 40).unwrap();
            assert!(approx.iter().all(|n| n.id % 2 == 1));
            let exact = exact_knn(live.iter().copied(), &q, 10, |_| true).unwrap();
            total += crate::index::recall(&approx, &exact);
        }
        assert!(total / 100.0 >= 0.9, "recall {}", total / 100.0);
    }

    #[test]
    fn filtered_single_accept_and_none() {
        let (g, data) = build(1_000, 16, 31);
        let q = &data[3];
        let target = 777u64;
        let out = g
            .filtered_search(q, 5, 40, |id| id == target, None)
            .unwrap();
        let oracle = exact_knn(
            data.iter()
                .enumerate()
                .map(|(i, v)| (i as u64, v.as_slice())),
            q,
            5,
            |id| id == target,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, target);
        assert!((out[0].distance - oracle[0].distance).abs() < 1e-12);

        assert!(g
            .filtered_search(q, 5, 40, |_| false, None)
            .unwrap()
            .is_empty());
        assert_eq!(
            g.filtered_search(q, 5, 40, |_| true, None).unwrap(),
            g.search(q, 5, 40).unwrap()
        );
    }

    #[test]
    fn selective_hint_uses_exact_scan() {
        let (g, data) = build(500, 8, 41);
        let pred = |id: u64| id.is_multiple_of(50);
        let out = g.filtered_search(&data[0], 3, 40, pred, Some(10)).unwrap();
        let oracle = exact_knn(
            data.iter()
                .enumerate()
                .map(|(i, v)| (i as u64, v.as_slice())),
            &data[0],
            3,
            pred,
        )
        .unwrap();
        assert_eq!(out, oracle);
    }

    #[test]
    fn deterministic_given_seed() {
        let (a, data) = build(300, 8, 51);
        let (b, _) = build(300, 8, 51);
        assert_eq!(a.links, b.links);
        assert_eq!(
            a.search(&data[7], 5, 40).unwrap(),
            b.search(&data[7], 5, 40).unwrap()
        );
    }

    #[test]
    fn entry_point_moves_on_removal() {
        let (mut g, _) = build(200, 8, 61);
        let entry = g.entry_point().unwrap();
        g.remove(entry).unwrap();
        g.validate().unwrap();
        assert_ne!(g.entry_point(), Some(entry));
    }
}
