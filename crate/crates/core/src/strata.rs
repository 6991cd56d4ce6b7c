//! The permutation stratification of filter space.
//!
//! A key `π` lists the vertices in ascending filter order and names the closed
//! cell `S_π = {x : x[π[0]] <= x[π[1]] <= ...}`. The mirror of `x` in `S_π` places
//! the sorted coordinates of `x` along `π`; its distance to `x` is within a factor
//! two of the true distance to the cell.
//!
//! Nearby mirrors are found by walking the Cayley graph of adjacent
//! transpositions from the cell containing `x`. Every mirror has a neighbour with
//! one fewer inversion that is no farther from `x`, so pruning at radius `ε` loses
//! nothing.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use lru::LruCache;
use ordered_float::OrderedFloat;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::complex::argsort;
use crate::persistence::PersistencePairing;

/// A permutation naming a closed cell of filter space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StratumKey(Vec<usize>);

impl StratumKey {
    /// Returns `None` unless `perm` is a bijection on `0..perm.len()`.
    pub fn new(perm: Vec<usize>) -> Option<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return None;
            }
        }
        Some(Self(perm))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// The cell containing `x`; ties keep index order.
    pub fn of(x: &[f64]) -> Self {
        Self(argsort(x))
    }

    pub fn perm(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `ranks[v]` is the position of vertex `v` in the order.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            r[v] = i;
        }
        r
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.0.windows(2).all(|w| x[w[0]] <= x[w[1]])
    }

    /// Vertex pairs `(a, b)` with `a < b` that the order places as `b` before `a`.
    pub fn inversions(&self) -> HashSet<(usize, usize)> {
        let mut out = HashSet::new();
        for i in 0..self.0.len() {
            for j in i + 1..self.0.len() {
                if self.0[i] > self.0[j] {
                    out.insert((self.0[j], self.0[i]));
                }
            }
        }
        out
    }
}

/// A mirror point discovered near a query.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumSample {
    pub key: StratumKey,
    pub point: Vec<f64>,
    /// Euclidean distance from the query to `point`.
    pub dist_estimate: f64,
    /// Within-stratum gradient at `point`; empty until an objective fills it.
    pub gradient: Vec<f64>,
}

/// The point of `S_π` obtained by placing the sorted coordinates of `x` along `π`.
pub fn mirror(x: &[f64], key: &StratumKey) -> Vec<f64> {
    assert_eq!(x.len(), key.len(), "filter and key lengths differ");
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut p = vec![0.0; x.len()];
    for (i, &v) in key.perm().iter().enumerate() {
        p[v] = sorted[i];
    }
    p
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Nondecreasing least-squares fit (pool adjacent violators).
pub fn isotonic_regression(y: &[f64]) -> Vec<f64> {
    // Blocks of (mean, weight).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m2, w2) = blocks.pop().unwrap();
            let (m1, w1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, w)| std::iter::repeat_n(m, w))
        .collect()
}

/// Euclidean projection of `x` onto `S_π`.
pub fn project_to_cell(x: &[f64], key: &StratumKey) -> Vec<f64> {
    let y: Vec<f64> = key.perm().iter().map(|&v| x[v]).collect();
    let fit = isotonic_regression(&y);
    let mut p = vec![0.0; x.len()];
    for (i, &v) in key.perm().iter().enumerate() {
        p[v] = fit[i];
    }
    p
}

/// Distance from `x` to the closed cell `S_π`.
pub fn exact_distance_to_cell(x: &[f64], key: &StratumKey) -> f64 {
    euclidean(x, &project_to_cell(x, key))
}

/// Change in squared mirror distance when entries `i` and `i + 1` of a node are
/// swapped. `y` is the sorted query and `node[i]` is the coordinate that receives
/// `y[i]`.
pub fn swap_delta(y: &[f64], node: &[usize], i: usize) -> f64 {
    let (a, b) = (node[i], node[i + 1]);
    let old = (y[i] - y[a]).powi(2) + (y[i + 1] - y[b]).powi(2);
    let new = (y[i] - y[b]).powi(2) + (y[i + 1] - y[a]).powi(2);
    new - old
}

fn squared_mirror_distance(y: &[f64], node: &[usize]) -> f64 {
    node.iter().enumerate().map(|(i, &c)| (y[i] - y[c]).powi(2)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Traversal {
    /// Closest nodes first; a cap keeps the closest ones.
    #[default]
    BestFirst,
    /// Depth-first with radius pruning.
    Dfs,
}

/// Options for [`sample_nearby_strata_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SearchOptions {
    pub cap: Option<usize>,
    pub traversal: Traversal,
}

/// All non-identity mirrors within `eps` of `x`, closest first. With a cap only
/// the `cap` closest are kept.
pub fn sample_nearby_strata(x: &[f64], eps: f64, cap: Option<usize>) -> Vec<StratumSample> {
    sample_nearby_strata_with(
        x,
        eps,
        SearchOptions {
            cap,
            traversal: Traversal::BestFirst,
        },
    )
}

pub fn sample_nearby_strata_with(x: &[f64], eps: f64, opts: SearchOptions) -> Vec<StratumSample> {
    let n = x.len();
    let order = argsort(x);
    let y: Vec<f64> = order.iter().map(|&v| x[v]).collect();
    let eps2 = eps * eps;
    let identity: Vec<usize> = (0..n).collect();

    let mut found: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    match opts.traversal {
        Traversal::BestFirst => {
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((OrderedFloat(0.0), identity.clone())));
            while let Some(Reverse((OrderedFloat(d2), node))) = heap.pop() {
                if !visited.insert(node.clone()) {
                    continue;
                }
                if node != identity {
                    found.push((d2, node.clone()));
                    if opts.cap.is_some_and(|c| found.len() >= c) {
                        break;
                    }
                }
                for i in 0..n.saturating_sub(1) {
                    let child_d2 = d2 + swap_delta(&y, &node, i);
                    if child_d2 <= eps2 {
                        let mut child = node.clone();
                        child.swap(i, i + 1);
                        if !visited.contains(&child) {
                            heap.push(Reverse((OrderedFloat(child_d2), child)));
                        }
                    }
                }
            }
        }
        Traversal::Dfs => {
            let mut stack = vec![(0.0, identity.clone())];
            visited.insert(identity.clone());
            while let Some((d2, node)) = stack.pop() {
                if node != identity {
                    found.push((d2, node.clone()));
                }
                for i in 0..n.saturating_sub(1) {
                    let child_d2 = d2 + swap_delta(&y, &node, i);
                    if child_d2 <= eps2 {
                        let mut child = node.clone();
                        child.swap(i, i + 1);
                        if visited.insert(child.clone()) {
                            stack.push((child_d2, child));
                        }
                    }
                }
            }
            found.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            if let Some(c) = opts.cap {
                found.truncate(c);
            }
        }
    }

    found
        .into_iter()
        .map(|(d2, node)| {
            let perm: Vec<usize> = node.iter().map(|&c| order[c]).collect();
            let mut point = vec![0.0; n];
            for (i, &v) in perm.iter().enumerate() {
                point[v] = y[i];
            }
            StratumSample {
                key: StratumKey(perm),
                point,
                dist_estimate: d2.max(0.0).sqrt(),
                gradient: Vec::new(),
            }
        })
        .collect()
}

/// Brute-force mirror distance over a node in sorted coordinates; used to check
/// incremental updates.
pub fn mirror_distance_sorted(y: &[f64], node: &[usize]) -> f64 {
    squared_mirror_distance(y, node).sqrt()
}

pub const DEFAULT_CACHE_CAPACITY: usize = 10_000;

/// Bounded cache from vertex order to reduction pairing.
pub struct PairingCache {
    inner: Mutex<LruCache<StratumKey, Arc<PersistencePairing>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl std::fmt::Debug for PairingCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PairingCache")
            .field("len", &self.len())
            .field("hits", &self.hits())
            .field("misses", &self.misses())
            .finish()
    }
}

impl Default for PairingCache {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_CAPACITY)
    }
}

impl PairingCache {
    pub fn new(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).unwrap();
        Self {
            inner: Mutex::new(LruCache::new(cap)),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    /// Looks up `key`, computing and inserting the pairing on a miss. The lock is
    /// not held while computing.
    pub fn get_or_try_insert<E>(
        &self,
        key: &StratumKey,
        compute: impl FnOnce() -> Result<PersistencePairing, E>,
    ) -> Result<Arc<PersistencePairing>, E> {
        if let Some(p) = self.inner.lock().get(key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(p));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let p = Arc::new(compute()?);
        self.inner.lock().put(key.clone(), Arc::clone(&p));
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn key(p: &[usize]) -> StratumKey {
        StratumKey::new(p.to_vec()).unwrap()
    }

    #[test]
    fn key_validation() {
        assert!(StratumKey::new(vec![1, 0, 2]).is_some());
        assert!(StratumKey::new(vec![1, 1, 2]).is_none());
        assert!(StratumKey::new(vec![0, 3]).is_none());
        assert_eq!(StratumKey::of(&[0.3, 0.1, 0.2]).perm(), &[1, 2, 0]);
    }

    #[test]
    fn mirror_examples() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(mirror(&x, &StratumKey::identity(3)), vec![1.0, 2.0, 3.0]);
        assert_eq!(mirror(&x, &key(&[1, 0, 2])), vec![2.0, 1.0, 3.0]);
        let m = mirror(&[0.5, -1.0, 2.0, 0.1], &key(&[3, 0, 2, 1]));
        assert!(key(&[3, 0, 2, 1]).contains(&m));
        let mut s = m.clone();
        s.sort_by(f64::total_cmp);
        assert_eq!(s, vec![-1.0, 0.1, 0.5, 2.0]);
    }

    #[test]
    fn projection_example() {
        let x = [1.0, 2.0];
        let k = key(&[1, 0]);
        assert_eq!(project_to_cell(&x, &k), vec![1.5, 1.5]);
        assert_relative_eq!(exact_distance_to_cell(&x, &k), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(euclidean(&x, &mirror(&x, &k)), std::f64::consts::SQRT_2, epsilon = 1e-15);
        assert_eq!(exact_distance_to_cell(&x, &StratumKey::identity(2)), 0.0);
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic_regression(&[3.0, 1.0, 2.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(isotonic_regression(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn well_separated_query_has_no_neighbours() {
        assert!(sample_nearby_strata(&[0.0, 0.5, 1.0, 1.7], 0.1, None).is_empty());
    }

    #[test]
    fn near_tie_gives_one_neighbour() {
        let s = sample_nearby_strata(&[0.0, 0.005, 1.0], 0.01, None);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].key.perm(), &[1, 0, 2]);
        assert_relative_eq!(s[0].dist_estimate, 0.005 * std::f64::consts::SQRT_2, epsilon = 1e-15);
        assert_eq!(s[0].point, vec![0.005, 0.0, 1.0]);
    }

    #[test]
    fn exact_tie_gives_zero_distance_mirror() {
        let s = sample_nearby_strata(&[0.2, 0.2, 0.9], 0.01, None);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].dist_estimate, 0.0);
        assert_eq!(s[0].key.perm(), &[1, 0, 2]);
    }

    #[test]
    fn traversals_agree_and_cap_keeps_closest() {
        let x = [0.1, 0.13, 0.12, 0.3, 0.31, 0.9];
        let a = sample_nearby_strata(&x, 0.05, None);
        let b = sample_nearby_strata_with(
            &x,
            0.05,
            SearchOptions {
                cap: None,
                traversal: Traversal::Dfs,
            },
        );
        let ka: HashSet<_> = a.iter().map(|s| s.key.clone()).collect();
        let kb: HashSet<_> = b.iter().map(|s| s.key.clone()).collect();
        assert_eq!(ka, kb);
        assert!(a.windows(2).all(|w| w[0].dist_estimate <= w[1].dist_estimate));
        let capped = sample_nearby_strata(&x, 0.05, Some(3));
        assert_eq!(capped.len(), 3);
        for (c, full) in capped.iter().zip(&a) {
            assert_relative_eq!(c.dist_estimate, full.dist_estimate, epsilon = 1e-15);
        }
    }

    #[test]
    fn cache_counts_hits() {
        use crate::complex::SimplicialComplex;
        use crate::persistence::{compute_pairing, PersistenceMode};
        let k = SimplicialComplex::path(3);
        let cache = PairingCache::new(2);
        let key = StratumKey::of(&[0.2, 0.1, 0.3]);
        for _ in 0..3 {
            cache
                .get_or_try_insert(&key, || compute_pairing(&k, &key.ranks(), PersistenceMode::Extended, 0))
                .unwrap();
        }
        assert_eq!((cache.hits(), cache.misses(), cache.len()), (2, 1, 1));
    }
}
