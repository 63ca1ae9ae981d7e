//! The k-nearest-neighbor index abstraction and the exact brute-force backend.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::points::{PointId, PointSet};

/// A neighbor of some query point together with its distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: PointId,
    pub dist: f64,
}

impl Neighbor {
    pub fn new(id: PointId, dist: f64) -> Self {
        Self { id, dist }
    }

    /// Total order by `(dist, id)`. Every selection and truncation in the crate uses it.
    #[inline]
    pub fn cmp_by_dist(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

/// Neighbors sorted ascending by `(dist, id)` with no duplicate ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborList(Vec<Neighbor>);

impl NeighborList {
    /// Sorts and deduplicates `entries`, keeping the closest entry per id.
    pub fn from_unsorted(mut entries: Vec<Neighbor>) -> Self {
        entries.sort_unstable_by(Neighbor::cmp_by_dist);
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        entries.retain(|nb| seen.insert(nb.id));
        Self(entries)
    }

    /// Wraps entries the caller has already sorted and deduplicated.
    pub(crate) fn from_sorted(entries: Vec<Neighbor>) -> Self {
        debug_assert!(entries
            .windows(2)
            .all(|w| w[0].cmp_by_dist(&w[1]) == Ordering::Less));
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Neighbor] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Neighbor> {
        self.0.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = PointId> + '_ {
        self.0.iter().map(|nb| nb.id)
    }

    /// The furthest (last) neighbor.
    pub fn last(&self) -> Option<&Neighbor> {
        self.0.last()
    }

    pub fn into_vec(self) -> Vec<Neighbor> {
        self.0
    }
}

impl<'a> IntoIterator for &'a NeighborList {
    type Item = &'a Neighbor;
    type IntoIter = std::slice::Iter<'a, Neighbor>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Anything that answers k-nearest-neighbor queries for member points.
///
/// Implementations are immutable once built and may be queried concurrently.
pub trait KnnIndex: Sync {
    fn points(&self) -> &PointSet;

    /// The `min(k, n - 1)` nearest neighbors of point `query`, excluding `query` itself.
    fn find_knn(&self, query: PointId, k: usize) -> Result<NeighborList>;

    /// True when `find_knn` is guaranteed to return the exact neighbors.
    fn is_exact(&self) -> bool {
        false
    }
}

/// kNN for every point, in parallel. Element `i` equals `index.find_knn(i, k)`.
pub fn knn_all<I: KnnIndex + ?Sized>(index: &I, k: usize) -> Result<Vec<NeighborList>> {
    check_k(k)?;
    let n = index.points().len() as PointId;
    (0..n)
        .into_par_iter()
        .map(|i| index.find_knn(i, k))
        .collect()
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::invalid("k must be at least 1"))
    } else {
        Ok(())
    }
}

/// "No index": every query is an exact linear scan.
#[derive(Debug, Clone, Copy)]
pub struct BruteForceIndex<'a> {
    points: &'a PointSet,
}

impl<'a> BruteForceIndex<'a> {
    pub fn new(points: &'a PointSet) -> Self {
        Self { points }
    }
}

impl KnnIndex for BruteForceIndex<'_> {
    fn points(&self) -> &PointSet {
        self.points
    }

    fn find_knn(&self, query: PointId, k: usize) -> Result<NeighborList> {
        check_k(k)?;
        self.points.check_id(query)?;
        Ok(exact_knn(self.points, query, k))
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// Exact kNN of a member point: select the k-th smallest `(dist, id)`, keep
/// everything before it, sort the survivors.
pub(crate) fn exact_knn(points: &PointSet, query: PointId, k: usize) -> NeighborList {
    let q = points.row(query);
    let mut all: Vec<Neighbor> = points
        .ids()
        .filter(|&j| j != query)
        .map(|j| Neighbor::new(j, points.distance_to(q, j)))
        .collect();
    let k = k.min(all.len());
    if k == 0 {
        return NeighborList::default();
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, Neighbor::cmp_by_dist);
        all.truncate(k);
    }
    all.sort_unstable_by(Neighbor::cmp_by_dist);
    NeighborList::from_sorted(all)
}
