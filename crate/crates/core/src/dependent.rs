//! Dependent points: for every point, the (approximately) nearest point of
//! strictly higher density.
//!
//! The search runs in three phases. First each point looks inside its own kNN
//! list. Points still unresolved then query the index for `k_dep` neighbors,
//! doubling `k_dep` each round, while more than `threshold` remain. Whatever is
//! left is resolved by an exact scan over all points.

use rayon::prelude::*;

use crate::density::{densest, outranks};
use crate::error::{Error, Result};
use crate::index::{KnnIndex, Neighbor, NeighborList};
use crate::points::{PointId, PointSet};

/// Default size of the unresolved set below which the doubling rounds stop.
pub const DEFAULT_THRESHOLD: usize = 300;

/// A point's dependent point and the distance to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DependentInfo {
    /// Absent only for the top-ranked point.
    pub lambda: Option<PointId>,
    /// `+inf` when `lambda` is absent.
    pub delta: f64,
}

impl DependentInfo {
    pub const NONE: DependentInfo = DependentInfo {
        lambda: None,
        delta: f64::INFINITY,
    };

    fn from_neighbor(nb: Option<Neighbor>) -> Self {
        match nb {
            Some(nb) => DependentInfo {
                lambda: Some(nb.id),
                delta: nb.dist,
            },
            None => DependentInfo::NONE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DoublingParams {
    /// First `k_dep` of the doubling rounds (`L_d`). Must exceed k.
    pub initial_k: usize,
    /// Doubling continues while more than this many points are unresolved.
    /// `usize::MAX` skips doubling entirely and scans exhaustively.
    pub threshold: usize,
}

impl DoublingParams {
    pub fn new(initial_k: usize, threshold: usize) -> Self {
        Self {
            initial_k,
            threshold,
        }
    }

    /// Skip the doubling rounds: every point not resolved by its own kNN list
    /// goes straight to the exact scan.
    pub fn exhaustive(k: usize) -> Self {
        Self {
            initial_k: k + 1,
            threshold: usize::MAX,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.initial_k <= k {
            return Err(Error::invalid(format!(
                "L_d must be greater than k (L_d = {}, k = {k})",
                self.initial_k
            )));
        }
        Ok(())
    }
}

/// One doubling round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundStats {
    pub k_dep: usize,
    pub queried: usize,
    pub resolved: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependentStats {
    /// Points resolved inside their own kNN list.
    pub resolved_in_knn: usize,
    pub rounds: Vec<RoundStats>,
    /// Points resolved by the final exhaustive scan.
    pub exhaustive: usize,
}

/// Among `candidates`, the nearest point that outranks `i` (ties on `(dist, id)`).
pub fn dp_brute_force(i: PointId, candidates: &[Neighbor], rho: &[f64]) -> Option<Neighbor> {
    candidates
        .iter()
        .filter(|nb| outranks(rho, nb.id, i))
        .min_by(|a, b| a.cmp_by_dist(b))
        .copied()
}

/// Exact dependent point of `i` by scanning every point.
pub fn dp_exhaustive(points: &PointSet, i: PointId, rho: &[f64]) -> Option<Neighbor> {
    let row = points.row(i);
    let mut best: Option<Neighbor> = None;
    for j in points.ids() {
        if !outranks(rho, j, i) {
            continue;
        }
        let cand = Neighbor::new(j, points.distance_to(row, j));
        if best.is_none_or(|b| cand.cmp_by_dist(&b).is_lt()) {
            best = Some(cand);
        }
    }
    best
}

/// Dependent point of every point.
///
/// With an exact index the result matches the definition exactly; with an
/// approximate one every reported `lambda` still outranks its owner, but
/// `delta` may exceed the true value.
pub fn compute_dependent_points<I: KnnIndex + ?Sized>(
    index: &I,
    rho: &[f64],
    neighbors_all: &[NeighborList],
    params: &DoublingParams,
) -> Result<(Vec<DependentInfo>, DependentStats)> {
    let points = index.points();
    let n = points.len();
    if rho.len() != n || neighbors_all.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} densities and neighbor lists, got {} and {}",
            rho.len(),
            neighbors_all.len()
        )));
    }
    if params.initial_k == 0 {
        return Err(Error::invalid("L_d must be at least 1"));
    }
    let mut stats = DependentStats::default();
    let top = densest(rho).expect("point set is non-empty");

    let mut infos: Vec<DependentInfo> = neighbors_all
        .par_iter()
        .enumerate()
        .map(|(i, list)| {
            DependentInfo::from_neighbor(dp_brute_force(i as PointId, list.as_slice(), rho))
        })
        .collect();
    debug_assert!(infos[top as usize].lambda.is_none());

    let mut unfinished: Vec<PointId> = (0..n as PointId)
        .into_par_iter()
        .filter(|&i| i != top && infos[i as usize].lambda.is_none())
        .collect();
    stats.resolved_in_knn = n - 1 - unfinished.len();

    let cap = n.saturating_sub(1).max(1);
    let mut k_dep = params.initial_k.min(cap);
    while unfinished.len() > params.threshold {
        let found: Vec<Option<Neighbor>> = unfinished
            .par_iter()
            .map(|&i| {
                let cands = index.find_knn(i, k_dep)?;
                Ok(dp_brute_force(i, cands.as_slice(), rho))
            })
            .collect::<Result<_>>()?;
        let queried = unfinished.len();
        for (&i, nb) in unfinished.iter().zip(&found) {
            infos[i as usize] = DependentInfo::from_neighbor(*nb);
        }
        unfinished = unfinished
            .into_par_iter()
            .filter(|&i| infos[i as usize].lambda.is_none())
            .collect();
        stats.rounds.push(RoundStats {
            k_dep,
            queried,
            resolved: queried - unfinished.len(),
        });
        if k_dep >= cap {
            break;
        }
        k_dep = k_dep.saturating_mul(2).min(cap);
    }

    stats.exhaustive = unfinished.len();
    let tail: Vec<DependentInfo> = unfinished
        .par_iter()
        .map(|&i| DependentInfo::from_neighbor(dp_exhaustive(points, i, rho)))
        .collect();
    for (&i, info) in unfinished.iter().zip(tail) {
        if info.lambda.is_none() {
            return Err(Error::Internal(format!(
                "point {i} is not top-ranked but no denser point exists"
            )));
        }
        infos[i as usize] = info;
    }
    Ok((infos, stats))
}
