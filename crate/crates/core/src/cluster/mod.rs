//! Noise and center selection, union-find assignment, and the end-to-end pipeline.

mod pipeline;
pub mod union_find;

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;

use crate::density::{densest, outranks};
use crate::dependent::DependentInfo;
use crate::error::{Error, Result};
use crate::index::NeighborList;
use crate::points::PointId;

pub use pipeline::{
    reapply_policies, run_pipeline, DpcState, IndexConfig, PipelineConfig, PipelineResult,
    StageTimings,
};
use union_find::ConcurrentUnionFind;

/// Points with density strictly below `rho_min` are noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePolicy {
    pub rho_min: f64,
}

impl Default for NoisePolicy {
    fn default() -> Self {
        Self { rho_min: 0.0 }
    }
}

impl NoisePolicy {
    pub fn new(rho_min: f64) -> Self {
        Self { rho_min }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho_min.is_nan() {
            return Err(Error::invalid("rho_min must not be NaN"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CenterPolicy {
    /// Centers are non-noise points with `delta >= delta_min`.
    Threshold { delta_min: f64 },
    /// The `n_c` non-noise points with the largest `delta * rho`.
    Product { n_c: usize },
    /// Non-noise points that outrank every one of their k nearest neighbors.
    Local,
}

impl CenterPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CenterPolicy::Threshold { delta_min } if delta_min.is_nan() => {
                Err(Error::invalid("delta_min must not be NaN"))
            }
            CenterPolicy::Product { n_c: 0 } => {
                Err(Error::invalid("product center needs n_c >= 1"))
            }
            _ => Ok(()),
        }
    }
}

/// Cluster label per point plus the sorted center and noise ids.
///
/// Labels are canonical: a noise point is labeled with its own id, and every
/// other point with the id of the unique center in its cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub labels: Vec<PointId>,
    pub centers: Vec<PointId>,
    pub noise: Vec<PointId>,
}

impl Clustering {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.centers.len() + self.noise.len()
    }

    /// Checks label canonicality, disjointness, and the path property: every
    /// non-noise point reaches its center by following dependent-point edges
    /// through non-center points.
    pub fn check_invariants(&self, deps: &[DependentInfo]) -> Result<()> {
        let n = self.labels.len();
        let bad = |msg: String| Err(Error::Internal(msg));
        if deps.len() != n {
            return bad(format!("{} dependents for {n} labels", deps.len()));
        }
        let mut role = vec![0u8; n];
        for &c in &self.centers {
            role[c as usize] = 1;
        }
        for &z in &self.noise {
            if role[z as usize] == 1 {
                return bad(format!("point {z} is both center and noise"));
            }
            role[z as usize] = 2;
        }
        for i in 0..n {
            let label = self.labels[i];
            match role[i] {
                1 | 2 if label as usize != i => {
                    return bad(format!("center/noise {i} labeled {label}"));
                }
                0 => {
                    if role[label as usize] != 1 {
                        return bad(format!("point {i} labeled with non-center {label}"));
                    }
                    let mut cur = i;
                    let mut steps = 0;
                    while role[cur] == 0 {
                        match deps[cur].lambda {
                            Some(next) => cur = next as usize,
                            None => return bad(format!("chain from {i} ends without a center")),
                        }
                        steps += 1;
                        if steps > n {
                            return bad(format!("cycle in dependency chain from {i}"));
                        }
                    }
                    if cur != label as usize {
                        return bad(format!("point {i} reaches {cur} but is labeled {label}"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn find_noise(rho: &[f64], policy: &NoisePolicy) -> Vec<PointId> {
    (0..rho.len() as PointId)
        .into_par_iter()
        .filter(|&i| rho[i as usize] < policy.rho_min)
        .collect()
}

pub fn find_centers_threshold(
    deps: &[DependentInfo],
    non_noise: &[PointId],
    delta_min: f64,
) -> Vec<PointId> {
    non_noise
        .par_iter()
        .copied()
        .filter(|&i| deps[i as usize].delta >= delta_min)
        .collect()
}

/// `delta * rho`, with `0 * inf` read as 0.
fn product(rho: f64, delta: f64) -> f64 {
    let p = rho * delta;
    if p.is_nan() {
        0.0
    } else {
        p
    }
}

/// The `n_c` points with the largest `delta * rho`; an infinite `delta`
/// beats every finite product. Ties go to larger `delta`, then smaller id.
pub fn find_centers_product(
    rho: &[f64],
    deps: &[DependentInfo],
    non_noise: &[PointId],
    n_c: usize,
) -> Vec<PointId> {
    if n_c >= non_noise.len() {
        if n_c > non_noise.len() {
            log::warn!(
                "requested {n_c} centers but only {} non-noise points exist",
                non_noise.len()
            );
        }
        return non_noise.to_vec();
    }
    let key = |i: PointId| {
        let d = deps[i as usize].delta;
        (d == f64::INFINITY, product(rho[i as usize], d), d)
    };
    let cmp = |a: &PointId, b: &PointId| -> Ordering {
        let (ka, kb) = (key(*a), key(*b));
        kb.0.cmp(&ka.0)
            .then_with(|| kb.1.total_cmp(&ka.1))
            .then_with(|| kb.2.total_cmp(&ka.2))
            .then_with(|| a.cmp(b))
    };
    let mut ranked = non_noise.to_vec();
    if n_c > 0 {
        ranked.select_nth_unstable_by(n_c - 1, cmp);
    }
    ranked.truncate(n_c);
    ranked.sort_unstable();
    ranked
}

pub fn find_centers_local(
    rho: &[f64],
    neighbors_all: &[NeighborList],
    non_noise: &[PointId],
) -> Vec<PointId> {
    non_noise
        .par_iter()
        .copied()
        .filter(|&i| {
            neighbors_all[i as usize]
                .ids()
                .all(|j| outranks(rho, i, j))
        })
        .collect()
}

/// Applies the center policy to the non-noise points. The top-ranked point
/// has no dependent point, so if it is non-noise it is always a center.
pub fn select_centers(
    policy: &CenterPolicy,
    rho: &[f64],
    deps: &[DependentInfo],
    neighbors_all: &[NeighborList],
    non_noise: &[PointId],
) -> Result<Vec<PointId>> {
    policy.validate()?;
    let mut centers = match *policy {
        CenterPolicy::Threshold { delta_min } => find_centers_threshold(deps, non_noise, delta_min),
        CenterPolicy::Product { n_c } => find_centers_product(rho, deps, non_noise, n_c),
        CenterPolicy::Local => {
            if neighbors_all.len() != rho.len() {
                return Err(Error::invalid("local centers need every point's neighbor list"));
            }
            find_centers_local(rho, neighbors_all, non_noise)
        }
    };
    // every point without a dependent point must root its own cluster
    let orphans: Vec<PointId> = non_noise
        .iter()
        .copied()
        .filter(|&i| deps[i as usize].lambda.is_none())
        .collect();
    if !orphans.is_empty() {
        let have: HashSet<PointId> = centers.iter().copied().collect();
        for i in orphans {
            if !have.contains(&i) {
                log::debug!("promoting point {i} (no dependent point) to center");
                centers.push(i);
            }
        }
    }
    centers.sort_unstable();
    Ok(centers)
}

/// Unions every non-center, non-noise point with its dependent point, then
/// relabels each component by the center (or noise point) it contains.
pub fn assign_clusters(
    deps: &[DependentInfo],
    centers: &[PointId],
    noise: &[PointId],
) -> Result<Clustering> {
    let n = deps.len();
    let mut role = vec![0u8; n];
    for &c in centers {
        *role.get_mut(c as usize).ok_or(Error::IndexOutOfRange { id: c as usize, n })? = 1;
    }
    for &z in noise {
        let slot = role.get_mut(z as usize).ok_or(Error::IndexOutOfRange { id: z as usize, n })?;
        if *slot == 1 {
            return Err(Error::invalid(format!("point {z} is both center and noise")));
        }
        *slot = 2;
    }

    let uf = ConcurrentUnionFind::new(n);
    (0..n)
        .into_par_iter()
        .filter(|&i| role[i] == 0)
        .try_for_each(|i| match deps[i].lambda {
            Some(j) => {
                uf.union(i as PointId, j);
                Ok(())
            }
            None => Err(Error::Internal(format!(
                "point {i} has no dependent point but is neither center nor noise"
            ))),
        })?;

    let roots: Vec<PointId> = (0..n as PointId).into_par_iter().map(|i| uf.find(i)).collect();
    let mut root_label = vec![PointId::MAX; n];
    for i in 0..n {
        if role[i] != 0 {
            let r = roots[i] as usize;
            if root_label[r] != PointId::MAX {
                return Err(Error::Internal(format!(
                    "points {} and {i} are both cluster roots in one component",
                    root_label[r]
                )));
            }
            root_label[r] = i as PointId;
        }
    }
    let labels: Vec<PointId> = roots
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let label = root_label[r as usize];
            if label == PointId::MAX {
                Err(Error::Internal(format!("point {i} is in a cluster without a center")))
            } else {
                Ok(label)
            }
        })
        .collect::<Result<_>>()?;

    let mut centers = centers.to_vec();
    centers.sort_unstable();
    let mut noise = noise.to_vec();
    noise.sort_unstable();
    Ok(Clustering {
        labels,
        centers,
        noise,
    })
}

/// Step 5: noise ids and center ids, both sorted.
pub(crate) fn select_noise_and_centers(
    rho: &[f64],
    deps: &[DependentInfo],
    neighbors_all: &[NeighborList],
    center: &CenterPolicy,
    noise: &NoisePolicy,
) -> Result<(Vec<PointId>, Vec<PointId>)> {
    noise.validate()?;
    let noise_ids = find_noise(rho, noise);
    let mut is_noise = vec![false; rho.len()];
    for &z in &noise_ids {
        is_noise[z as usize] = true;
    }
    let non_noise: Vec<PointId> = (0..rho.len() as PointId)
        .filter(|&i| !is_noise[i as usize])
        .collect();
    let centers = select_centers(center, rho, deps, neighbors_all, &non_noise)?;
    debug_assert!(densest(rho).is_none_or(|t| is_noise[t as usize] || centers.contains(&t)));
    Ok((noise_ids, centers))
}

/// Steps 5 and 6 over precomputed densities and dependent points.
pub(crate) fn cluster_from_state(
    rho: &[f64],
    deps: &[DependentInfo],
    neighbors_all: &[NeighborList],
    center: &CenterPolicy,
    noise: &NoisePolicy,
) -> Result<Clustering> {
    let (noise_ids, centers) = select_noise_and_centers(rho, deps, neighbors_all, center, noise)?;
    assign_clusters(deps, &centers, &noise_ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{compute_densities, DensityKind};
    use crate::dependent::{compute_dependent_points, DoublingParams};
    use crate::index::{knn_all, BruteForceIndex};
    use crate::points::tests::toy;
    use std::f64::consts::FRAC_1_SQRT_2;

    const A: u32 = 0;
    const B: u32 = 1;
    const C: u32 = 2;
    const D: u32 = 3;
    const E: u32 = 4;
    const F: u32 = 5;

    struct Toy {
        rho: Vec<f64>,
        deps: Vec<DependentInfo>,
        nn: Vec<NeighborList>,
    }

    fn toy_state() -> Toy {
        let p = toy();
        let idx = BruteForceIndex::new(&p);
        let nn = knn_all(&idx, 1).unwrap();
        let rho = compute_densities(DensityKind::Kth, &nn).unwrap();
        let (deps, _) =
            compute_dependent_points(&idx, &rho, &nn, &DoublingParams::new(2, 0)).unwrap();
        Toy { rho, deps, nn }
    }

    #[test]
    fn toy_noise() {
        let t = toy_state();
        // FRAC_1_SQRT_2 rounds one ulp above 1 / sqrt(2.0), so use the computed value
        let rho_min = t.rho[D as usize];
        assert!((rho_min - FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(find_noise(&t.rho, &NoisePolicy::new(rho_min)), vec![E]);
        assert!(find_noise(&t.rho, &NoisePolicy::default()).is_empty());
        assert_eq!(find_noise(&t.rho, &NoisePolicy::new(f64::INFINITY)).len(), 6);
        assert!(find_noise(&t.rho, &NoisePolicy::new(f64::NEG_INFINITY)).is_empty());
    }

    #[test]
    fn toy_threshold_centers() {
        let t = toy_state();
        let non_noise = [A, B, C, D, F];
        assert_eq!(find_centers_threshold(&t.deps, &non_noise, 2.5), vec![B, D]);
        assert_eq!(find_centers_threshold(&t.deps, &non_noise, 0.0), non_noise.to_vec());
        assert_eq!(find_centers_threshold(&t.deps, &non_noise, f64::INFINITY), vec![B]);
    }

    #[test]
    fn toy_product_centers() {
        let t = toy_state();
        let non_noise = [A, B, C, D, F];
        assert_eq!(find_centers_product(&t.rho, &t.deps, &non_noise, 2), vec![B, D]);
        assert_eq!(find_centers_product(&t.rho, &t.deps, &non_noise, 1), vec![B]);
        assert_eq!(find_centers_product(&t.rho, &t.deps, &non_noise, 5), non_noise.to_vec());
        assert_eq!(find_centers_product(&t.rho, &t.deps, &non_noise, 9), non_noise.to_vec());
    }

    #[test]
    fn toy_local_centers() {
        let t = toy_state();
        let all = [A, B, C, D, E, F];
        assert_eq!(find_centers_local(&t.rho, &t.nn, &all), vec![B, D]);
    }

    #[test]
    fn toy_assignment() {
        let t = toy_state();
        let c = assign_clusters(&t.deps, &[B, D], &[E]).unwrap();
        assert_eq!(c.labels, vec![B, B, B, D, E, D]);
        assert_eq!(c.num_clusters(), 3);
        c.check_invariants(&t.deps).unwrap();

        let all = assign_clusters(&t.deps, &[A, B, C, D, E, F], &[]).unwrap();
        assert_eq!(all.labels, vec![A, B, C, D, E, F]);

        let one = assign_clusters(&t.deps, &[B], &[]).unwrap();
        assert_eq!(one.labels, vec![B; 6]);
    }

    #[test]
    fn assignment_errors() {
        let t = toy_state();
        // b has no dependent point and is not a center
        assert!(assign_clusters(&t.deps, &[D], &[]).is_err());
        assert!(assign_clusters(&t.deps, &[B], &[B]).is_err());
        assert!(assign_clusters(&t.deps, &[9], &[]).is_err());
    }

    #[test]
    fn densest_is_promoted() {
        let t = toy_state();
        // d is a local maximum, but a threshold of +inf on a tiny subset misses b
        let centers = select_centers(
            &CenterPolicy::Threshold { delta_min: 100.0 },
            &t.rho,
            &t.deps,
            &t.nn,
            &[A, B, C, D, F],
        )
        .unwrap();
        assert_eq!(centers, vec![B]);
    }

    #[test]
    fn chain_has_one_local_center() {
        // densities strictly decrease along a line of growing gaps
        let p = crate::points::PointSet::from_rows(&[[0.0f32], [1.0], [3.0], [6.0], [10.0]])
            .unwrap();
        let idx = BruteForceIndex::new(&p);
        let nn = knn_all(&idx, 1).unwrap();
        let rho = compute_densities(DensityKind::Kth, &nn).unwrap();
        let all: Vec<u32> = (0..5).collect();
        assert_eq!(find_centers_local(&rho, &nn, &all).len(), 1);
    }

    #[test]
    fn all_duplicates_rank_by_id() {
        let p = crate::points::PointSet::from_rows(&[[1.0f32]; 4]).unwrap();
        let idx = BruteForceIndex::new(&p);
        let nn = knn_all(&idx, 1).unwrap();
        let rho = compute_densities(DensityKind::Kth, &nn).unwrap();
        assert!(rho.iter().all(|r| r.is_infinite()));
        // each point's NN is the smallest other id; only id 0 outranks its neighbor
        assert_eq!(find_centers_local(&rho, &nn, &[0, 1, 2, 3]), vec![0]);
    }

    #[test]
    fn policies_validate() {
        assert!(CenterPolicy::Product { n_c: 0 }.validate().is_err());
        assert!(CenterPolicy::Threshold { delta_min: f64::NAN }.validate().is_err());
        assert!(CenterPolicy::Local.validate().is_ok());
        assert!(NoisePolicy::new(f64::NAN).validate().is_err());
    }
}
