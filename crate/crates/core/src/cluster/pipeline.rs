use std::time::{Duration, Instant};

use crate::cluster::{
    assign_clusters, cluster_from_state, select_noise_and_centers, CenterPolicy, Clustering,
    NoisePolicy,
};
use crate::density::{compute_densities, DensityKind};
use crate::dependent::{compute_dependent_points, DependentInfo, DependentStats, DoublingParams};
use crate::error::{Error, Result};
use crate::index::{check_k, knn_all, BruteForceIndex, KnnIndex, NeighborList};
use crate::points::PointSet;
use crate::vamana::{VamanaIndex, VamanaParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexConfig {
    BruteForce,
    Vamana {
        params: VamanaParams,
        /// Query beam width `L`.
        beam_width: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub index: IndexConfig,
    pub k: usize,
    pub density: DensityKind,
    pub center: CenterPolicy,
    pub noise: NoisePolicy,
    pub doubling: DoublingParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        self.doubling.validate(self.k)?;
        self.center.validate()?;
        self.noise.validate()?;
        if let IndexConfig::Vamana { beam_width, .. } = self.index {
            if beam_width < self.k {
                return Err(Error::invalid(format!(
                    "beam width L must be at least k (L = {beam_width}, k = {})",
                    self.k
                )));
            }
        }
        Ok(())
    }
}

/// Everything steps 5-6 need, so they can be re-run with other policies.
#[derive(Debug, Clone, PartialEq)]
pub struct DpcState {
    pub rho: Vec<f64>,
    pub dependents: Vec<DependentInfo>,
    pub neighbors: Vec<NeighborList>,
}

impl DpcState {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub index: Duration,
    pub knn: Duration,
    pub density: Duration,
    pub dependent: Duration,
    pub select: Duration,
    pub union_find: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.index + self.knn + self.density + self.dependent + self.select + self.union_find
    }

    /// `(name, duration)` for each stage in pipeline order.
    pub fn stages(&self) -> [(&'static str, Duration); 6] {
        [
            ("index", self.index),
            ("knn", self.knn),
            ("density", self.density),
            ("dependent", self.dependent),
            ("select", self.select),
            ("union_find", self.union_find),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub clustering: Clustering,
    pub state: DpcState,
    pub timings: StageTimings,
    pub dependent_stats: DependentStats,
    /// Queries answered by the exact fallback (graph index only).
    pub fallbacks: usize,
}

/// Runs all six steps: index, kNN, densities, dependent points, noise and
/// center selection, union-find.
pub fn run_pipeline(points: &PointSet, config: &PipelineConfig) -> Result<PipelineResult> {
    config.validate()?;
    if points.len() < 2 {
        return Err(Error::invalid("clustering needs at least two points"));
    }
    let mut timings = StageTimings::default();
    let t = Instant::now();
    match config.index {
        IndexConfig::BruteForce => {
            let index = BruteForceIndex::new(points);
            timings.index = t.elapsed();
            run_with_index(&index, config, timings, || 0)
        }
        IndexConfig::Vamana { params, beam_width } => {
            let index = VamanaIndex::build(points, &params, beam_width)?;
            timings.index = t.elapsed();
            log::info!(
                "built graph: mean degree {:.2}, max degree {}",
                index.graph().mean_degree(),
                index.graph().max_degree()
            );
            run_with_index(&index, config, timings, || index.fallback_count())
        }
    }
}

fn run_with_index<I: KnnIndex>(
    index: &I,
    config: &PipelineConfig,
    mut timings: StageTimings,
    fallbacks: impl Fn() -> usize,
) -> Result<PipelineResult> {
    let t = Instant::now();
    let neighbors = knn_all(index, config.k)?;
    timings.knn = t.elapsed();

    let t = Instant::now();
    let rho = compute_densities(config.density, &neighbors)?;
    timings.density = t.elapsed();

    let t = Instant::now();
    let (dependents, dependent_stats) =
        compute_dependent_points(index, &rho, &neighbors, &config.doubling)?;
    timings.dependent = t.elapsed();

    let state = DpcState {
        rho,
        dependents,
        neighbors,
    };
    let (clustering, select, union_find) = timed_clustering(&state, &config.center, &config.noise)?;
    timings.select = select;
    timings.union_find = union_find;
    Ok(PipelineResult {
        clustering,
        state,
        timings,
        dependent_stats,
        fallbacks: fallbacks(),
    })
}

fn timed_clustering(
    state: &DpcState,
    center: &CenterPolicy,
    noise: &NoisePolicy,
) -> Result<(Clustering, Duration, Duration)> {
    let t = Instant::now();
    let (noise_ids, centers) = select_noise_and_centers(
        &state.rho,
        &state.dependents,
        &state.neighbors,
        center,
        noise,
    )?;
    let select = t.elapsed();
    let t = Instant::now();
    let clustering = assign_clusters(&state.dependents, &centers, &noise_ids)?;
    Ok((clustering, select, t.elapsed()))
}

/// Re-runs noise and center selection plus union-find over a saved state.
pub fn reapply_policies(
    state: &DpcState,
    center: &CenterPolicy,
    noise: &NoisePolicy,
) -> Result<Clustering> {
    let n = state.rho.len();
    if state.dependents.len() != n {
        return Err(Error::invalid("state arrays differ in length"));
    }
    cluster_from_state(&state.rho, &state.dependents, &state.neighbors, center, noise)
}
