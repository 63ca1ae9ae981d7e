//! Parallel density-peaks clustering (DPC) built on a pluggable k-nearest-neighbor index.
//!
//! The pipeline runs in six steps:
//!
//! 1. build a kNN index over the point set ([`index::BruteForceIndex`] or [`vamana::VamanaIndex`]),
//! 2. find the k nearest neighbors of every point,
//! 3. turn each neighbor list into a density ([`density`]),
//! 4. find every point's dependent point, the nearest point of strictly higher density ([`dependent`]),
//! 5. select noise and center points ([`cluster`]),
//! 6. merge every remaining point into the cluster of its dependent point with a concurrent union-find.
//!
//! Steps 5 and 6 can be re-run over a saved [`cluster::DpcState`] without touching the index again.
//! Clustering quality can be scored with [`eval`].

pub mod cluster;
pub mod data;
pub mod density;
pub mod dependent;
mod error;
pub mod eval;
pub mod index;
pub mod points;
pub mod vamana;

pub use cluster::{
    assign_clusters, reapply_policies, run_pipeline, CenterPolicy, Clustering, DpcState,
    IndexConfig, NoisePolicy, PipelineConfig, PipelineResult, StageTimings,
};
pub use density::DensityKind;
pub use dependent::{DependentInfo, DoublingParams};
pub use error::{Error, Result};
pub use index::{BruteForceIndex, KnnIndex, Neighbor, NeighborList};
pub use points::{PointId, PointSet};
pub use vamana::{GraphIndex, VamanaIndex, VamanaParams};
