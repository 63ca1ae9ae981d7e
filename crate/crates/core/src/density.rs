//! Densities computed from each point's k nearest neighbors.
//!
//! Every comparison "j is denser than i" in the crate goes through
//! [`outranks`]: higher density wins, equal densities rank the smaller id
//! higher. That makes the density ranking a strict total order even with
//! duplicate points (which get density `+inf` under `kth`).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::NeighborList;
use crate::points::PointId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityKind {
    /// `1 / dist(k-th neighbor)`.
    #[default]
    Kth,
    /// `kth` divided by the mean `kth` density of the neighbors.
    KthNormalized,
    /// `exp(-mean squared neighbor distance)`.
    ExpSum,
    /// Mean of `exp(-squared neighbor distance)`.
    SumExp,
    /// Negative sum of neighbor distances.
    Sum,
}

impl DensityKind {
    pub const ALL: [DensityKind; 5] = [
        DensityKind::Kth,
        DensityKind::KthNormalized,
        DensityKind::ExpSum,
        DensityKind::SumExp,
        DensityKind::Sum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DensityKind::Kth => "kth",
            DensityKind::KthNormalized => "normalized",
            DensityKind::ExpSum => "exp-sum",
            DensityKind::SumExp => "sum-exp",
            DensityKind::Sum => "sum",
        }
    }
}

impl fmt::Display for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DensityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kth" => Ok(DensityKind::Kth),
            "normalized" | "kth-normalized" | "kth_normalized" => Ok(DensityKind::KthNormalized),
            "exp-sum" | "exp_sum" => Ok(DensityKind::ExpSum),
            "sum-exp" | "sum_exp" => Ok(DensityKind::SumExp),
            "sum" => Ok(DensityKind::Sum),
            other => Err(Error::invalid(format!("unknown density kind {other:?}"))),
        }
    }
}

/// True when point `j` ranks strictly above point `i`.
#[inline]
pub fn outranks(rho: &[f64], j: PointId, i: PointId) -> bool {
    let (rj, ri) = (rho[j as usize], rho[i as usize]);
    rj > ri || (rj == ri && j < i)
}

/// The top-ranked point.
pub fn densest(rho: &[f64]) -> Option<PointId> {
    (0..rho.len() as PointId).reduce(|best, j| if outranks(rho, j, best) { j } else { best })
}

fn non_empty(neighbors: &NeighborList) -> Result<()> {
    if neighbors.is_empty() {
        Err(Error::invalid("density needs at least one neighbor"))
    } else {
        Ok(())
    }
}

pub fn density_kth(neighbors: &NeighborList) -> Result<f64> {
    non_empty(neighbors)?;
    let far = neighbors.last().map(|nb| nb.dist).unwrap_or(0.0);
    Ok(if far == 0.0 { f64::INFINITY } else { 1.0 / far })
}

/// `rho'_i = rho_i * k / sum_{j in N_i} rho_j`.
///
/// A point at `+inf` stays `+inf`; a zero denominator gives `+inf`; an
/// infinite denominator under a finite `rho_i` gives 0.
pub fn density_kth_normalized(rho: &[f64], neighbors_all: &[NeighborList]) -> Result<Vec<f64>> {
    if rho.len() != neighbors_all.len() {
        return Err(Error::invalid("density and neighbor arrays differ in length"));
    }
    neighbors_all
        .par_iter()
        .enumerate()
        .map(|(i, list)| {
            non_empty(list)?;
            let own = rho[i];
            if own == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            let denom: f64 = list.iter().map(|nb| rho[nb.id as usize]).sum();
            Ok(if denom == 0.0 {
                f64::INFINITY
            } else {
                own * list.len() as f64 / denom
            })
        })
        .collect()
}

pub fn density_exp_sum(neighbors: &NeighborList) -> Result<f64> {
    non_empty(neighbors)?;
    let sq: f64 = neighbors.iter().map(|nb| nb.dist * nb.dist).sum();
    Ok((-sq / neighbors.len() as f64).exp())
}

pub fn density_sum_exp(neighbors: &NeighborList) -> Result<f64> {
    non_empty(neighbors)?;
    let s: f64 = neighbors.iter().map(|nb| (-(nb.dist * nb.dist)).exp()).sum();
    Ok(s / neighbors.len() as f64)
}

pub fn density_sum(neighbors: &NeighborList) -> Result<f64> {
    non_empty(neighbors)?;
    Ok(-neighbors.iter().map(|nb| nb.dist).sum::<f64>())
}

/// Density of every point; `k` is the length of each neighbor list.
pub fn compute_densities(kind: DensityKind, neighbors_all: &[NeighborList]) -> Result<Vec<f64>> {
    let kernel: fn(&NeighborList) -> Result<f64> = match kind {
        DensityKind::Kth | DensityKind::KthNormalized => density_kth,
        DensityKind::ExpSum => density_exp_sum,
        DensityKind::SumExp => density_sum_exp,
        DensityKind::Sum => density_sum,
    };
    let rho: Vec<f64> = neighbors_all.par_iter().map(kernel).collect::<Result<_>>()?;
    if kind == DensityKind::KthNormalized {
        density_kth_normalized(&rho, neighbors_all)
    } else {
        Ok(rho)
    }
}
