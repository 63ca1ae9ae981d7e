//! Point storage and the Euclidean distance kernel.
//!
//! Coordinates are stored as `f32` in one row-major buffer. Every distance is
//! accumulated in `f64` so that orderings (and therefore tie-breaking) do not
//! depend on how work is split across threads.

use crate::error::{Error, Result};

/// Index of a point within its [`PointSet`]. Ids are dense, `0..n`.
pub type PointId = u32;

const LANES: usize = 8;

/// An immutable `n x d` matrix of finite `f32` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    n: usize,
    dim: usize,
    data: Vec<f32>,
}

impl PointSet {
    /// Wraps a row-major buffer of `data.len() / dim` points.
    pub fn new(data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::invalid("point set must contain at least one point"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "buffer of {} values is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate in point {} (dimension {})",
                pos / dim,
                pos % dim
            )));
        }
        if data.len() / dim > u32::MAX as usize {
            return Err(Error::invalid("more than 2^32 - 1 points"));
        }
        Ok(Self {
            n: data.len() / dim,
            dim,
            data,
        })
    }

    /// Builds a point set from equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::invalid(format!(
                    "row {i} has {} coordinates, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dim)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false: a point set holds at least one point.
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> std::ops::Range<PointId> {
        0..self.n as PointId
    }

    /// Coordinates of point `i`. Panics if `i` is out of range.
    #[inline]
    pub fn row(&self, i: PointId) -> &[f32] {
        let start = i as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn check_id(&self, i: PointId) -> Result<()> {
        if (i as usize) < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                id: i as usize,
                n: self.n,
            })
        }
    }

    /// Euclidean distance between points `i` and `j`.
    pub fn distance(&self, i: PointId, j: PointId) -> Result<f64> {
        Ok(self.squared_distance(i, j)?.sqrt())
    }

    /// Squared Euclidean distance between points `i` and `j`.
    pub fn squared_distance(&self, i: PointId, j: PointId) -> Result<f64> {
        self.check_id(i)?;
        self.check_id(j)?;
        Ok(squared_l2(self.row(i), self.row(j)))
    }

    /// Unchecked distance used on hot paths where ids come from the index itself.
    #[inline]
    pub(crate) fn dist(&self, i: PointId, j: PointId) -> f64 {
        squared_l2(self.row(i), self.row(j)).sqrt()
    }

    /// Distance from arbitrary coordinates to point `j`.
    #[inline]
    pub fn distance_to(&self, query: &[f32], j: PointId) -> f64 {
        squared_l2(query, self.row(j)).sqrt()
    }

    /// Index of the point closest to the coordinate-wise mean, ties to the smaller id.
    pub fn approximate_medoid(&self) -> PointId {
        let mut centroid = vec![0f64; self.dim];
        for row in self.data.chunks_exact(self.dim) {
            for (c, &v) in centroid.iter_mut().zip(row) {
                *c += v as f64;
            }
        }
        let centroid: Vec<f32> = centroid.iter().map(|c| (c / self.n as f64) as f32).collect();
        let mut best = (f64::INFINITY, 0);
        for j in self.ids() {
            let d = self.distance_to(&centroid, j);
            if d < best.0 {
                best = (d, j);
            }
        }
        best.1
    }
}

/// Squared L2 distance accumulated in `f64`.
///
/// The lane-wise accumulation order is fixed, and `(a - b)^2 == (b - a)^2`
/// exactly, so the result is bit-identical under argument swap.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            let diff = x[l] as f64 - y[l] as f64;
            acc[l] += diff * diff;
        }
    }
    let mut tail = 0f64;
    for (x, y) in ra.iter().zip(rb) {
        let diff = *x as f64 - *y as f64;
        tail += diff * diff;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}
