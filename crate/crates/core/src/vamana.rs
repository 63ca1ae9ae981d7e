//! Graph-based approximate kNN: greedy beam search, RobustPrune, and batched
//! parallel Vamana construction seeded from many random start points.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::{check_k, exact_knn, KnnIndex, Neighbor, NeighborList};
use crate::points::{PointId, PointSet};

pub const DEFAULT_ALPHA: f64 = 1.1;
const GRAPH_MAGIC: &[u8; 4] = b"PECG";
/// Largest insertion batch, as a fraction of n.
const MAX_BATCH_FRACTION: f64 = 0.02;

/// Directed graph with out-degree at most `degree_bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphIndex {
    adjacency: Vec<Vec<PointId>>,
    degree_bound: usize,
    start_points: Vec<PointId>,
    alpha: f64,
}

impl GraphIndex {
    /// Wraps an explicit adjacency structure after checking every invariant.
    pub fn from_adjacency(
        adjacency: Vec<Vec<PointId>>,
        degree_bound: usize,
        start_points: Vec<PointId>,
        alpha: f64,
    ) -> Result<Self> {
        let g = Self {
            adjacency,
            degree_bound,
            start_points,
            alpha,
        };
        g.check_invariants()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn start_points(&self) -> &[PointId] {
        &self.start_points
    }

    pub fn out_neighbors(&self, p: PointId) -> &[PointId] {
        &self.adjacency[p as usize]
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn mean_degree(&self) -> f64 {
        let total: usize = self.adjacency.iter().map(Vec::len).sum();
        total as f64 / self.len().max(1) as f64
    }

    /// Degree bound, no self-loops, no duplicate edges, all ids in range.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.adjacency.len();
        if self.degree_bound == 0 {
            return Err(Error::invalid("degree bound must be positive"));
        }
        if self.alpha.is_nan() || self.alpha < 1.0 {
            return Err(Error::invalid(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        if self.start_points.is_empty() {
            return Err(Error::invalid("graph needs at least one start point"));
        }
        if let Some(&s) = self.start_points.iter().find(|&&s| s as usize >= n) {
            return Err(Error::IndexOutOfRange { id: s as usize, n });
        }
        for (p, out) in self.adjacency.iter().enumerate() {
            if out.len() > self.degree_bound {
                return Err(Error::Internal(format!(
                    "vertex {p} has degree {} > {}",
                    out.len(),
                    self.degree_bound
                )));
            }
            let mut seen = HashSet::with_capacity(out.len());
            for &q in out {
                if q as usize >= n {
                    return Err(Error::IndexOutOfRange { id: q as usize, n });
                }
                if q as usize == p {
                    return Err(Error::Internal(format!("self-loop at vertex {p}")));
                }
                if !seen.insert(q) {
                    return Err(Error::Internal(format!("duplicate edge {p} -> {q}")));
                }
            }
        }
        Ok(())
    }

    /// Replaces the out-list of `p` with the RobustPrune selection over
    /// `candidates` and its current out-neighbors.
    pub fn robust_prune(
        &mut self,
        points: &PointSet,
        p: PointId,
        candidates: &[Neighbor],
        alpha: f64,
        degree_bound: usize,
    ) -> &[PointId] {
        let current = std::mem::take(&mut self.adjacency[p as usize]);
        self.adjacency[p as usize] =
            robust_prune(points, p, candidates, &current, alpha, degree_bound);
        &self.adjacency[p as usize]
    }

    /// Little-endian: magic `PECG`, u32 n, u32 R, u32 start count, start ids,
    /// then per vertex a u32 degree followed by the neighbor ids.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(GRAPH_MAGIC)?;
        for v in [self.len(), self.degree_bound, self.start_points.len()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for &s in &self.start_points {
            w.write_all(&s.to_le_bytes())?;
        }
        for out in &self.adjacency {
            w.write_all(&(out.len() as u32).to_le_bytes())?;
            for &q in out {
                w.write_all(&q.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Parses the layout written by [`GraphIndex::write_to`]. The file does not
    /// carry alpha, so the caller supplies it.
    pub fn from_bytes(bytes: &[u8], alpha: f64, path: &Path) -> Result<Self> {
        let mut cur = ByteCursor {
            bytes,
            pos: 0,
            path,
        };
        if cur.take(4)? != GRAPH_MAGIC {
            return Err(cur.error(0, "bad magic, expected PECG"));
        }
        let n = cur.u32()? as usize;
        let degree_bound = cur.u32()? as usize;
        let num_starts = cur.u32()? as usize;
        let start_points = (0..num_starts)
            .map(|_| cur.u32())
            .collect::<Result<Vec<_>>>()?;
        let mut adjacency = Vec::with_capacity(n);
        for _ in 0..n {
            let at = cur.pos;
            let degree = cur.u32()? as usize;
            if degree > degree_bound {
                return Err(cur.error(at, format!("degree {degree} exceeds bound {degree_bound}")));
            }
            adjacency.push((0..degree).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?);
        }
        if cur.pos != bytes.len() {
            return Err(cur.error(cur.pos, "trailing bytes after last vertex"));
        }
        Self::from_adjacency(adjacency, degree_bound, start_points, alpha).map_err(|e| {
            Error::Format {
                path: path.to_path_buf(),
                offset: cur.pos as u64,
                reason: e.to_string(),
            }
        })
    }

    pub fn load(path: &Path, alpha: f64) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, alpha, path)
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl ByteCursor<'_> {
    fn error(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, len: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(self.error(self.pos, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// RobustPrune: merge `candidates` with `current`, drop `p`, then repeatedly
/// keep the closest survivor `p*` and discard every `p0` with
/// `alpha * d(p*, p0) <= d(p, p0)`. Stops after `degree_bound` selections.
///
/// The result is in selection order, which is nearest-first.
pub fn robust_prune(
    points: &PointSet,
    p: PointId,
    candidates: &[Neighbor],
    current: &[PointId],
    alpha: f64,
    degree_bound: usize,
) -> Vec<PointId> {
    let mut pool: Vec<Neighbor> = Vec::with_capacity(candidates.len() + current.len());
    pool.extend(candidates.iter().filter(|nb| nb.id != p).copied());
    pool.extend(
        current
            .iter()
            .filter(|&&q| q != p)
            .map(|&q| Neighbor::new(q, points.dist(p, q))),
    );
    pool.sort_unstable_by(Neighbor::cmp_by_dist);
    pool.dedup_by_key(|nb| nb.id);
    // dedup_by_key only removes adjacent repeats; a repeated id always has the
    // same distance so equal ids are adjacent after the (dist, id) sort.

    let mut selected = Vec::with_capacity(degree_bound.min(pool.len()));
    let mut alive = vec![true; pool.len()];
    for i in 0..pool.len() {
        if !alive[i] {
            continue;
        }
        let chosen = pool[i];
        selected.push(chosen.id);
        if selected.len() >= degree_bound {
            break;
        }
        let chosen_row = points.row(chosen.id);
        for j in i + 1..pool.len() {
            if alive[j] && alpha * points.distance_to(chosen_row, pool[j].id) <= pool[j].dist {
                alive[j] = false;
            }
        }
    }
    selected
}

/// Result of one greedy beam search.
#[derive(Debug, Clone, Default)]
pub struct BeamResult {
    /// The `k` closest points among the final beam and the visited set.
    pub neighbors: Vec<Neighbor>,
    /// Every expanded vertex, in expansion order.
    pub visited: Vec<Neighbor>,
}

#[derive(Clone, Copy)]
struct Slot {
    nb: Neighbor,
    expanded: bool,
}

/// Greedy beam search from `starts` toward `query`.
///
/// The beam always holds the `beam_width` closest points seen so far. Each
/// step expands the closest unexpanded beam member; the search ends once
/// every beam member has been expanded. The query itself is not excluded.
pub fn beam_search(
    adjacency: &[Vec<PointId>],
    points: &PointSet,
    query: &[f32],
    starts: &[PointId],
    beam_width: usize,
    k: usize,
) -> BeamResult {
    let beam_width = beam_width.max(1);
    let mut seen: HashSet<PointId> = HashSet::with_capacity(beam_width * 4);
    let mut beam: Vec<Slot> = Vec::with_capacity(beam_width + 1);
    for &s in starts {
        if seen.insert(s) {
            beam.push(Slot {
                nb: Neighbor::new(s, points.distance_to(query, s)),
                expanded: false,
            });
        }
    }
    beam.sort_unstable_by(|a, b| a.nb.cmp_by_dist(&b.nb));
    beam.truncate(beam_width);

    let mut visited = Vec::new();
    // index of the first unexpanded slot; everything before it is expanded
    let mut cursor = 0;
    while cursor < beam.len() {
        let current = beam[cursor].nb;
        beam[cursor].expanded = true;
        visited.push(current);
        cursor += 1;

        for &q in &adjacency[current.id as usize] {
            if !seen.insert(q) {
                continue;
            }
            let cand = Neighbor::new(q, points.distance_to(query, q));
            if beam.len() == beam_width
                && cand.cmp_by_dist(&beam[beam_width - 1].nb).is_gt()
            {
                continue;
            }
            let pos = beam.partition_point(|s| s.nb.cmp_by_dist(&cand).is_lt());
            beam.insert(
                pos,
                Slot {
                    nb: cand,
                    expanded: false,
                },
            );
            beam.truncate(beam_width);
            cursor = cursor.min(pos);
        }
        while cursor < beam.len() && beam[cursor].expanded {
            cursor += 1;
        }
    }

    let mut pool: Vec<Neighbor> = beam.iter().map(|s| s.nb).collect();
    pool.extend(visited.iter().copied());
    pool.sort_unstable_by(Neighbor::cmp_by_dist);
    pool.dedup_by_key(|nb| nb.id);
    pool.truncate(k);
    BeamResult {
        neighbors: pool,
        visited,
    }
}

/// How the build chooses the points every search starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    /// `num_starts` ids sampled uniformly without replacement.
    Random,
    /// The single point nearest the centroid.
    Medoid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VamanaParams {
    pub degree_bound: usize,
    pub build_beam: usize,
    pub alpha: f64,
    /// `None` means `ceil(sqrt(n))`.
    pub num_starts: Option<usize>,
    pub start_mode: StartMode,
    pub seed: u64,
}

impl Default for VamanaParams {
    fn default() -> Self {
        Self {
            degree_bound: 32,
            build_beam: 32,
            alpha: DEFAULT_ALPHA,
            num_starts: None,
            start_mode: StartMode::Random,
            seed: 0,
        }
    }
}

impl VamanaParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.degree_bound < 2 {
            return Err(Error::invalid("degree bound R must be at least 2"));
        }
        if self.build_beam == 0 {
            return Err(Error::invalid("build beam width must be at least 1"));
        }
        if self.alpha.is_nan() || self.alpha < 1.0 {
            return Err(Error::invalid(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        if let Some(s) = self.num_starts {
            if s == 0 || s > n {
                return Err(Error::invalid(format!(
                    "number of start points must be in 1..={n}, got {s}"
                )));
            }
        }
        Ok(())
    }

    fn resolved_starts(&self, n: usize) -> usize {
        self.num_starts
            .unwrap_or_else(|| (n as f64).sqrt().ceil() as usize)
            .clamp(1, n)
    }
}

/// Builds a Vamana graph by inserting points, in a seeded random order, in
/// batches of doubling size.
///
/// Within a batch every point searches the graph as it stood at the start of
/// the batch; out-lists and reverse edges are applied at the batch boundary in
/// id order, so the graph depends only on the parameters and the seed.
pub fn build_vamana(points: &PointSet, params: &VamanaParams) -> Result<GraphIndex> {
    let n = points.len();
    params.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let start_points: Vec<PointId> = match params.start_mode {
        StartMode::Random => sample(&mut rng, n, params.resolved_starts(n))
            .into_iter()
            .map(|i| i as PointId)
            .collect(),
        StartMode::Medoid => vec![points.approximate_medoid()],
    };
    let mut order: Vec<PointId> = points.ids().collect();
    order.shuffle(&mut rng);

    let mut graph = GraphIndex {
        adjacency: vec![Vec::new(); n],
        degree_bound: params.degree_bound,
        start_points,
        alpha: params.alpha,
    };
    let max_batch = ((n as f64 * MAX_BATCH_FRACTION).ceil() as usize).max(1);
    let mut inserted = 0;
    let mut batch = 1;
    while inserted < n {
        let end = (inserted + batch).min(n);
        insert_batch(&mut graph, points, &order[inserted..end], params);
        inserted = end;
        batch = (batch * 2).min(max_batch);
    }
    debug_assert!(graph.check_invariants().is_ok());
    Ok(graph)
}

fn insert_batch(graph: &mut GraphIndex, points: &PointSet, batch: &[PointId], params: &VamanaParams) {
    let (alpha, r) = (params.alpha, params.degree_bound);
    let new_lists: Vec<(PointId, Vec<PointId>)> = {
        let g = &*graph;
        batch
            .par_iter()
            .map(|&p| {
                let res = beam_search(
                    &g.adjacency,
                    points,
                    points.row(p),
                    &g.start_points,
                    params.build_beam,
                    0,
                );
                let out = robust_prune(points, p, &res.visited, g.out_neighbors(p), alpha, r);
                (p, out)
            })
            .collect()
    };

    let mut reverse: Vec<(PointId, PointId)> = Vec::new();
    for (p, out) in new_lists {
        reverse.extend(out.iter().map(|&q| (q, p)));
        graph.adjacency[p as usize] = out;
    }
    reverse.sort_unstable();

    let groups: Vec<&[(PointId, PointId)]> = reverse.chunk_by(|a, b| a.0 == b.0).collect();
    let updates: Vec<(PointId, Vec<PointId>)> = {
        let g = &*graph;
        groups
            .par_iter()
            .filter_map(|group| {
                let target = group[0].0;
                let current = g.out_neighbors(target);
                let mut added: Vec<PointId> = group
                    .iter()
                    .map(|&(_, src)| src)
                    .filter(|src| !current.contains(src))
                    .collect();
                added.dedup();
                if added.is_empty() {
                    return None;
                }
                if current.len() + added.len() <= r {
                    let mut out = current.to_vec();
                    out.extend(added);
                    Some((target, out))
                } else {
                    let cands: Vec<Neighbor> = added
                        .iter()
                        .map(|&q| Neighbor::new(q, points.dist(target, q)))
                        .collect();
                    Some((target, robust_prune(points, target, &cands, current, alpha, r)))
                }
            })
            .collect()
    };
    for (target, out) in updates {
        graph.adjacency[target as usize] = out;
    }
}

/// A [`GraphIndex`] bound to its points, answering kNN queries with beam
/// search and falling back to an exact scan when the search comes up short.
#[derive(Debug)]
pub struct VamanaIndex<'a> {
    graph: GraphIndex,
    points: &'a PointSet,
    beam_width: usize,
    fallbacks: AtomicUsize,
}

impl<'a> VamanaIndex<'a> {
    pub fn new(graph: GraphIndex, points: &'a PointSet, beam_width: usize) -> Result<Self> {
        if graph.len() != points.len() {
            return Err(Error::invalid(format!(
                "graph has {} vertices but point set has {} points",
                graph.len(),
                points.len()
            )));
        }
        if beam_width == 0 {
            return Err(Error::invalid("beam width L must be at least 1"));
        }
        Ok(Self {
            graph,
            points,
            beam_width,
            fallbacks: AtomicUsize::new(0),
        })
    }

    pub fn build(points: &'a PointSet, params: &VamanaParams, beam_width: usize) -> Result<Self> {
        Self::new(build_vamana(points, params)?, points, beam_width)
    }

    pub fn graph(&self) -> &GraphIndex {
        &self.graph
    }

    pub fn beam_width(&self) -> usize {
        self.beam_width
    }

    /// Number of queries so far that needed the exact fallback.
    pub fn fallback_count(&self) -> usize {
        self.fallbacks.load(AtomicOrdering::Relaxed)
    }

    /// Beam search for `k + 1` points (room for the query itself) with beam
    /// width `max(L, k + 1)`, then drop the query. Falls back to an exact scan
    /// if fewer than `min(k, n - 1)` neighbors remain.
    pub fn find_knn_with_fallback(&self, query: PointId, k: usize) -> Result<NeighborList> {
        check_k(k)?;
        self.points.check_id(query)?;
        let want = k.min(self.points.len() - 1);
        let width = self.beam_width.max(k + 1);
        let res = beam_search(
            &self.graph.adjacency,
            self.points,
            self.points.row(query),
            &self.graph.start_points,
            width,
            k + 1,
        );
        let mut found = res.neighbors;
        found.retain(|nb| nb.id != query);
        found.truncate(k);
        if found.len() < want {
            self.fallbacks.fetch_add(1, AtomicOrdering::Relaxed);
            return Ok(exact_knn(self.points, query, k));
        }
        Ok(NeighborList::from_sorted(found))
    }
}

impl KnnIndex for VamanaIndex<'_> {
    fn points(&self) -> &PointSet {
        self.points
    }

    fn find_knn(&self, query: PointId, k: usize) -> Result<NeighborList> {
        self.find_knn_with_fallback(query, k)
    }
}

/// Mean fraction of the true neighbors recovered, over all queries.
pub fn recall(approx: &[NeighborList], truth: &[NeighborList]) -> f64 {
    assert_eq!(approx.len(), truth.len());
    let mut total = 0.0;
    let mut counted = 0usize;
    for (a, t) in approx.iter().zip(truth) {
        if t.is_empty() {
            continue;
        }
        let want: HashSet<PointId> = t.ids().collect();
        let hit = a.ids().filter(|id| want.contains(id)).count();
        total += hit as f64 / t.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        1.0
    } else {
        total / counted as f64
    }
}
