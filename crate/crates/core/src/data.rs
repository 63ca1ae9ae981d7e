//! Dataset I/O (fvecs, f32bin, label files, saved pipeline state) and the
//! synthetic Gaussian-mixture generator.

use std::fmt::Display;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cluster::{Clustering, DpcState};
use crate::dependent::DependentInfo;
use crate::error::{Error, Result};
use crate::index::{Neighbor, NeighborList};
use crate::points::{PointId, PointSet};

pub type LabelVector = Vec<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    /// Repeated records: little-endian `i32` dimension, then that many `f32`.
    Fvecs,
    /// Little-endian `u32` n, `u32` d, then `n * d` `f32`.
    F32Bin,
}

impl VectorFormat {
    /// `.fvecs` is fvecs; `.fbin`, `.f32bin` and `.bin` are f32bin.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(VectorFormat::Fvecs),
            "fbin" | "f32bin" | "bin" => Some(VectorFormat::F32Bin),
            _ => None,
        }
    }
}

impl FromStr for VectorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fvecs" => Ok(VectorFormat::Fvecs),
            "f32bin" | "fbin" => Ok(VectorFormat::F32Bin),
            other => Err(Error::invalid(format!("unknown vector format {other:?}"))),
        }
    }
}

fn format_err(path: &Path, offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.into(),
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn decode_f32s(bytes: &[u8], at: usize, count: usize, out: &mut Vec<f32>, path: &Path) -> Result<()> {
    for (i, chunk) in bytes[at..at + count * 4].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(path, at + i * 4, format!("non-finite coordinate {v}")));
        }
        out.push(v);
    }
    Ok(())
}

pub fn parse_fvecs(bytes: &[u8], path: &Path) -> Result<PointSet> {
    if bytes.is_empty() {
        return Err(format_err(path, 0, "empty file"));
    }
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(format_err(path, pos, "truncated dimension header"));
        }
        let d = i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        if d <= 0 {
            return Err(format_err(path, pos, format!("invalid dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(first) if first != d => {
                return Err(format_err(
                    path,
                    pos,
                    format!("dimension {d} differs from first record's {first}"),
                ));
            }
            _ => {}
        }
        pos += 4;
        if bytes.len() - pos < d * 4 {
            return Err(format_err(path, pos, "truncated record"));
        }
        decode_f32s(bytes, pos, d, &mut data, path)?;
        pos += d * 4;
    }
    PointSet::new(data, dim.unwrap_or(0)).map_err(|e| format_err(path, 0, e.to_string()))
}

pub fn parse_f32bin(bytes: &[u8], path: &Path) -> Result<PointSet> {
    if bytes.len() < 8 {
        return Err(format_err(path, 0, "missing (n, d) header"));
    }
    let n = read_u32(bytes, 0) as usize;
    let d = read_u32(bytes, 4) as usize;
    if n == 0 {
        return Err(format_err(path, 0, "zero points"));
    }
    if d == 0 {
        return Err(format_err(path, 4, "zero dimension"));
    }
    let want = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| format_err(path, 0, "header overflows"))?;
    if bytes.len() - 8 < want {
        return Err(format_err(path, bytes.len(), format!("truncated: expected {want} payload bytes")));
    }
    if bytes.len() - 8 > want {
        return Err(format_err(path, 8 + want, "trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(n * d);
    decode_f32s(bytes, 8, n * d, &mut data, path)?;
    PointSet::new(data, d).map_err(|e| format_err(path, 0, e.to_string()))
}

pub fn read_vectors(path: &Path, format: VectorFormat) -> Result<PointSet> {
    let bytes = fs::read(path)?;
    match format {
        VectorFormat::Fvecs => parse_fvecs(&bytes, path),
        VectorFormat::F32Bin => parse_f32bin(&bytes, path),
    }
}

pub fn encode_vectors(points: &PointSet, format: VectorFormat) -> Vec<u8> {
    let (n, d) = (points.len(), points.dim());
    let mut out = Vec::with_capacity(n * d * 4 + n * 4 + 8);
    match format {
        VectorFormat::Fvecs => {
            for i in points.ids() {
                out.extend_from_slice(&(d as i32).to_le_bytes());
                for v in points.row(i) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        VectorFormat::F32Bin => {
            out.extend_from_slice(&(n as u32).to_le_bytes());
            out.extend_from_slice(&(d as u32).to_le_bytes());
            for v in points.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn write_vectors(points: &PointSet, path: &Path, format: VectorFormat) -> Result<()> {
    fs::write(path, encode_vectors(points, format))?;
    Ok(())
}

/// One integer per line. Trailing blank lines are ignored.
pub fn parse_labels(text: &str, path: &Path) -> Result<LabelVector> {
    let lines: Vec<&str> = text.lines().collect();
    let end = lines
        .iter()
        .rposition(|l| !l.trim().is_empty())
        .map_or(0, |p| p + 1);
    lines[..end]
        .iter()
        .enumerate()
        .map(|(i, line)| {
            line.trim().parse::<i64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("{:?} is not an integer label: {e}", line.trim()),
            })
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<LabelVector> {
    let text = fs::read_to_string(path)?;
    parse_labels(&text, path)
}

pub fn write_labels<T: Display>(labels: &[T], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

/// `<path>.meta`, next to a label file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes one canonical label per line in point order. With `sidecar`, also
/// writes `<path>.meta` holding `centers=` and `noise=` lines of space-separated ids.
pub fn write_clustering(c: &Clustering, path: &Path, sidecar: bool) -> Result<()> {
    write_labels(&c.labels, path)?;
    if sidecar {
        let join = |ids: &[PointId]| {
            ids.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        fs::write(
            sidecar_path(path),
            format!("centers={}\nnoise={}\n", join(&c.centers), join(&c.noise)),
        )?;
    }
    Ok(())
}

const STATE_MAGIC: &[u8; 4] = b"DPCS";
const NO_LAMBDA: u32 = u32::MAX;

/// Little-endian: magic `DPCS`, u32 n, then per point `f64` rho, `u32` lambda
/// (`u32::MAX` for none), `f64` delta, `u32` neighbor count and
/// `(u32 id, f64 dist)` pairs.
pub fn encode_state(state: &DpcState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(STATE_MAGIC);
    out.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for i in 0..state.len() {
        let dep = state.dependents[i];
        out.extend_from_slice(&state.rho[i].to_le_bytes());
        out.extend_from_slice(&dep.lambda.unwrap_or(NO_LAMBDA).to_le_bytes());
        out.extend_from_slice(&dep.delta.to_le_bytes());
        let nbrs = &state.neighbors[i];
        out.extend_from_slice(&(nbrs.len() as u32).to_le_bytes());
        for nb in nbrs {
            out.extend_from_slice(&nb.id.to_le_bytes());
            out.extend_from_slice(&nb.dist.to_le_bytes());
        }
    }
    out
}

pub fn decode_state(bytes: &[u8], path: &Path) -> Result<DpcState> {
    let mut pos = 0usize;
    let mut take = |len: usize| -> Result<&[u8]> {
        if bytes.len() - pos < len {
            return Err(format_err(path, pos, "unexpected end of state file"));
        }
        let s = &bytes[pos..pos + len];
        pos += len;
        Ok(s)
    };
    if take(4)? != STATE_MAGIC {
        return Err(format_err(path, 0, "bad magic, expected DPCS"));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
    let n = u32_at(take(4)?) as usize;
    let mut rho = Vec::with_capacity(n);
    let mut dependents = Vec::with_capacity(n);
    let mut neighbors = Vec::with_capacity(n);
    for _ in 0..n {
        rho.push(f64_at(take(8)?));
        let lambda = u32_at(take(4)?);
        let delta = f64_at(take(8)?);
        dependents.push(DependentInfo {
            lambda: (lambda != NO_LAMBDA).then_some(lambda),
            delta,
        });
        let count = u32_at(take(4)?) as usize;
        let mut list = Vec::with_capacity(count);
        for _ in 0..count {
            let id = u32_at(take(4)?);
            let dist = f64_at(take(8)?);
            list.push(Neighbor::new(id, dist));
        }
        neighbors.push(NeighborList::from_unsorted(list));
    }
    if pos != bytes.len() {
        return Err(format_err(path, pos, "trailing bytes after state"));
    }
    let bad_id = dependents
        .iter()
        .filter_map(|d| d.lambda)
        .chain(neighbors.iter().flat_map(|l| l.ids()))
        .find(|&id| id as usize >= n);
    if let Some(id) = bad_id {
        return Err(format_err(path, 0, format!("point id {id} out of range for {n} points")));
    }
    if rho.iter().any(|r| r.is_nan()) {
        return Err(format_err(path, 0, "NaN density"));
    }
    Ok(DpcState {
        rho,
        dependents,
        neighbors,
    })
}

pub fn write_state(state: &DpcState, path: &Path) -> Result<()> {
    fs::write(path, encode_state(state))?;
    Ok(())
}

pub fn read_state(path: &Path) -> Result<DpcState> {
    let bytes = fs::read(path)?;
    decode_state(&bytes, path)
}

/// Parameters of the synthetic Gaussian mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub n: usize,
    pub dim: usize,
    pub clusters: usize,
    /// Per-coordinate variance of every component.
    pub variance: f64,
    pub seed: u64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            n: 10_000,
            dim: 128,
            clusters: 10,
            variance: 0.05,
            seed: 0,
        }
    }
}

/// Samples `clusters` centers uniformly from `[0, 1]^dim`, then for each
/// center draws its share of points from an isotropic Gaussian around it.
///
/// Cluster `c` gets `n / clusters` points, plus one if `c < n % clusters`.
/// Points are laid out cluster by cluster; labels are cluster indices. Every
/// draw comes from ChaCha8: stream 0 for the centers, stream `c + 1` for
/// cluster `c`, so the output depends only on these parameters.
pub fn generate_gaussian(spec: &GaussianSpec) -> Result<(PointSet, LabelVector)> {
    let GaussianSpec {
        n,
        dim,
        clusters,
        variance,
        seed,
    } = *spec;
    if clusters == 0 || n == 0 || dim == 0 {
        return Err(Error::invalid("n, dim, and cluster count must all be positive"));
    }
    if clusters > n {
        return Err(Error::invalid(format!("{clusters} clusters exceed {n} points")));
    }
    if !variance.is_finite() || variance < 0.0 {
        return Err(Error::invalid(format!("invalid variance {variance}")));
    }
    let sd = variance.sqrt();
    let mut center_rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f64> = (0..clusters * dim).map(|_| center_rng.random::<f64>()).collect();

    let base = n / clusters;
    let extra = n % clusters;
    let blocks: Vec<Vec<f32>> = (0..clusters)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64 + 1);
            let size = base + usize::from(c < extra);
            let center = &centers[c * dim..(c + 1) * dim];
            let mut block = Vec::with_capacity(size * dim);
            for _ in 0..size {
                for &mu in center {
                    let z: f64 = rng.sample(StandardNormal);
                    block.push((mu + sd * z) as f32);
                }
            }
            block
        })
        .collect();
    let labels: LabelVector = (0..clusters)
        .flat_map(|c| std::iter::repeat_n(c as i64, base + usize::from(c < extra)))
        .collect();
    let points = PointSet::new(blocks.concat(), dim)?;
    Ok((points, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn fvecs_decoding() {
        let bytes = [2, 0, 0, 0, 0, 0, 0x80, 0x3F, 0, 0, 0, 0x40];
        let p = parse_fvecs(&bytes, mem()).unwrap();
        assert_eq!((p.len(), p.dim()), (1, 2));
        assert_eq!(p.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn fvecs_errors_carry_offsets() {
        assert!(matches!(parse_fvecs(&[], mem()), Err(Error::Format { offset: 0, .. })));
        // second record claims dimension 1
        let mut bytes = vec![2, 0, 0, 0, 0, 0, 0x80, 0x3F, 0, 0, 0, 0x40];
        bytes.extend_from_slice(&[1, 0, 0, 0, 0, 0, 0x80, 0x3F]);
        assert!(matches!(parse_fvecs(&bytes, mem()), Err(Error::Format { offset: 12, .. })));
        // truncated payload
        assert!(matches!(
            parse_fvecs(&[2, 0, 0, 0, 0, 0, 0x80], mem()),
            Err(Error::Format { offset: 4, .. })
        ));
        // NaN coordinate
        let nan = f32::NAN.to_le_bytes();
        let bytes = [1, 0, 0, 0, nan[0], nan[1], nan[2], nan[3]];
        assert!(matches!(parse_fvecs(&bytes, mem()), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn f32bin_errors() {
        assert!(parse_f32bin(&[], mem()).is_err());
        let zero = [0u8, 0, 0, 0, 2, 0, 0, 0];
        assert!(parse_f32bin(&zero, mem()).is_err());
        let short = [1u8, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0x80, 0x3F];
        assert!(parse_f32bin(&short, mem()).is_err());
        let inf = f32::INFINITY.to_le_bytes();
        let mut bytes = vec![1u8, 0, 0, 0, 1, 0, 0, 0];
        bytes.extend_from_slice(&inf);
        assert!(parse_f32bin(&bytes, mem()).is_err());
    }

    #[test]
    fn vector_round_trips() {
        let (p, _) = generate_gaussian(&GaussianSpec {
            n: 37,
            dim: 5,
            clusters: 3,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [("a.fvecs", VectorFormat::Fvecs), ("a.fbin", VectorFormat::F32Bin)] {
            let path = dir.path().join(name);
            write_vectors(&p, &path, format).unwrap();
            assert_eq!(VectorFormat::from_path(&path), Some(format));
            assert_eq!(read_vectors(&path, format).unwrap(), p);
        }
    }

    #[test]
    fn label_parsing() {
        assert_eq!(parse_labels("0\n0\n1\n", mem()).unwrap(), vec![0, 0, 1]);
        assert_eq!(parse_labels("0\n0\n1\n\n\n", mem()).unwrap(), vec![0, 0, 1]);
        assert_eq!(parse_labels("-4\r\n7", mem()).unwrap(), vec![-4, 7]);
        match parse_labels("0\nx\n1\n", mem()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_labels("0\n\n1\n", mem()).is_err());
        assert!(parse_labels("", mem()).unwrap().is_empty());
    }

    #[test]
    fn clustering_round_trip_with_sidecar() {
        let c = Clustering {
            labels: vec![1, 1, 1, 3, 4, 3],
            centers: vec![1, 3],
            noise: vec![4],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        write_clustering(&c, &path, true).unwrap();
        assert_eq!(read_labels(&path).unwrap(), vec![1, 1, 1, 3, 4, 3]);
        let meta = fs::read_to_string(sidecar_path(&path)).unwrap();
        assert_eq!(meta, "centers=1 3\nnoise=4\n");
    }

    #[test]
    fn state_round_trip() {
        let state = DpcState {
            rho: vec![1.0, f64::INFINITY, 0.5],
            dependents: vec![
                DependentInfo { lambda: Some(1), delta: 2.0 },
                DependentInfo::NONE,
                DependentInfo { lambda: Some(0), delta: 1.5 },
            ],
            neighbors: vec![
                NeighborList::from_unsorted(vec![Neighbor::new(1, 2.0)]),
                NeighborList::from_unsorted(vec![Neighbor::new(0, 2.0)]),
                NeighborList::from_unsorted(vec![Neighbor::new(0, 1.5)]),
            ],
        };
        let bytes = encode_state(&state);
        assert_eq!(decode_state(&bytes, mem()).unwrap(), state);
        assert!(decode_state(&bytes[..bytes.len() - 1], mem()).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'x';
        assert!(decode_state(&bad, mem()).is_err());
    }

    #[test]
    fn gaussian_shape_and_determinism() {
        let spec = GaussianSpec {
            n: 100,
            dim: 128,
            clusters: 10,
            seed: 42,
            ..Default::default()
        };
        let (p, labels) = generate_gaussian(&spec).unwrap();
        assert_eq!((p.len(), p.dim()), (100, 128));
        for c in 0..10 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 10);
        }
        let (p2, labels2) = generate_gaussian(&spec).unwrap();
        assert_eq!(p.as_slice(), p2.as_slice());
        assert_eq!(labels, labels2);
        let (p3, _) = generate_gaussian(&GaussianSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(p.as_slice(), p3.as_slice());
    }

    #[test]
    fn gaussian_remainder_and_errors() {
        let (_, labels) = generate_gaussian(&GaussianSpec {
            n: 23,
            dim: 2,
            clusters: 5,
            ..Default::default()
        })
        .unwrap();
        let sizes: Vec<usize> = (0..5).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        assert!(generate_gaussian(&GaussianSpec { n: 3, clusters: 4, ..Default::default() }).is_err());
        assert!(generate_gaussian(&GaussianSpec { clusters: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn gaussian_means_near_centers() {
        let spec = GaussianSpec {
            n: 2000,
            dim: 64,
            clusters: 4,
            seed: 7,
            ..Default::default()
        };
        let (p, labels) = generate_gaussian(&spec).unwrap();
        // regenerate centers the same way the generator does
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let centers: Vec<f64> = (0..spec.clusters * spec.dim).map(|_| rng.random::<f64>()).collect();
        let per = spec.n / spec.clusters;
        let bound = 4.0 * (spec.variance / per as f64).sqrt();
        let mut within = 0;
        for c in 0..spec.clusters {
            for j in 0..spec.dim {
                let mean: f64 = (0..spec.n)
                    .filter(|&i| labels[i] == c as i64)
                    .map(|i| p.row(i as u32)[j] as f64)
                    .sum::<f64>()
                    / per as f64;
                if (mean - centers[c * spec.dim + j]).abs() <= bound {
                    within += 1;
                }
            }
        }
        assert!(within as f64 >= 0.99 * (spec.clusters * spec.dim) as f64);
    }
}
