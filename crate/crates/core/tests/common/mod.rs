//! Reference density-peaks clustering straight from the definitions: a full
//! distance matrix, sorted neighbor lists, and a walk up the dependency chain
//! for labels. Shares nothing with the library beyond the distance kernel.

#![allow(dead_code)]

use std::cmp::Ordering;

use dpc_core::{
    run_pipeline, CenterPolicy, DensityKind, DoublingParams, IndexConfig, NoisePolicy,
    PipelineConfig, PointSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct OracleOutput {
    pub rho: Vec<f64>,
    pub lambda: Vec<Option<u32>>,
    pub delta: Vec<f64>,
    pub noise: Vec<u32>,
    pub centers: Vec<u32>,
    pub labels: Vec<u32>,
}

fn by_dist_then_id(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
}

pub fn oracle_dpc(
    points: &PointSet,
    k: usize,
    kind: DensityKind,
    center: CenterPolicy,
    rho_min: f64,
) -> OracleOutput {
    let n = points.len();
    let dist: Vec<Vec<f64>> = (0..n as u32)
        .map(|i| (0..n as u32).map(|j| points.distance(i, j).unwrap()).collect())
        .collect();

    let knn: Vec<Vec<(f64, u32)>> = (0..n)
        .map(|i| {
            let mut all: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dist[i][j], j as u32))
                .collect();
            all.sort_by(by_dist_then_id);
            all.truncate(k);
            all
        })
        .collect();

    let kth = |l: &[(f64, u32)]| {
        let d = l.last().unwrap().0;
        if d == 0.0 {
            f64::INFINITY
        } else {
            1.0 / d
        }
    };
    let rho: Vec<f64> = match kind {
        DensityKind::Kth => knn.iter().map(|l| kth(l)).collect(),
        DensityKind::KthNormalized => {
            let base: Vec<f64> = knn.iter().map(|l| kth(l)).collect();
            (0..n)
                .map(|i| {
                    if base[i].is_infinite() {
                        return f64::INFINITY;
                    }
                    let mut s = 0.0;
                    for &(_, j) in &knn[i] {
                        s += base[j as usize];
                    }
                    if s == 0.0 {
                        f64::INFINITY
                    } else {
                        base[i] * knn[i].len() as f64 / s
                    }
                })
                .collect()
        }
        DensityKind::ExpSum => knn
            .iter()
            .map(|l| {
                let mut s = 0.0;
                for &(d, _) in l {
                    s += d * d;
                }
                (-s / l.len() as f64).exp()
            })
            .collect(),
        DensityKind::SumExp => knn
            .iter()
            .map(|l| {
                let mut s = 0.0;
                for &(d, _) in l {
                    s += (-d * d).exp();
                }
                s / l.len() as f64
            })
            .collect(),
        DensityKind::Sum => knn
            .iter()
            .map(|l| {
                let mut s = 0.0;
                for &(d, _) in l {
                    s += d;
                }
                -s
            })
            .collect(),
    };

    // j is denser than i: strictly larger density, or equal density and smaller id
    let above = |j: usize, i: usize| rho[j] > rho[i] || (rho[j] == rho[i] && j < i);

    let mut lambda = vec![None; n];
    let mut delta = vec![f64::INFINITY; n];
    for i in 0..n {
        let best = (0..n)
            .filter(|&j| above(j, i))
            .map(|j| (dist[i][j], j as u32))
            .min_by(by_dist_then_id);
        if let Some((d, j)) = best {
            lambda[i] = Some(j);
            delta[i] = d;
        }
    }

    let noise: Vec<u32> = (0..n).filter(|&i| rho[i] < rho_min).map(|i| i as u32).collect();
    let is_noise = |i: usize| rho[i] < rho_min;
    let non_noise: Vec<usize> = (0..n).filter(|&i| !is_noise(i)).collect();

    let mut is_center = vec![false; n];
    match center {
        CenterPolicy::Threshold { delta_min } => {
            for &i in &non_noise {
                is_center[i] = delta[i] >= delta_min;
            }
        }
        CenterPolicy::Product { n_c } => {
            let score = |i: usize| {
                let p = rho[i] * delta[i];
                (delta[i].is_infinite(), if p.is_nan() { 0.0 } else { p }, delta[i])
            };
            let mut order = non_noise.clone();
            order.sort_by(|&a, &b| {
                let (sa, sb) = (score(a), score(b));
                sb.0.cmp(&sa.0)
                    .then(sb.1.partial_cmp(&sa.1).unwrap())
                    .then(sb.2.partial_cmp(&sa.2).unwrap())
                    .then(a.cmp(&b))
            });
            for &i in order.iter().take(n_c) {
                is_center[i] = true;
            }
        }
        CenterPolicy::Local => {
            for &i in &non_noise {
                is_center[i] = knn[i].iter().all(|&(_, j)| above(i, j as usize));
            }
        }
    }
    for &i in &non_noise {
        if lambda[i].is_none() {
            is_center[i] = true;
        }
    }
    let centers: Vec<u32> = (0..n).filter(|&i| is_center[i]).map(|i| i as u32).collect();

    let labels: Vec<u32> = (0..n)
        .map(|i| {
            if is_noise(i) {
                return i as u32;
            }
            let mut cur = i;
            while !is_center[cur] {
                cur = lambda[cur].expect("chain ends at a center") as usize;
            }
            cur as u32
        })
        .collect();

    OracleOutput {
        rho,
        lambda,
        delta,
        noise,
        centers,
        labels,
    }
}

/// Random instance: a uniform cloud, a small mixture, or a grid with
/// duplicated points (to exercise ties).
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> PointSet {
    let style = rng.random_range(0..3);
    let data: Vec<f32> = match style {
        0 => (0..n * dim).map(|_| rng.random::<f32>()).collect(),
        1 => {
            let c = rng.random_range(1..6);
            let centers: Vec<f32> = (0..c * dim).map(|_| rng.random::<f32>() * 4.0).collect();
            (0..n)
                .flat_map(|_| {
                    let ci = rng.random_range(0..c);
                    (0..dim)
                        .map(|j| centers[ci * dim + j] + (rng.random::<f32>() - 0.5) * 0.6)
                        .collect::<Vec<_>>()
                })
                .collect()
        }
        _ => (0..n * dim).map(|_| rng.random_range(0..4) as f32).collect(),
    };
    PointSet::new(data, dim).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Case {
    pub points: PointSet,
    pub config: PipelineConfig,
}

/// A random brute-force configuration over a random instance. `rho_min` is
/// drawn from the instance's own densities so noise actually occurs.
pub fn random_case(seed: u64, n_max: usize, dims: &[usize]) -> Case {
    let mut rng = rng(seed);
    let n = rng.random_range(2..=n_max);
    let dim = dims[rng.random_range(0..dims.len())];
    let points = random_instance(&mut rng, n, dim);
    let k = rng.random_range(1..=(n - 1).min(10));
    let density = DensityKind::ALL[rng.random_range(0..DensityKind::ALL.len())];
    let center = match rng.random_range(0..3) {
        0 => CenterPolicy::Threshold {
            delta_min: rng.random::<f64>() * 0.5 * (dim as f64).sqrt(),
        },
        1 => CenterPolicy::Product {
            n_c: rng.random_range(1..=8),
        },
        _ => CenterPolicy::Local,
    };
    let doubling = match rng.random_range(0..3) {
        0 => DoublingParams::exhaustive(k),
        1 => DoublingParams::new(k + rng.random_range(1..=8), 0),
        _ => DoublingParams::new(k + rng.random_range(1..=8), rng.random_range(0..50)),
    };
    let rho_min = if rng.random_bool(0.5) {
        f64::NEG_INFINITY
    } else {
        let mut rho = oracle_dpc(&points, k, density, CenterPolicy::Local, f64::NEG_INFINITY).rho;
        rho.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rho[rng.random_range(0..=n / 5)]
    };
    Case {
        points,
        config: PipelineConfig {
            index: IndexConfig::BruteForce,
            k,
            density,
            center,
            noise: NoisePolicy::new(rho_min),
            doubling,
        },
    }
}

/// Runs the pipeline on the case and compares everything with the oracle.
pub fn check_case(case: &Case) -> Result<(), String> {
    let c = &case.config;
    let got = run_pipeline(&case.points, c).map_err(|e| e.to_string())?;
    let want = oracle_dpc(&case.points, c.k, c.density, c.center, c.noise.rho_min);
    let n = case.points.len();
    for i in 0..n {
        let (a, b) = (got.state.rho[i], want.rho[i]);
        if !(a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0)) {
            return Err(format!("rho[{i}]: {a} vs {b}"));
        }
    }
    let lambda: Vec<Option<u32>> = got.state.dependents.iter().map(|d| d.lambda).collect();
    if lambda != want.lambda {
        return Err(format!("dependent points differ: {lambda:?} vs {:?}", want.lambda));
    }
    if got.clustering.noise != want.noise {
        return Err("noise sets differ".into());
    }
    if got.clustering.centers != want.centers {
        return Err(format!(
            "centers differ: {:?} vs {:?}",
            got.clustering.centers, want.centers
        ));
    }
    if got.clustering.labels != want.labels {
        return Err("labels differ".into());
    }
    Ok(())
}
