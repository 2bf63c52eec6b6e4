//! Test support: independent oracles and synthetic corpora.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use prefsel::dataset::{
    write_candidates, write_embeddings_binary, write_scores, CandidatePool, EmbeddingSet,
    ScoreKind, ScoreTable,
};
use prefsel::distance::DistanceMatrix;
use prefsel::selection::{SelectionResult, Solver, StrategyKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric, zero-diagonal matrix with entries in [0, 1]. Quantized matrices
/// use quarter steps so that objective ties actually occur.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, quantized: bool) -> DistanceMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let u: f64 = rng.random();
            let v = if quantized { (u * 4.0).round() / 4.0 } else { u };
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    DistanceMatrix::from_rows(rows).unwrap()
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Euclidean distances between points of the unit cube, scaled by the cube
/// diagonal into [0, 1]: a metric by construction.
pub fn euclidean_matrix(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> DistanceMatrix {
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let diagonal = (dim as f64).sqrt();
    let rows = points
        .iter()
        .map(|p| points.iter().map(|q| euclidean(p, q) / diagonal).collect())
        .collect();
    DistanceMatrix::from_rows(rows).unwrap()
}

/// Objective of a sorted subset, written directly against the raw rows:
/// `-(row sum / N)` accumulated per item, then the ordered-pair sum over `|Y|`.
pub fn oracle_objective(rows: &[Vec<f64>], subset: &[usize], lambda: f64) -> (f64, f64, f64) {
    let n = rows.len() as f64;
    let mut rep = 0.0;
    for &y in subset {
        let mut s = 0.0;
        for &v in &rows[y] {
            s += v;
        }
        rep += -(s / n);
    }
    let mut div = 0.0;
    if subset.len() >= 2 {
        let mut t = 0.0;
        for &a in subset {
            for &b in subset {
                if a != b {
                    t += rows[a][b];
                }
            }
        }
        div = t / subset.len() as f64;
    }
    (rep, div, rep + lambda * div)
}

/// Every `k`-subset of `0..n` as a sorted index list, via bitmasks.
pub fn all_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1u32 << n))
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|&i| m & (1 << i) != 0).collect())
        .collect()
}

/// Brute-force maximizer: best value, then the lexicographically smallest tuple.
pub fn oracle_best(rows: &[Vec<f64>], k: usize, lambda: f64) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for s in all_subsets(rows.len(), k) {
        let (_, _, v) = oracle_objective(rows, &s, lambda);
        let better = match &best {
            None => true,
            Some((bs, bv)) => v > *bv || (v == *bv && s < *bs),
        };
        if better {
            best = Some((s, v));
        }
    }
    best.unwrap()
}

pub fn oracle_covering_radius(rows: &[Vec<f64>], centers: &[usize]) -> f64 {
    rows.iter()
        .map(|r| centers.iter().map(|&c| r[c]).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

pub fn selection(strategy: StrategyKind, indices: Vec<usize>) -> SelectionResult {
    SelectionResult {
        strategy,
        solver: Solver::NotApplicable,
        indices,
        breakdown: None,
    }
}

/// Parameters of the clustered embedding corpus. Each instruction gets its own
/// four cluster means around a shared unit direction; each cluster is a
/// Gaussian whose covariance is a random rank-`rank` factor plus a small
/// isotropic part, so some members are central and others peripheral.
#[derive(Debug, Clone, Copy)]
pub struct ClusterSpec {
    pub instructions: usize,
    pub responses: usize,
    pub dim: usize,
    pub clusters: usize,
    pub separation: f64,
    pub spread: f64,
    pub rank: usize,
    pub isotropic: f64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            instructions: 50,
            responses: 128,
            dim: 64,
            clusters: 4,
            separation: 2.0,
            spread: 1.0,
            rank: 2,
            isotropic: 0.3,
        }
    }
}

pub fn clustered_embeddings(spec: ClusterSpec, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = rng(seed);
    let d = spec.dim;
    let scale = 1.0 / (d as f64).sqrt();
    (0..spec.instructions)
        .map(|_| {
            let mut base = gaussian_vec(&mut rng, d);
            let norm = base.iter().map(|x| x * x).sum::<f64>().sqrt();
            base.iter_mut().for_each(|x| *x /= norm);
            let means: Vec<Vec<f64>> = (0..spec.clusters)
                .map(|_| {
                    let g = gaussian_vec(&mut rng, d);
                    base.iter()
                        .zip(&g)
                        .map(|(b, x)| b + spec.separation * scale * x)
                        .collect()
                })
                .collect();
            let factors: Vec<Vec<Vec<f64>>> = (0..spec.clusters)
                .map(|_| {
                    (0..spec.rank)
                        .map(|_| gaussian_vec(&mut rng, d).iter().map(|x| x * scale).collect())
                        .collect()
                })
                .collect();
            (0..spec.responses)
                .map(|_| {
                    let c = rng.random_range(0..spec.clusters);
                    let mut v = means[c].clone();
                    for col in &factors[c] {
                        let z: f64 = rng.sample(StandardNormal);
                        v.iter_mut()
                            .zip(col)
                            .for_each(|(x, u)| *x += spec.spread * z * u);
                    }
                    let iso = gaussian_vec(&mut rng, d);
                    v.iter_mut()
                        .zip(&iso)
                        .for_each(|(x, e)| *x += spec.isotropic * scale * e);
                    v
                })
                .collect()
        })
        .collect()
}

pub struct CorpusFiles {
    pub candidates: PathBuf,
    pub embeddings: PathBuf,
    pub rewards: PathBuf,
}

/// Writes candidates, binary embeddings and reward scores for synthetic pools.
pub fn write_corpus(dir: &Path, vectors: &[Vec<Vec<f64>>], seed: u64) -> CorpusFiles {
    let mut rng = rng(seed ^ 0x5eed);
    let mut pools = Vec::new();
    let mut sets = Vec::new();
    let mut tables = Vec::new();
    for (i, vs) in vectors.iter().enumerate() {
        let id = format!("q{i:04}");
        let responses = (0..vs.len())
            .map(|j| format!("response {j} to {id} with token t{} and t{}", j % 7, j % 3))
            .collect();
        pools.push(CandidatePool::new(&id, format!("instruction {i}"), responses));
        sets.push(EmbeddingSet {
            id: id.clone(),
            vectors: vs.clone(),
        });
        tables.push(ScoreTable {
            id,
            scores: (0..vs.len()).map(|_| rng.random::<f64>()).collect(),
            kind: ScoreKind::Reward,
        });
    }
    let files = CorpusFiles {
        candidates: dir.join("candidates.jsonl"),
        embeddings: dir.join("embeddings.bin"),
        rewards: dir.join("rewards.jsonl"),
    };
    write_candidates(&pools, &files.candidates).unwrap();
    write_embeddings_binary(&sets, &files.embeddings).unwrap();
    write_scores(&tables, &files.rewards).unwrap();
    files
}

/// Small Gaussian corpus: `instructions` pools of `n` responses in 8 dimensions.
pub fn toy_corpus(dir: &Path, instructions: usize, n: usize, seed: u64) -> CorpusFiles {
    let mut rng = rng(seed);
    let vectors: Vec<Vec<Vec<f64>>> = (0..instructions)
        .map(|_| (0..n).map(|_| gaussian_vec(&mut rng, 8)).collect())
        .collect();
    write_corpus(dir, &vectors, seed)
}
