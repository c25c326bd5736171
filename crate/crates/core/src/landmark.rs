//! Landmark acceleration: embed a random subset of points using random-walk
//! affinities on a kNN graph, then place the remaining points with the
//! kernel map.

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::affinity::{joint_symmetric, pairwise_sq_distances};
use crate::error::{Result, SneError};
use crate::optimizer::run_with_affinities;
use crate::out_of_sample::KernelMap;
use crate::types::{
    seeded_rng, DataMatrix, EmbeddingMatrix, Method, OptimizerConfig, ProbabilityKind,
    ProbabilityMatrix, RunTrace, VariantSpec,
};

const LANDMARK_STREAM: u64 = 10;
const WALK_STREAM_BASE: u64 = 1 << 32;

/// Directed graph where every node has exactly `k` distinct out-neighbors,
/// none of them itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    adjacency: Vec<Vec<usize>>,
    k: usize,
}

impl KnnGraph {
    pub fn from_adjacency(adjacency: Vec<Vec<usize>>) -> Result<Self> {
        let n = adjacency.len();
        let k = adjacency.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(SneError::Config("graph needs at least one edge per node".into()));
        }
        for (u, nbrs) in adjacency.iter().enumerate() {
            if nbrs.len() != k {
                return Err(SneError::Config(format!(
                    "node {u} has {} neighbors, expected {k}",
                    nbrs.len()
                )));
            }
            for (a, &v) in nbrs.iter().enumerate() {
                if v >= n || v == u || nbrs[..a].contains(&v) {
                    return Err(SneError::Config(format!("node {u} has invalid neighbor {v}")));
                }
            }
        }
        Ok(Self { adjacency, k })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }
}

/// `m` distinct indices drawn uniformly without replacement, sorted.
pub fn sample_landmarks(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m < 2 || m > n {
        return Err(SneError::Config(format!("landmark count must lie in [2, {n}], got {m}")));
    }
    let mut rng = seeded_rng(seed, LANDMARK_STREAM);
    let mut idx = sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Exact k nearest neighbors by brute force; ties go to the lower index.
pub fn build_knn(data: &DataMatrix, k: usize) -> Result<KnnGraph> {
    let n = data.n();
    if k == 0 || k >= n {
        return Err(SneError::Config(format!("k must lie in [1, {}], got {k}", n - 1)));
    }
    let dist = pairwise_sq_distances(data);
    let adjacency = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = dist.values().row(i);
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            order.truncate(k);
            order
        })
        .collect();
    KnnGraph::from_adjacency(adjacency)
}

/// Random-walk estimate of landmark-to-landmark neighbor probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkEstimate {
    pub landmarks: Vec<usize>,
    pub conditional: ProbabilityMatrix,
    pub completed: Vec<usize>,
}

/// For each landmark, run `walks_per_landmark` walks along uniformly chosen
/// out-edges, each ending at the first landmark other than its start. Walks
/// longer than `max_steps` are dropped from both numerator and denominator.
pub fn random_walk_affinities(
    graph: &KnnGraph,
    landmarks: &[usize],
    walks_per_landmark: usize,
    max_steps: usize,
    seed: u64,
) -> Result<WalkEstimate> {
    let n = graph.n();
    let m = landmarks.len();
    if m < 2 {
        return Err(SneError::Config("need at least two landmarks".into()));
    }
    if walks_per_landmark == 0 {
        return Err(SneError::Config("need at least one walk per landmark".into()));
    }
    let mut position = vec![None; n];
    for (k, &l) in landmarks.iter().enumerate() {
        if l >= n || position[l].is_some() {
            return Err(SneError::Config(format!("invalid or repeated landmark {l}")));
        }
        position[l] = Some(k);
    }

    let rows: Vec<(Vec<usize>, usize)> = landmarks
        .par_iter()
        .enumerate()
        .map(|(start_pos, &start)| {
            let mut rng = seeded_rng(seed, WALK_STREAM_BASE + start as u64);
            let mut credits = vec![0usize; m];
            let mut completed = 0;
            for _ in 0..walks_per_landmark {
                let mut u = start;
                for _ in 0..max_steps {
                    let nbrs = graph.neighbors(u);
                    u = nbrs[rng.random_range(0..nbrs.len())];
                    match position[u] {
                        Some(k) if k != start_pos => {
                            credits[k] += 1;
                            completed += 1;
                            break;
                        }
                        _ => {}
                    }
                }
            }
            (credits, completed)
        })
        .collect();

    let mut values = Array2::zeros((m, m));
    let mut completed = Vec::with_capacity(m);
    for (i, (credits, done)) in rows.into_iter().enumerate() {
        if done == 0 {
            return Err(SneError::DisconnectedLandmark { landmark: landmarks[i] });
        }
        for (j, c) in credits.into_iter().enumerate() {
            values[[i, j]] = c as f64 / done as f64;
        }
        completed.push(done);
    }
    Ok(WalkEstimate {
        landmarks: landmarks.to_vec(),
        conditional: ProbabilityMatrix::new(values, ProbabilityKind::Conditional)?,
        completed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkParams {
    pub landmarks: usize,
    pub k: usize,
    pub walks_per_landmark: usize,
    /// Defaults to `10 * n` when `None`.
    pub max_steps: Option<usize>,
    pub gamma: f64,
}

impl LandmarkParams {
    pub fn new(landmarks: usize) -> Self {
        Self {
            landmarks,
            k: 20,
            walks_per_landmark: 10_000,
            max_steps: None,
            gamma: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LandmarkEmbedding {
    pub landmarks: Vec<usize>,
    pub landmark_embedding: EmbeddingMatrix,
    /// All `n` points; landmark rows equal their optimized positions.
    pub full_embedding: EmbeddingMatrix,
    pub walks: WalkEstimate,
    pub trace: RunTrace,
    pub kernel_map: Option<KernelMap>,
}

pub fn landmark_embed(
    data: &DataMatrix,
    params: &LandmarkParams,
    variant: &VariantSpec,
    out_dims: usize,
    config: &OptimizerConfig,
) -> Result<LandmarkEmbedding> {
    if !matches!(variant.method(), Method::Tsne | Method::TsneGeneralDof) {
        return Err(SneError::Config(format!(
            "random-walk landmarks support tsne and tsne-gdof, not {}",
            variant.method()
        )));
    }
    let n = data.n();
    let landmarks = sample_landmarks(n, params.landmarks, config.seed)?;
    let graph = build_knn(data, params.k.min(n - 1))?;
    let max_steps = params.max_steps.unwrap_or(10 * n);
    let walks = random_walk_affinities(
        &graph,
        &landmarks,
        params.walks_per_landmark,
        max_steps,
        config.seed,
    )?;
    let p = joint_symmetric(&walks.conditional)?;
    let (landmark_embedding, trace) = run_with_affinities(&p, variant, out_dims, config)?;

    let is_landmark = {
        let mut v = vec![false; n];
        landmarks.iter().for_each(|&l| v[l] = true);
        v
    };
    let others: Vec<usize> = (0..n).filter(|&i| !is_landmark[i]).collect();
    let mut full = Array2::zeros((n, out_dims));
    for (row, &l) in landmarks.iter().enumerate() {
        full.row_mut(l).assign(&landmark_embedding.points().row(row));
    }
    let kernel_map = if others.is_empty() {
        None
    } else {
        let train = DataMatrix::new(data.select(&landmarks))?;
        let map = KernelMap::fit(&train, &landmark_embedding, params.gamma)?;
        let placed = map.transform(&data.points().select(Axis(0), &others))?;
        for (row, &i) in others.iter().enumerate() {
            full.row_mut(i).assign(&placed.points().row(row));
        }
        Some(map)
    };
    Ok(LandmarkEmbedding {
        landmarks,
        landmark_embedding,
        full_embedding: EmbeddingMatrix::new(full)?,
        walks,
        trace,
        kernel_map,
    })
}
