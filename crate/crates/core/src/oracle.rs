//! Brute-force reference computations used to check the main code paths.
//!
//! Nothing here shares code with the affinity, kernel or random-walk modules:
//! affinities are recomputed from their textbook formulas with plain loops,
//! gradients come from central differences, and walk estimates are compared
//! against an exact absorbing Markov chain solve.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::affinity::{input_affinities, BandwidthSpec};
use crate::error::{Result, SneError};
use crate::gradient::{grad_dof, gradient};
use crate::kernel::embedding_affinities;
use crate::landmark::KnnGraph;
use crate::types::{seeded_rng, DataMatrix, EmbeddingMatrix, Method, ProbabilityMatrix, VariantSpec};

/// Central-difference step used by the gradient checks.
pub const FD_STEP: f64 = 1e-5;
/// Step in the degrees of freedom for the δ-gradient check.
pub const DOF_FD_STEP: f64 = 1e-4;
/// Below this magnitude the finite-difference δ-gradient has no reliable sign.
pub const DOF_SIGN_FLOOR: f64 = 1e-6;

const INSTANCE_DATA_STREAM: u64 = 30;
const INSTANCE_EMBEDDING_STREAM: u64 = 31;
const INSTANCE_INPUT_DIMS: usize = 5;

/// Central-difference gradient of `cost` at `y`.
pub fn fd_gradient<F>(cost: F, y: &Array2<f64>, step: f64) -> Result<Array2<f64>>
where
    F: Fn(&Array2<f64>) -> f64,
{
    if !(step > 0.0) {
        return Err(SneError::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let mut probe = y.clone();
    let mut grad = Array2::zeros(y.dim());
    for ((i, j), g) in grad.indexed_iter_mut() {
        let orig = probe[[i, j]];
        probe[[i, j]] = orig + step;
        let up = cost(&probe);
        probe[[i, j]] = orig - step;
        let down = cost(&probe);
        probe[[i, j]] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(SneError::Numeric(format!("cost not finite around coordinate ({i}, {j})")));
        }
        *g = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Max over coordinates of `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn max_relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Array2<f64>,
    pub numeric: Array2<f64>,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn new(analytic: Array2<f64>, numeric: Array2<f64>, threshold: f64) -> Self {
        let max_rel_error = max_relative_error(&analytic, &numeric);
        Self {
            analytic,
            numeric,
            max_rel_error,
            threshold,
            passed: max_rel_error < threshold,
        }
    }
}

/// A random gradient-check instance: input affinities of `n` Gaussian points
/// in five dimensions (fixed unit bandwidth, data std 0.5) and a standard
/// normal `n × h` embedding.
pub fn random_instance(
    method: Method,
    n: usize,
    h: usize,
    seed: u64,
) -> Result<(ProbabilityMatrix, EmbeddingMatrix)> {
    let mut rng = seeded_rng(seed, INSTANCE_DATA_STREAM);
    let data = DataMatrix::new(Array2::from_shape_fn((n, INSTANCE_INPUT_DIMS), |_| {
        0.5 * rng.sample::<f64, _>(StandardNormal)
    }))?;
    let p = input_affinities(&data, method, &BandwidthSpec::fixed(1.0))?;
    let mut rng = seeded_rng(seed, INSTANCE_EMBEDDING_STREAM);
    let y = EmbeddingMatrix::new(Array2::from_shape_fn((n, h), |_| rng.sample::<f64, _>(StandardNormal)))?;
    Ok((p, y))
}

/// Compares the analytic y-gradient of `variant` against central differences
/// of the unstabilized reference cost. `scale` multiplies the analytic side
/// and exists only so callers can run a negative control.
pub fn check_gradient(
    variant: &VariantSpec,
    p: &ProbabilityMatrix,
    y: &EmbeddingMatrix,
    threshold: f64,
    scale: f64,
) -> Result<GradCheckReport> {
    let q = embedding_affinities(y, variant)?;
    let analytic = gradient(variant, y, p.values(), q.values())?.into_inner() * scale;
    let (method, dof) = (variant.method(), variant.dof() as f64);
    let numeric = fd_gradient(
        |probe| reference_cost(p.values(), &reference_q(probe, method, dof)),
        y.points(),
        FD_STEP,
    )?;
    Ok(GradCheckReport::new(analytic, numeric, threshold))
}

/// Outcome of comparing the analytic δ-gradient with a finite difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofCheck {
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic - numeric|`.
    pub residual: f64,
    /// Whether `|numeric|` was large enough for its sign to count.
    pub sign_checked: bool,
    /// True when unchecked or when the signs agree.
    pub sign_agrees: bool,
}

pub fn check_dof_gradient(p: &ProbabilityMatrix, y: &EmbeddingMatrix, dof: u32) -> Result<DofCheck> {
    let variant = VariantSpec::new(Method::TsneGeneralDof, dof)?;
    let q = embedding_affinities(y, &variant)?;
    let analytic = grad_dof(y, p.values(), q.values(), dof as f64)?;
    let cost = |d: f64| reference_cost(p.values(), &reference_q(y.points(), Method::TsneGeneralDof, d));
    let d = dof as f64;
    let numeric = (cost(d + DOF_FD_STEP) - cost(d - DOF_FD_STEP)) / (2.0 * DOF_FD_STEP);
    if !numeric.is_finite() {
        return Err(SneError::Numeric("finite-difference dof gradient is not finite".into()));
    }
    let sign_checked = numeric.abs() > DOF_SIGN_FLOOR;
    Ok(DofCheck {
        analytic,
        numeric,
        residual: (analytic - numeric).abs(),
        sign_checked,
        sign_agrees: !sign_checked || analytic.signum() == numeric.signum(),
    })
}

/// Embedding affinities straight from their defining formulas, without any
/// stabilization. `dof` may be fractional; it only matters for the
/// general-dof method.
#[allow(clippy::needless_range_loop)]
pub fn reference_q(y: &Array2<f64>, method: Method, dof: f64) -> Array2<f64> {
    let n = y.nrows();
    let mut z2 = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..y.ncols() {
                z2[i][j] += (y[[i, k]] - y[[j, k]]).powi(2);
            }
        }
    }
    let kernel = |z: f64| match method {
        Method::Sne | Method::SymmetricSne => (-z).exp(),
        Method::Tsne => 1.0 / (1.0 + z),
        Method::TsneGeneralDof => (1.0 + z / dof).powf(-(dof + 1.0) / 2.0),
    };
    let mut q = Array2::zeros((n, n));
    if method == Method::Sne {
        for i in 0..n {
            let mut denom = 0.0;
            for k in 0..n {
                if k != i {
                    denom += kernel(z2[i][k]);
                }
            }
            for j in 0..n {
                if j != i {
                    q[[i, j]] = kernel(z2[i][j]) / denom;
                }
            }
        }
    } else {
        let mut denom = 0.0;
        for k in 0..n {
            for l in 0..n {
                if k != l {
                    denom += kernel(z2[k][l]);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    q[[i, j]] = kernel(z2[i][j]) / denom;
                }
            }
        }
    }
    q
}

/// `sum p log(p / q)` over positive `p`, with no flooring.
pub fn reference_cost(p: &Array2<f64>, q: &Array2<f64>) -> f64 {
    let mut c = 0.0;
    for ((i, j), &pij) in p.indexed_iter() {
        if i != j && pij > 0.0 {
            c += pij * (pij / q[[i, j]]).ln();
        }
    }
    c
}

/// Exact probability that a walk leaving landmark `start` along the graph's
/// uniform out-edges is first absorbed at each landmark. Entry `k` of the
/// result corresponds to `landmarks[k]`; the start's own entry is zero.
pub fn absorbing_chain_probs(graph: &KnnGraph, landmarks: &[usize], start: usize) -> Result<Vec<f64>> {
    let n = graph.n();
    let start_pos = landmarks
        .iter()
        .position(|&l| l == start)
        .ok_or_else(|| SneError::Config(format!("{start} is not a landmark")))?;
    let mut absorber = vec![None; n];
    for (k, &l) in landmarks.iter().enumerate() {
        if l != start {
            absorber[l] = Some(k);
        }
    }

    // Transient states reachable from the start.
    let mut index = vec![usize::MAX; n];
    let mut transient = vec![start];
    index[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in graph.neighbors(u) {
            if absorber[v].is_none() && index[v] == usize::MAX {
                index[v] = transient.len();
                transient.push(v);
                queue.push_back(v);
            }
        }
    }

    // Every reachable transient state must be able to reach an absorber.
    let mut escapes = vec![false; transient.len()];
    let mut changed = true;
    while changed {
        changed = false;
        for (t, &u) in transient.iter().enumerate() {
            if escapes[t] {
                continue;
            }
            if graph
                .neighbors(u)
                .iter()
                .any(|&v| absorber[v].is_some() || escapes[index[v]])
            {
                escapes[t] = true;
                changed = true;
            }
        }
    }
    if escapes.iter().any(|e| !e) {
        return Err(SneError::UnreachableLandmark { landmark: start });
    }

    let t = transient.len();
    let m = landmarks.len();
    let mut a = DMatrix::<f64>::identity(t, t);
    let mut b = DMatrix::<f64>::zeros(t, m);
    for (row, &u) in transient.iter().enumerate() {
        let nbrs = graph.neighbors(u);
        let w = 1.0 / nbrs.len() as f64;
        for &v in nbrs {
            match absorber[v] {
                Some(k) => b[(row, k)] += w,
                None => a[(row, index[v])] -= w,
            }
        }
    }
    let h = a
        .lu()
        .solve(&b)
        .ok_or(SneError::UnreachableLandmark { landmark: start })?;
    let mut out: Vec<f64> = (0..m).map(|k| h[(0, k)]).collect();
    out[start_pos] = 0.0;
    Ok(out)
}
