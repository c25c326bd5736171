//! Input-space affinities: squared distances, Gaussian bandwidth search and
//! conditional / symmetrized neighbor probabilities.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Result, SneError};
use crate::types::{DataMatrix, Method, ProbabilityKind, ProbabilityMatrix};

/// Raw squared Euclidean distances `||x_i - x_j||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(Array2<f64>);

impl DistanceMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }
}

/// Perplexity target used when perplexity mode is requested without a value.
pub const DEFAULT_PERPLEXITY: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Same variance `sigma^2` for every point.
    Fixed(f64),
    /// Per-point variance chosen so that `2^H(row)` hits the target.
    Perplexity(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthSpec {
    pub mode: Bandwidth,
    pub search_iters: usize,
    pub search_tol: f64,
}

impl BandwidthSpec {
    pub fn fixed(sigma_sq: f64) -> Self {
        Self {
            mode: Bandwidth::Fixed(sigma_sq),
            ..Self::default()
        }
    }

    pub fn perplexity(target: f64) -> Self {
        Self {
            mode: Bandwidth::Perplexity(target),
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self.mode {
            Bandwidth::Fixed(s) if !(s > 0.0 && s.is_finite()) => {
                Err(SneError::Config(format!("sigma^2 must be positive, got {s}")))
            }
            Bandwidth::Perplexity(p) if !(p > 1.0 && p <= (n - 1) as f64) => Err(SneError::Config(
                format!("perplexity must lie in (1, {}], got {p}", n - 1),
            )),
            _ if self.search_iters == 0 => {
                Err(SneError::Config("bandwidth search needs at least one iteration".into()))
            }
            _ => Ok(()),
        }
    }
}

impl Default for BandwidthSpec {
    fn default() -> Self {
        Self {
            mode: Bandwidth::Fixed(1.0),
            search_iters: 50,
            search_tol: 1e-5,
        }
    }
}

pub fn pairwise_sq_distances(data: &DataMatrix) -> DistanceMatrix {
    let x = data.points();
    let n = data.n();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    DistanceMatrix(d)
}

/// Gaussian neighbor distribution of one point:
/// `row[j] = exp(-dist[j] / (2 sigma^2)) / sum_{k != i} exp(-dist[k] / (2 sigma^2))`.
pub fn conditional_row(dist_row: &[f64], self_index: usize, sigma_sq: f64) -> Result<Vec<f64>> {
    if !(sigma_sq > 0.0) {
        return Err(SneError::Config(format!("sigma^2 must be positive, got {sigma_sq}")));
    }
    let scale = 1.0 / (2.0 * sigma_sq);
    let max_exp = dist_row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != self_index)
        .map(|(_, &d)| -d * scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut row: Vec<f64> = dist_row
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            if j == self_index {
                0.0
            } else {
                (-d * scale - max_exp).exp()
            }
        })
        .collect();
    let total: f64 = row.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(SneError::Numeric(format!(
            "conditional row {self_index} has no positive mass"
        )));
    }
    row.iter_mut().for_each(|v| *v /= total);
    Ok(row)
}

/// Shannon entropy in bits over the nonzero entries.
pub fn entropy_bits(row: &[f64]) -> f64 {
    row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

pub fn perplexity_of(row: &[f64]) -> f64 {
    entropy_bits(row).exp2()
}

const LOG_S2_LIMIT: f64 = 700.0;

/// Bisection on `ln sigma^2` for the variance whose conditional row has the
/// requested perplexity.
pub fn search_bandwidth(
    dist_row: &[f64],
    self_index: usize,
    target_perplexity: f64,
    search_iters: usize,
    search_tol: f64,
) -> Result<f64> {
    let perp = |log_s2: f64| -> Result<f64> {
        Ok(perplexity_of(&conditional_row(dist_row, self_index, log_s2.exp())?))
    };
    let unreachable = |achieved: f64| SneError::PerplexityUnreachable {
        row: self_index,
        target: target_perplexity,
        achieved,
    };

    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    let (mut p_lo, mut p_hi) = (perp(lo)?, perp(hi)?);
    // Perplexity is non-decreasing in sigma^2; widen until the target is straddled.
    let mut expansions = 0;
    while (p_lo > target_perplexity + search_tol || p_hi < target_perplexity - search_tol)
        && expansions < 8
    {
        // Stay inside the range where exp() neither underflows nor overflows.
        let width = hi - lo;
        let (new_lo, new_hi) = ((lo - width).max(-LOG_S2_LIMIT), (hi + width).min(LOG_S2_LIMIT));
        if new_lo == lo && new_hi == hi {
            break;
        }
        if p_lo > target_perplexity + search_tol {
            lo = new_lo;
            p_lo = perp(lo)?;
        }
        if p_hi < target_perplexity - search_tol {
            hi = new_hi;
            p_hi = perp(hi)?;
        }
        expansions += 1;
    }
    if (p_lo - target_perplexity).abs() <= search_tol {
        return Ok(lo.exp());
    }
    if (p_hi - target_perplexity).abs() <= search_tol {
        return Ok(hi.exp());
    }
    if p_lo > target_perplexity {
        return Err(unreachable(p_lo));
    }
    if p_hi < target_perplexity {
        return Err(unreachable(p_hi));
    }

    let mut best = (f64::INFINITY, lo);
    for _ in 0..search_iters {
        let mid = 0.5 * (lo + hi);
        let p = perp(mid)?;
        let gap = (p - target_perplexity).abs();
        if gap < best.0 {
            best = (gap, mid);
        }
        if gap <= search_tol {
            break;
        }
        if p < target_perplexity {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 <= search_tol {
        Ok(best.1.exp())
    } else {
        Err(unreachable(perp(best.1)?))
    }
}

/// Conditional matrix `p_{j|i}` plus the per-point variances used.
pub fn conditional_affinities(
    dist: &DistanceMatrix,
    spec: &BandwidthSpec,
) -> Result<(ProbabilityMatrix, Vec<f64>)> {
    let n = dist.n();
    spec.validate(n)?;
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = dist.values().row(i).to_vec();
            let sigma_sq = match spec.mode {
                Bandwidth::Fixed(s) => s,
                Bandwidth::Perplexity(target) => {
                    search_bandwidth(&d, i, target, spec.search_iters, spec.search_tol)?
                }
            };
            Ok((conditional_row(&d, i, sigma_sq)?, sigma_sq))
        })
        .collect::<Result<_>>()?;
    let mut values = Array2::zeros((n, n));
    let mut sigmas = Vec::with_capacity(n);
    for (i, (row, s)) in rows.into_iter().enumerate() {
        values.row_mut(i).assign(&ndarray::Array1::from(row));
        sigmas.push(s);
    }
    Ok((ProbabilityMatrix::new(values, ProbabilityKind::Conditional)?, sigmas))
}

/// Outlier-safe symmetrization `p_ij = (p_{i|j} + p_{j|i}) / (2n)`.
pub fn joint_symmetric(conditional: &ProbabilityMatrix) -> Result<ProbabilityMatrix> {
    if conditional.kind() != ProbabilityKind::Conditional {
        return Err(SneError::Config(format!(
            "symmetrization expects a conditional matrix, got {:?}",
            conditional.kind()
        )));
    }
    let c = conditional.values();
    let n = conditional.n();
    let denom = 2.0 * n as f64;
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = (c[[i, j]] + c[[j, i]]) / denom;
            p[[i, j]] = v;
            p[[j, i]] = v;
        }
    }
    ProbabilityMatrix::new(p, ProbabilityKind::JointSymmetric)
}

/// Input affinities in the form `method`'s cost consumes: conditional rows
/// for SNE, symmetrized joint probabilities otherwise.
pub fn input_affinities(
    data: &DataMatrix,
    method: Method,
    spec: &BandwidthSpec,
) -> Result<ProbabilityMatrix> {
    let (conditional, _) = conditional_affinities(&pairwise_sq_distances(data), spec)?;
    match method {
        Method::Sne => Ok(conditional),
        _ => joint_symmetric(&conditional),
    }
}
