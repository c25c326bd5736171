//! Kernel-regression map from input space to an existing embedding, used to
//! place points that were not part of the optimization.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Result, SneError};
use crate::types::{DataMatrix, EmbeddingMatrix};

pub const DEFAULT_GAMMA: f64 = 0.5;

/// `sigma_j = gamma * min_{i != j} ||x_j - x_i||`.
pub fn kernel_widths(data: &DataMatrix, gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(SneError::Config(format!("gamma must be positive, got {gamma}")));
    }
    let x = data.points();
    let n = data.n();
    (0..n)
        .map(|j| {
            let (nearest, d2) = (0..n)
                .filter(|&i| i != j)
                .map(|i| (i, sq_dist(x.row(j), x.row(i))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("n >= 2");
            if d2 == 0.0 {
                let (first, second) = (j.min(nearest), j.max(nearest));
                return Err(SneError::DuplicatePoints { first, second });
            }
            Ok(gamma * d2.sqrt())
        })
        .collect()
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Row-normalized Gaussian kernel between query rows and training rows:
/// entry `(i, j)` is `exp(-||q_i - x_j||^2 / (2 sigma_j^2))` over its row sum.
pub fn build_kernel_rows(
    queries: ArrayView2<f64>,
    training: ArrayView2<f64>,
    widths: &[f64],
) -> Result<Array2<f64>> {
    if queries.ncols() != training.ncols() {
        return Err(SneError::Shape(format!(
            "queries have {} dimensions, training data has {}",
            queries.ncols(),
            training.ncols()
        )));
    }
    if widths.len() != training.nrows() {
        return Err(SneError::Shape(format!(
            "{} widths for {} training points",
            widths.len(),
            training.nrows()
        )));
    }
    let n = training.nrows();
    let rows: Vec<Vec<f64>> = (0..queries.nrows())
        .into_par_iter()
        .map(|i| {
            let q = queries.row(i);
            let logits: Vec<f64> = (0..n)
                .map(|j| -sq_dist(q, training.row(j)) / (2.0 * widths[j] * widths[j]))
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|v| v / total).collect()
        })
        .collect();
    let mut k = Array2::zeros((queries.nrows(), n));
    for (i, r) in rows.into_iter().enumerate() {
        for (j, v) in r.into_iter().enumerate() {
            k[[i, j]] = v;
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMap {
    training: Array2<f64>,
    coefficients: Array2<f64>,
    widths: Vec<f64>,
    gamma: f64,
    rank: usize,
}

impl KernelMap {
    /// Least-squares fit of `min ||Y - K A||_F` with widths from `gamma`.
    pub fn fit(training: &DataMatrix, embedding: &EmbeddingMatrix, gamma: f64) -> Result<Self> {
        let widths = kernel_widths(training, gamma)?;
        let mut map = Self::fit_with_widths(training.points().clone(), embedding, widths)?;
        map.gamma = gamma;
        Ok(map)
    }

    /// Fit with explicit per-point widths. Solved through an SVD; when `K`
    /// is rank deficient the minimum-norm solution is returned and
    /// [`KernelMap::is_full_rank`] reports false.
    pub fn fit_with_widths(
        training: Array2<f64>,
        embedding: &EmbeddingMatrix,
        widths: Vec<f64>,
    ) -> Result<Self> {
        let n = training.nrows();
        if embedding.n() != n {
            return Err(SneError::Shape(format!(
                "{} embedded rows for {n} training points",
                embedding.n()
            )));
        }
        if widths.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(SneError::Config("kernel widths must be positive".into()));
        }
        let k = build_kernel_rows(training.view(), training.view(), &widths)?;
        let h = embedding.dim();
        let k_na = DMatrix::from_fn(n, n, |i, j| k[[i, j]]);
        let y_na = DMatrix::from_fn(n, h, |i, j| embedding.points()[[i, j]]);
        let svd = k_na.svd(true, true);
        let max_sv = svd.singular_values.max();
        let cutoff = max_sv * n as f64 * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let a = svd
            .solve(&y_na, cutoff)
            .map_err(|e| SneError::Numeric(format!("least-squares solve failed: {e}")))?;
        let coefficients = Array2::from_shape_fn((n, h), |(i, j)| a[(i, j)]);
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(SneError::Numeric("kernel map coefficients are not finite".into()));
        }
        Ok(Self {
            training,
            coefficients,
            widths,
            gamma: f64::NAN,
            rank,
        })
    }

    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// NaN when fitted with explicit widths.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.training.nrows()
    }

    /// Kernel rows of `points` against the training set.
    pub fn kernel_rows(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        build_kernel_rows(points, self.training.view(), &self.widths)
    }

    /// `Y_t = K_t A`.
    pub fn transform(&self, points: &Array2<f64>) -> Result<EmbeddingMatrix> {
        let k = self.kernel_rows(points.view())?;
        EmbeddingMatrix::new(k.dot(&self.coefficients))
    }
}
