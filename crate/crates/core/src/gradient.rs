//! KL cost and analytic gradients for every method, plus the derivative of
//! the general-dof cost with respect to the degrees of freedom.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::error::{Result, SneError};
use crate::kernel::embedding_sq_distances;
use crate::types::{EmbeddingMatrix, Method, VariantSpec, LOG_FLOOR};

/// `d cost / d y_i` in row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix(Array2<f64>);

impl GradientMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SneError::Numeric("gradient has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn inf_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `sum_{i != j} p_ij log(max(p_ij, floor)) - p_ij log(max(q_ij, floor))`,
/// with zero-probability terms contributing exactly zero.
pub fn safe_kl_cost(p: &Array2<f64>, q: &Array2<f64>) -> f64 {
    let n = p.nrows();
    let mut cost = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let pij = p[[i, j]];
            if pij == 0.0 {
                continue;
            }
            row += pij * pij.max(LOG_FLOOR).ln() - pij * q[[i, j]].max(LOG_FLOOR).ln();
        }
        cost += row;
    }
    cost
}

fn check_shapes(emb: &EmbeddingMatrix, p: &Array2<f64>, q: &Array2<f64>) -> Result<()> {
    let n = emb.n();
    if p.dim() != (n, n) || q.dim() != (n, n) {
        return Err(SneError::Shape(format!(
            "embedding has {n} points but p is {:?} and q is {:?}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(())
}

/// Row `i` = `scale * sum_j pair(i, j) (y_i - y_j)`.
fn pairwise_forces(
    emb: &EmbeddingMatrix,
    scale: f64,
    pair: impl Fn(usize, usize) -> f64 + Sync,
) -> Result<GradientMatrix> {
    let y = emb.points();
    let (n, h) = y.dim();
    let rows: Vec<Array1<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(i);
            let mut acc = Array1::zeros(h);
            for j in (0..n).filter(|&j| j != i) {
                let m = pair(i, j);
                acc.zip_mut_with(&(&yi - &y.row(j)), |a, d| *a += m * d);
            }
            acc * scale
        })
        .collect();
    let mut g = Array2::zeros((n, h));
    for (i, r) in rows.into_iter().enumerate() {
        g.row_mut(i).assign(&r);
    }
    GradientMatrix::new(g)
}

/// Plain SNE: `2 sum_j (p_ij - q_ij + p_ji - q_ji)(y_i - y_j)`.
pub fn grad_sne(emb: &EmbeddingMatrix, p: &Array2<f64>, q: &Array2<f64>) -> Result<GradientMatrix> {
    check_shapes(emb, p, q)?;
    pairwise_forces(emb, 2.0, |i, j| p[[i, j]] - q[[i, j]] + p[[j, i]] - q[[j, i]])
}

/// Symmetric SNE: `4 sum_j (p_ij - q_ij)(y_i - y_j)`.
pub fn grad_symmetric_sne(
    emb: &EmbeddingMatrix,
    p: &Array2<f64>,
    q: &Array2<f64>,
) -> Result<GradientMatrix> {
    check_shapes(emb, p, q)?;
    pairwise_forces(emb, 4.0, |i, j| p[[i, j]] - q[[i, j]])
}

/// t-SNE: `4 sum_j (p_ij - q_ij)(1 + z_ij^2)^-1 (y_i - y_j)`.
pub fn grad_tsne(emb: &EmbeddingMatrix, p: &Array2<f64>, q: &Array2<f64>) -> Result<GradientMatrix> {
    check_shapes(emb, p, q)?;
    let z = embedding_sq_distances(emb);
    pairwise_forces(emb, 4.0, |i, j| (p[[i, j]] - q[[i, j]]) / (1.0 + z[[i, j]]))
}

/// General dof: `((2 dof + 2) / dof) sum_j (p_ij - q_ij)(1 + z_ij^2/dof)^-1 (y_i - y_j)`.
pub fn grad_tsne_general(
    emb: &EmbeddingMatrix,
    p: &Array2<f64>,
    q: &Array2<f64>,
    dof: f64,
) -> Result<GradientMatrix> {
    check_shapes(emb, p, q)?;
    if !(dof >= 1.0) {
        return Err(SneError::Config(format!("degrees of freedom must be >= 1, got {dof}")));
    }
    let z = embedding_sq_distances(emb);
    let scale = (2.0 * dof + 2.0) / dof;
    pairwise_forces(emb, scale, |i, j| {
        (p[[i, j]] - q[[i, j]]) / (1.0 + z[[i, j]] / dof)
    })
}

/// Gradient for `variant`, dispatching on the method.
pub fn gradient(
    variant: &VariantSpec,
    emb: &EmbeddingMatrix,
    p: &Array2<f64>,
    q: &Array2<f64>,
) -> Result<GradientMatrix> {
    match variant.method() {
        Method::Sne => grad_sne(emb, p, q),
        Method::SymmetricSne => grad_symmetric_sne(emb, p, q),
        Method::Tsne => grad_tsne(emb, p, q),
        Method::TsneGeneralDof => grad_tsne_general(emb, p, q, f64::from(variant.dof())),
    }
}

/// `d cost / d dof = sum_{i != j} (-(1+dof) z^2 / (2 dof^2 (1 + z^2/dof)) + log(1 + z^2/dof)/2)(p_ij - q_ij)`.
pub fn grad_dof(emb: &EmbeddingMatrix, p: &Array2<f64>, q: &Array2<f64>, dof: f64) -> Result<f64> {
    check_shapes(emb, p, q)?;
    let z = embedding_sq_distances(emb);
    let n = emb.n();
    let total = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let z2 = z[[i, j]];
                    let t = z2 / dof;
                    let bracket = -(1.0 + dof) * z2 / (2.0 * dof * dof * (1.0 + t)) + 0.5 * t.ln_1p();
                    bracket * (p[[i, j]] - q[[i, j]])
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total)
}

/// Sum of gradient rows; zero for the symmetric methods.
pub fn net_force(grad: &GradientMatrix) -> Array1<f64> {
    grad.values().sum_axis(Axis(0))
}
