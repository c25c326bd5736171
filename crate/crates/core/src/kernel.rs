//! Embedding-space affinities `q` for every method.

use ndarray::Array2;

use crate::error::{Result, SneError};
use crate::types::{EmbeddingMatrix, Method, ProbabilityMatrix, VariantSpec};

/// Squared embedding distances `z_ij^2 = ||y_i - y_j||^2`.
pub fn embedding_sq_distances(emb: &EmbeddingMatrix) -> Array2<f64> {
    let y = emb.points();
    let n = emb.n();
    let mut z = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = y
                .row(i)
                .iter()
                .zip(y.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            z[[i, j]] = v;
            z[[j, i]] = v;
        }
    }
    z
}

/// Unnormalized Student-t weight `(1 + z^2/dof)^(-(dof+1)/2)`.
#[inline]
pub fn student_t_weight(z2: f64, dof: f64) -> f64 {
    (1.0 + z2 / dof).powf(-(dof + 1.0) / 2.0)
}

pub fn embedding_affinities(emb: &EmbeddingMatrix, variant: &VariantSpec) -> Result<ProbabilityMatrix> {
    let z = embedding_sq_distances(emb);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(SneError::Numeric("embedding distances are not finite".into()));
    }
    let values = match variant.method() {
        Method::Sne => row_softmax(&z),
        Method::SymmetricSne => {
            let n = z.nrows();
            let min_z = off_diagonal(&z).fold(f64::INFINITY, f64::min);
            global_normalize(&z, |z2| (-(z2 - min_z)).exp(), n)
        }
        Method::Tsne => global_normalize(&z, |z2| 1.0 / (1.0 + z2), z.nrows()),
        Method::TsneGeneralDof => {
            let dof = f64::from(variant.dof());
            global_normalize(&z, |z2| student_t_weight(z2, dof), z.nrows())
        }
    }?;
    ProbabilityMatrix::new(values, variant.method().embedding_kind())
}

fn off_diagonal(z: &Array2<f64>) -> impl Iterator<Item = f64> + '_ {
    z.indexed_iter()
        .filter(|((i, j), _)| i != j)
        .map(|(_, &v)| v)
}

fn row_softmax(z: &Array2<f64>) -> Result<Array2<f64>> {
    let n = z.nrows();
    let mut q = Array2::zeros((n, n));
    for i in 0..n {
        let min_z = (0..n)
            .filter(|&j| j != i)
            .map(|j| z[[i, j]])
            .fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let w = (-(z[[i, j]] - min_z)).exp();
            q[[i, j]] = w;
            total += w;
        }
        if !(total > 0.0) {
            return Err(SneError::Numeric(format!("embedding row {i} has no mass")));
        }
        q.row_mut(i).mapv_inplace(|v| v / total);
    }
    Ok(q)
}

fn global_normalize(z: &Array2<f64>, weight: impl Fn(f64) -> f64, n: usize) -> Result<Array2<f64>> {
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = weight(z[[i, j]]);
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
    let total: f64 = w.rows().into_iter().map(|r| r.sum()).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(SneError::Numeric("embedding affinities have no mass".into()));
    }
    w.mapv_inplace(|v| v / total);
    Ok(w)
}
