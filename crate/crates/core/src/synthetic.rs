//! Seeded synthetic data for demos and tests.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::types::{seeded_rng, DataMatrix};

const SYNTHETIC_STREAM: u64 = 20;

/// Two unit-variance Gaussian clusters in `dims` dimensions whose centers lie
/// `separation` apart along the first axis. The first `per_cluster` rows are
/// cluster "a", the rest cluster "b".
pub fn two_clusters(per_cluster: usize, dims: usize, separation: f64, seed: u64) -> (DataMatrix, Vec<String>) {
    let mut rng = seeded_rng(seed, SYNTHETIC_STREAM);
    let n = 2 * per_cluster;
    let points = Array2::from_shape_fn((n, dims.max(1)), |(i, c)| {
        let center = if c == 0 {
            if i < per_cluster { -separation / 2.0 } else { separation / 2.0 }
        } else {
            0.0
        };
        center + rng.sample::<f64, _>(StandardNormal)
    });
    let labels = (0..n)
        .map(|i| if i < per_cluster { "a" } else { "b" }.to_string())
        .collect();
    (DataMatrix::new(points).expect("finite synthetic data"), labels)
}

/// Fraction of points closer to their own cluster's centroid than to the
/// other one, plus the ratio of inter-centroid distance to mean
/// intra-cluster radius. `labels` must contain exactly two distinct values.
pub fn cluster_separation(points: &Array2<f64>, labels: &[String]) -> (f64, f64) {
    let first = &labels[0];
    let in_a: Vec<bool> = labels.iter().map(|l| l == first).collect();
    let centroid = |want: bool| {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| in_a[i] == want).collect();
        points.select(ndarray::Axis(0), &rows).mean_axis(ndarray::Axis(0)).expect("non-empty cluster")
    };
    let (ca, cb) = (centroid(true), centroid(false));
    let dist = |p: ndarray::ArrayView1<f64>, c: &ndarray::Array1<f64>| {
        p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let mut correct = 0usize;
    let mut radius = 0.0;
    for (i, row) in points.rows().into_iter().enumerate() {
        let (own, other) = if in_a[i] { (&ca, &cb) } else { (&cb, &ca) };
        let d_own = dist(row, own);
        radius += d_own;
        if d_own < dist(row, other) {
            correct += 1;
        }
    }
    let n = labels.len() as f64;
    let gap = dist(ca.view(), &cb);
    (correct as f64 / n, gap / (radius / n))
}
