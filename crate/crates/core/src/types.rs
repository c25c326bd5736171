//! Shared domain types: input data, embeddings, affinity matrices, variant
//! selection, optimizer configuration and run traces.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SneError};

/// Tolerance for row and total sums of probability matrices.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Floor applied to probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// `n` input points in `d` dimensions, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(Array2<f64>);

impl DataMatrix {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        let (n, d) = points.dim();
        if n < 2 {
            return Err(SneError::Data(format!("need at least 2 points, got {n}")));
        }
        if d < 1 {
            return Err(SneError::Data("points must have at least one dimension".into()));
        }
        check_finite(points.view(), "data")?;
        Ok(Self(points))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_array(rows)?)
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Array2<f64> {
        self.0.select(ndarray::Axis(0), indices)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// `n` embedded points in `h` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Array2<f64>);

impl EmbeddingMatrix {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.ncols() < 1 {
            return Err(SneError::Data("embedding must have at least one dimension".into()));
        }
        check_finite(points.view(), "embedding")?;
        Ok(Self(points))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_array(rows)?)
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(SneError::Data(format!(
            "row {i} has {} values, expected {width}",
            rows[i].len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), width), flat).map_err(|e| SneError::Data(e.to_string()))
}

fn check_finite(m: ArrayView2<f64>, what: &str) -> Result<()> {
    for ((i, j), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(SneError::Data(format!("{what} entry ({i}, {j}) is not finite")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbabilityKind {
    /// Rows are neighbor distributions `p_{j|i}`; each sums to one.
    Conditional,
    /// Per-point embedding distribution of plain SNE; each row sums to one.
    JointAsymmetric,
    /// One distribution over all ordered pairs; symmetric, total sum one.
    JointSymmetric,
}

/// First invariant a candidate probability matrix violates.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotSquare { rows: usize, cols: usize },
    NonFinite { row: usize, col: usize },
    Negative { row: usize, col: usize, value: f64 },
    Diagonal { index: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    TotalSum { sum: f64 },
    Asymmetric { row: usize, col: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotSquare { rows, cols } => write!(f, "square: matrix is {rows}x{cols}"),
            Violation::NonFinite { row, col } => write!(f, "finite: entry ({row}, {col})"),
            Violation::Negative { row, col, value } => {
                write!(f, "non-negative: entry ({row}, {col}) = {value}")
            }
            Violation::Diagonal { index, value } => {
                write!(f, "zero diagonal: entry ({index}, {index}) = {value}")
            }
            Violation::RowSum { row, sum } => write!(f, "row sum: row {row} sums to {sum}"),
            Violation::TotalSum { sum } => write!(f, "total sum: matrix sums to {sum}"),
            Violation::Asymmetric { row, col } => {
                write!(f, "symmetry: entries ({row}, {col}) and ({col}, {row}) differ")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub kind: ProbabilityKind,
    pub violation: Option<Violation>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Check `matrix` against the invariants of `kind` without modifying it.
pub fn validate(matrix: ArrayView2<f64>, kind: ProbabilityKind) -> CheckReport {
    CheckReport {
        kind,
        violation: first_violation(matrix, kind),
    }
}

fn first_violation(m: ArrayView2<f64>, kind: ProbabilityKind) -> Option<Violation> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Some(Violation::NotSquare { rows, cols });
    }
    for ((row, col), &value) in m.indexed_iter() {
        if !value.is_finite() {
            return Some(Violation::NonFinite { row, col });
        }
        if value < 0.0 {
            return Some(Violation::Negative { row, col, value });
        }
    }
    for index in 0..rows {
        let value = m[[index, index]];
        if value != 0.0 {
            return Some(Violation::Diagonal { index, value });
        }
    }
    let row_sums: Vec<f64> = m.rows().into_iter().map(|r| r.sum()).collect();
    match kind {
        ProbabilityKind::Conditional | ProbabilityKind::JointAsymmetric => row_sums
            .iter()
            .enumerate()
            .find(|(_, s)| (**s - 1.0).abs() > PROB_SUM_TOL)
            .map(|(row, &sum)| Violation::RowSum { row, sum }),
        ProbabilityKind::JointSymmetric => {
            let sum: f64 = row_sums.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Some(Violation::TotalSum { sum });
            }
            for row in 0..rows {
                for col in row + 1..cols {
                    if m[[row, col]] != m[[col, row]] {
                        return Some(Violation::Asymmetric { row, col });
                    }
                }
            }
            None
        }
    }
}

/// Square affinity matrix carrying the normalization invariants of its kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    values: Array2<f64>,
    kind: ProbabilityKind,
}

impl ProbabilityMatrix {
    pub fn new(values: Array2<f64>, kind: ProbabilityKind) -> Result<Self> {
        match first_violation(values.view(), kind) {
            None => Ok(Self { values, kind }),
            Some(v) => Err(SneError::Numeric(format!("{kind:?} probability matrix violates {v}"))),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> ProbabilityKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn revalidate(&self) -> CheckReport {
        validate(self.values.view(), self.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Sne,
    SymmetricSne,
    Tsne,
    TsneGeneralDof,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Sne,
        Method::SymmetricSne,
        Method::Tsne,
        Method::TsneGeneralDof,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sne => "sne",
            Method::SymmetricSne => "ssne",
            Method::Tsne => "tsne",
            Method::TsneGeneralDof => "tsne-gdof",
        }
    }

    /// Kind of input affinities the method's cost expects.
    pub fn input_kind(self) -> ProbabilityKind {
        match self {
            Method::Sne => ProbabilityKind::Conditional,
            _ => ProbabilityKind::JointSymmetric,
        }
    }

    /// Kind of embedding affinities the method produces.
    pub fn embedding_kind(self) -> ProbabilityKind {
        match self {
            Method::Sne => ProbabilityKind::JointAsymmetric,
            _ => ProbabilityKind::JointSymmetric,
        }
    }

    pub fn is_symmetric(self) -> bool {
        self != Method::Sne
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sne" => Ok(Method::Sne),
            "ssne" | "symmetric-sne" => Ok(Method::SymmetricSne),
            "tsne" => Ok(Method::Tsne),
            "tsne-gdof" | "tsne-general-dof" => Ok(Method::TsneGeneralDof),
            other => Err(SneError::Config(format!("unknown variant '{other}'"))),
        }
    }
}

/// Method plus Student-t degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    method: Method,
    dof: u32,
}

impl VariantSpec {
    /// `dof` is only kept for the general-dof method; t-SNE is pinned to 1.
    pub fn new(method: Method, dof: u32) -> Result<Self> {
        if dof < 1 {
            return Err(SneError::Config("degrees of freedom must be >= 1".into()));
        }
        let dof = if method == Method::TsneGeneralDof { dof } else { 1 };
        Ok(Self { method, dof })
    }

    /// Default variant for an `h`-dimensional embedding: dof = max(1, h - 1).
    pub fn for_dims(method: Method, h: usize) -> Self {
        let dof = h.saturating_sub(1).max(1) as u32;
        Self::new(method, dof).expect("dof >= 1")
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn dof(&self) -> u32 {
        self.dof
    }

    pub fn with_dof(self, dof: u32) -> Result<Self> {
        Self::new(self.method, dof)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub momentum_switch_iter: usize,
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub use_momentum: bool,
    pub jitter_std: f64,
    pub jitter_iters: usize,
    pub exaggeration_factor: f64,
    pub exaggeration_iters: usize,
    /// Alternate sign-of-gradient updates of the degrees of freedom
    /// (general-dof method only). When false the initial dof is kept.
    pub adapt_dof: bool,
    pub seed: u64,
    pub convergence_tol: f64,
}

impl OptimizerConfig {
    /// Per-method defaults: learning rates 0.1/100/100/100, momentum for the
    /// Gaussian-kernel methods, jitter for SNE, early exaggeration for t-SNE.
    pub fn for_method(method: Method) -> Self {
        let base = Self {
            learning_rate: 100.0,
            max_iters: 160,
            momentum_switch_iter: 250,
            momentum_early: 0.5,
            momentum_late: 0.8,
            use_momentum: false,
            jitter_std: 0.1,
            jitter_iters: 0,
            exaggeration_factor: 4.0,
            exaggeration_iters: 10,
            adapt_dof: true,
            seed: 0,
            convergence_tol: 0.0,
        };
        match method {
            Method::Sne => Self {
                learning_rate: 0.1,
                use_momentum: true,
                jitter_iters: 50,
                exaggeration_iters: 0,
                ..base
            },
            Method::SymmetricSne => Self {
                use_momentum: true,
                exaggeration_iters: 0,
                ..base
            },
            Method::Tsne | Method::TsneGeneralDof => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SneError::Config(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        for (name, m) in [("early", self.momentum_early), ("late", self.momentum_late)] {
            if !(0.0..1.0).contains(&m) {
                return Err(SneError::Config(format!("{name} momentum must lie in [0, 1)")));
            }
        }
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return bad("jitter std must be non-negative");
        }
        if !(self.exaggeration_factor >= 1.0 && self.exaggeration_factor.is_finite()) {
            return bad("exaggeration factor must be >= 1");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence tolerance must be non-negative");
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::for_method(Method::Tsne)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Safe KL cost against the unexaggerated input affinities.
    pub cost: f64,
    pub grad_norm: f64,
    pub dof: u32,
    pub exaggeration: bool,
    pub jitter: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }
}

/// Deterministic generator for `(seed, stream)`. Fixed to ChaCha8 so traces
/// are reproducible across runs and platforms.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
